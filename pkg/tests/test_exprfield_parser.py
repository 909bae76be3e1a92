import math

import numpy as np
import pytest

from domains.exprfield.models import Domain, DomainError, render
from domains.exprfield.parser import (
    ArityError,
    ExpressionSyntaxError,
    UnknownIdentifierError,
    VariableIndexError,
    tokenize,
)
from domains.exprfield.services import (
    EvaluationDomainError,
    compose_field,
    eval_jet2,
    eval_map_jet,
    fix_parameter,
    make_field,
    make_map,
    parse,
)


class TestTokenize:
    """토큰화 테스트"""

    def test_double_star_is_power(self):
        """** 는 ^ 로 정규화"""
        kinds = [t.text for t in tokenize("x1**2")]
        assert kinds == ["x1", "^", "2", ""]

    def test_scientific_literal(self):
        """지수 표기 숫자"""
        tokens = tokenize("1.5e-3*x1")
        assert tokens[0].kind == "num"
        assert tokens[0].text == "1.5e-3"

    def test_bad_character_position(self):
        """허용되지 않는 문자는 위치와 함께 거부"""
        with pytest.raises(ExpressionSyntaxError) as ei:
            tokenize("x1 + $")
        assert ei.value.detail["position"] == 5


class TestParse:
    """식 파싱 테스트"""

    def test_precedence(self):
        """-x^2 는 -(x^2), 곱셈이 덧셈보다 먼저"""
        e = parse("1 + 2*x1 - x1^2", 1)
        assert e.program.value([3.0]) == pytest.approx(1 + 6 - 9)
        assert parse("-x1^2", 1).program.value([3.0]) == pytest.approx(-9.0)

    def test_pi_and_functions(self):
        """pi 상수와 sin/cos/exp/tanh"""
        e = parse("sin(pi*x1) + cos(0) + exp(0) + tanh(0)", 1)
        assert e.program.value([0.5]) == pytest.approx(3.0)

    def test_negative_integer_exponent(self):
        """정수 음수 지수 허용"""
        assert parse("x1^-2", 1).program.value([2.0]) == pytest.approx(0.25)

    def test_fractional_exponent_rejected(self):
        """실수 지수는 문법 오류"""
        with pytest.raises(ExpressionSyntaxError):
            parse("x1^0.5", 1)

    def test_unknown_identifier(self):
        """허용 목록 밖 식별자"""
        with pytest.raises(UnknownIdentifierError) as ei:
            parse("log(x1)", 1)
        assert ei.value.detail["position"] == 0

    def test_variable_out_of_range(self):
        """x3 은 2차원에서 거부"""
        with pytest.raises(VariableIndexError) as ei:
            parse("x1 + x3", 2)
        assert ei.value.detail["position"] == 5
        assert ei.value.detail["dimension"] == 2

    def test_arity(self):
        """함수 인자 개수"""
        with pytest.raises(ArityError):
            parse("sin(x1, x2)", 2)
        with pytest.raises(ArityError):
            parse("cos x1", 1)

    def test_unbalanced_parenthesis(self):
        """닫는 괄호 누락"""
        with pytest.raises(ExpressionSyntaxError) as ei:
            parse("(x1 + 1", 1)
        assert ei.value.stage == "exprfield.parse"

    def test_trailing_token(self):
        """식 뒤에 남은 토큰"""
        with pytest.raises(ExpressionSyntaxError):
            parse("x1 x1", 1)

    def test_render_reparses_to_same_values(self):
        """렌더링 결과를 다시 파싱해도 값이 같음"""
        e = parse("(2 + cos(2*pi*x2))*cos(2*pi*x1) - x1^-1", 2)
        again = parse(render(e.root), 2)
        p = [0.3, 0.7]
        assert again.program.value(p) == pytest.approx(e.program.value(p), rel=1e-14)


class TestJets:
    """값/그래디언트/헤시안 평가 테스트"""

    def test_quadratic_jet(self):
        """x1^2 x2 + 3 x2 의 정확한 미분"""
        v, g, H = eval_jet2(parse("x1^2*x2 + 3*x2", 2), [2.0, -1.0])
        assert v == pytest.approx(-4.0 - 3.0)
        np.testing.assert_allclose(g, [2 * 2.0 * -1.0, 4.0 + 3.0])
        np.testing.assert_allclose(H, [[-2.0, 4.0], [4.0, 0.0]])

    def test_hessian_symmetric_exactly(self):
        """헤시안은 성분 단위로 대칭"""
        _, _, H = eval_jet2(parse("sin(x1*x2) + exp(x1)*tanh(x2)/(1 + x1^2)", 2), [0.3, -0.8])
        assert np.array_equal(H, H.T)

    def test_jet_matches_finite_difference(self):
        """그래디언트가 중심 차분과 일치"""
        e = parse("tanh(x1 - 2*x2)*exp(x2)", 2)
        p = np.array([0.2, 0.1])
        _, g, _ = eval_jet2(e, p)
        h = 1e-6
        fd = [(e.program.value(p + h * d) - e.program.value(p - h * d)) / (2 * h) for d in np.eye(2)]
        np.testing.assert_allclose(g, fd, rtol=1e-6)

    def test_hessian_matches_finite_difference_at_random_points(self):
        """시드 고정 임의 점들에서 헤시안이 그래디언트 중심 차분과 일치"""
        e = parse("sin(x1*x2) + exp(x1)*tanh(x2)/(1 + x1^2) + x2^3", 2)
        rng = np.random.default_rng(7)
        h = 1e-5
        for p in rng.uniform(-0.9, 0.9, size=(6, 2)):
            _, _, H = eval_jet2(e, p)
            fd = np.column_stack(
                [(eval_jet2(e, p + h * d)[1] - eval_jet2(e, p - h * d)[1]) / (2 * h) for d in np.eye(2)]
            )
            np.testing.assert_allclose(H, fd, rtol=1e-5, atol=1e-7)

    def test_power_overflow(self):
        """거듭제곱 오버플로는 파이썬 OverflowError 가 아니라 평가 시점 오류"""
        e = parse("x1^7", 1)
        with pytest.raises(EvaluationDomainError):
            e.program.value([1e300])
        with pytest.raises(EvaluationDomainError):
            eval_jet2(e, [1e300])

    def test_division_by_zero(self):
        """0 으로 나누기는 평가 시점 오류"""
        with pytest.raises(EvaluationDomainError):
            parse("1/x1", 1).program.value([0.0])

    def test_vectorized_many(self):
        """many 는 점별 value 와 같은 값"""
        e = parse("cos(2*pi*x1) + x1", 1)
        pts = np.array([[0.0], [0.25], [0.5]])
        np.testing.assert_allclose(e.program.many(pts), [e.program.value(p) for p in pts])


class TestFieldsAndMaps:
    """스칼라장/사상 구성 테스트"""

    def test_torus_field_is_periodic(self, torus2):
        """토러스 좌표는 평가 전에 환원"""
        f = make_field(torus2, "cos(2*pi*x1) + x2")
        assert f.value([1.25, 0.5]) == pytest.approx(f.value([0.25, 0.5]))

    def test_torus_jet_is_periodic(self, torus2):
        """정수 평행이동한 점의 jet 이 같음"""
        f = make_field(torus2, "cos(2*pi*x1)*sin(2*pi*x2) + 0.3*cos(2*pi*x2)")
        for a, b in zip(f.jet2([0.3, 0.6]), f.jet2([1.3, -0.4])):
            np.testing.assert_allclose(np.asarray(a), np.asarray(b), rtol=1e-12, atol=1e-12)

    def test_dimension_mismatch(self, torus2):
        """식 차원이 도메인과 다르면 거부"""
        from domains.exprfield.models import ScalarField

        with pytest.raises(DomainError):
            ScalarField(torus2, parse("x1", 1))

    def test_map_component_count(self, line, square):
        """성분 수는 타깃 차원"""
        with pytest.raises(DomainError):
            make_map(line, square, ["x1"])

    def test_map_jet_reduces_torus_image(self, circle):
        """토러스 타깃 상은 [0,1) 로, 야코비안은 그대로"""
        h = make_map(circle, circle, ["2*x1"])
        y, J = eval_map_jet(h, [0.75])
        assert y[0] == pytest.approx(0.5)
        assert J[0, 0] == pytest.approx(2.0)

    def test_compose_field(self, line):
        """f∘h 의 값"""
        f = make_field(line, "x1^2")
        h = make_map(line, line, ["x1 - 3"])
        assert compose_field(f, h).value([1.0]) == pytest.approx(4.0)

    def test_fix_parameter(self):
        """마지막 변수를 상수로 고정"""
        e = parse("x1 + x2*x1", 2)
        fixed = fix_parameter(e, 1, 0.5, 1)
        assert fixed.dimension == 1
        assert fixed.program.value([2.0]) == pytest.approx(3.0)

    def test_domain_bounds_validated(self):
        """박스 경계 순서와 차원 범위"""
        with pytest.raises(DomainError):
            Domain.box([[1.0, 0.0]])
        with pytest.raises(DomainError):
            Domain.torus(4)

    def test_torus_displacement_minimum_image(self, torus2):
        """최소 이미지 변위"""
        d = torus2.displacement([0.95, 0.0], [0.05, 0.0])
        assert d[0] == pytest.approx(0.1)
        assert torus2.distance([0.95, 0.0], [0.05, 0.0]) == pytest.approx(0.1)
        assert math.isclose(torus2.reduce([-0.25, 1.5])[0], 0.75)
