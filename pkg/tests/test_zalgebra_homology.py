import numpy as np
import pytest

from domains.zalgebra.matrices import IntMatrix
from domains.zalgebra.models import (
    BoundarySquareError,
    ChainMapError,
    ComplexKind,
    GradedIntMap,
    ShapeMismatchError,
)
from domains.zalgebra.serializers import ChainMapSchema, ComplexSchema
from domains.zalgebra.services import (
    dualize,
    equal_on_homology,
    homology,
    induced_on_homology,
    is_quasi_isomorphism,
    isomorphic_groups,
    mapping_cone,
    regrade,
    require_chain_map,
    verify_chain_map,
)
from domains.zalgebra.snf import smith_normal_form

from tests.factories import circle_complex, make_complex, projective_plane_complex


class TestIntMatrix:
    """정수 행렬 연산 테스트"""

    def test_empty_shapes_survive(self):
        """0행/0열 행렬도 모양 유지"""
        z = IntMatrix.zeros(0, 3)
        assert z.shape == (0, 3)
        assert z.T.shape == (3, 0)
        assert (IntMatrix.zeros(2, 0) @ z).shape == (2, 3)

    def test_det_bareiss(self):
        """정수 행렬식"""
        assert IntMatrix.from_rows([[2, 1], [7, 4]]).det() == 1
        assert IntMatrix.from_rows([[0, 1], [1, 0]]).det() == -1
        assert IntMatrix.from_rows([[1, 2], [2, 4]]).det() == 0
        assert IntMatrix.zeros(0, 0).det() == 1

    def test_first_difference(self):
        """첫 불일치 위치"""
        a = IntMatrix.from_rows([[1, 0], [0, 1]])
        b = IntMatrix.from_rows([[1, 0], [5, 1]])
        assert a.first_difference(b) == (1, 0)
        assert a.first_difference(a) is None


class TestSmithForm:
    """스미스 표준형 테스트"""

    def test_factors_divide(self):
        """불변인자는 d_1 | d_2"""
        snf = smith_normal_form(IntMatrix.from_rows([[2, 4, 4], [-6, 6, 12], [10, -4, -16]]))
        assert snf.invariant_factors == (2, 6, 12)

    def test_unimodular_factorization(self):
        """L·A·R = D, A = U·D·V"""
        A = IntMatrix.from_rows([[3, 0, 2], [1, 4, 1]])
        snf = smith_normal_form(A)
        assert snf.L @ A @ snf.R == snf.D
        assert snf.U @ snf.D @ snf.V == A
        assert abs(snf.L.det()) == 1
        assert abs(snf.R.det()) == 1

    def test_random_matrices(self):
        """시드 고정 임의 행렬: 유니모듈러 인수분해, 대각 D, 불변인자 나눔 사슬"""
        rng = np.random.default_rng(11)
        for _ in range(30):
            m, n = (int(v) for v in rng.integers(1, 6, size=2))
            A = IntMatrix.from_rows(rng.integers(-6, 7, size=(m, n)).tolist(), cols=n)
            snf = smith_normal_form(A)
            assert snf.L @ A @ snf.R == snf.D
            assert snf.U @ snf.D @ snf.V == A
            for P in (snf.L, snf.R, snf.U, snf.V):
                assert abs(P.det()) == 1
            factors = snf.invariant_factors
            assert all(d > 0 for d in factors)
            assert all(b % a == 0 for a, b in zip(factors, factors[1:]))
            for i in range(m):
                for j in range(n):
                    expected = factors[i] if i == j and i < len(factors) else 0
                    assert snf.D[i, j] == expected

    def test_zero_matrix(self):
        """0 행렬의 계수는 0"""
        assert smith_normal_form(IntMatrix.zeros(2, 3)).rank == 0


class TestComplexes:
    """복합체 구성/호몰로지 테스트"""

    def test_shape_mismatch(self):
        """미분 모양이 생성원 수와 다르면 거부"""
        with pytest.raises(ShapeMismatchError):
            make_complex({0: 1, 1: 2}, {1: [[1, 1], [0, 0]]})

    def test_square_zero_enforced(self):
        """∂∘∂ ≠ 0 이면 호몰로지 거부"""
        c = make_complex({0: ["a"], 1: ["b"], 2: ["c"]}, {1: [[1]], 2: [[1]]})
        with pytest.raises(BoundarySquareError) as ei:
            homology(c)
        assert ei.value.detail["source"] == "c"
        assert ei.value.detail["target"] == "a"

    def test_circle(self):
        """S¹: Z, Z"""
        h = homology(circle_complex())
        assert h.betti_numbers() == (1, 1)
        assert h.describe() == "H_0=Z, H_1=Z"

    def test_torsion(self):
        """RP²: H_1 = Z/2"""
        h = homology(projective_plane_complex())
        assert h.betti_numbers() == (1, 0, 0)
        assert h.group(1).torsion == (2,)
        assert h.group(1).describe() == "Z/2"
        assert not h.is_torsion_free()

    def test_cancelling_pair(self):
        """∂x = y 인 쌍은 소거"""
        c = make_complex({0: ["y"], 1: ["x"]}, {1: [[1]]})
        h = homology(c)
        assert all(g.is_zero for g in h.groups.values())
        assert h.describe() == "0"

    def test_torus_cells(self):
        """T²: 최소 셀 복합체 (1, 2, 1)"""
        c = make_complex({0: 1, 1: 2, 2: 1}, {1: [[0, 0]], 2: [[0], [0]]})
        assert homology(c).betti_numbers() == (1, 2, 1)
        assert c.euler_characteristic() == 0

    def test_empty_complex(self):
        """생성원이 없으면 모든 군이 0"""
        h = homology(make_complex({}))
        assert h.groups == {}
        assert h.betti_numbers() == ()


class TestDuality:
    """쌍대/재차수화 테스트"""

    def test_dualize_twice_is_identity(self):
        """두 번 쌍대화하면 원래 미분"""
        c = projective_plane_complex()
        back = dualize(dualize(c))
        assert back.kind is ComplexKind.CHAIN
        for k in c.degrees:
            assert back.differential(k) == c.differential(k)
            assert back.labels(k) == c.labels(k)

    def test_cohomology_of_rp2(self):
        """RP² 코호몰로지: H^2 = Z/2 (보편계수)"""
        co = homology(dualize(projective_plane_complex()))
        assert co.kind is ComplexKind.COCHAIN
        assert co.group(0).betti == 1
        assert co.group(1).is_zero
        assert co.group(2).torsion == (2,)
        assert co.describe().startswith("H^0=Z")

    def test_regrade_requires_cochain(self):
        """재차수화는 공사슬에만"""
        with pytest.raises(ShapeMismatchError):
            regrade(circle_complex(), 1)

    def test_regrade_degrees(self):
        """C^{m−k} 를 차수 k 로"""
        c = regrade(dualize(projective_plane_complex()), 2)
        assert c.kind is ComplexKind.CHAIN
        assert c.labels(2) == ("v*",)
        assert c.labels(0) == ("f*",)
        assert c.differential(1) == IntMatrix.from_rows([[2]])

    def test_isomorphic_groups_with_pairing(self):
        """H_k ≅ H^{m−k} 비교"""
        c = make_complex({0: 1, 1: 2, 2: 1}, {1: [[0, 0]], 2: [[0], [0]]})
        base, co = homology(c), homology(dualize(c))
        assert isomorphic_groups(base, co, pairing=lambda k: 2 - k)
        assert not isomorphic_groups(homology(circle_complex()), homology(make_complex({0: 1})))


class TestChainMaps:
    """사슬사상 검증/호몰로지 비교 테스트"""

    def test_identity_is_chain_map(self):
        """항등사상"""
        c = projective_plane_complex()
        assert verify_chain_map(GradedIntMap.identity(c)).holds

    def test_violation_located(self):
        """항등식이 깨지는 첫 성분 보고"""
        src = make_complex({0: ["y"], 1: ["x"]}, {1: [[1]]})
        tgt = make_complex({0: ["b"], 1: ["a"]}, {1: [[1]]})
        M = GradedIntMap(src, tgt, {0: IntMatrix.from_rows([[1]]), 1: IntMatrix.from_rows([[2]])})
        report = verify_chain_map(M)
        assert not report.holds
        assert report.degree == 1
        with pytest.raises(ChainMapError):
            require_chain_map(M)

    def test_equal_on_homology_up_to_boundary(self):
        """경계만큼 다른 두 사상은 호몰로지에서 같음"""
        src = make_complex({0: ["p"]})
        tgt = make_complex({0: ["a", "b"], 1: ["e"]}, {1: [[-1], [1]]})
        Ma = GradedIntMap(src, tgt, {0: IntMatrix.from_rows([[1], [0]])})
        Mb = GradedIntMap(src, tgt, {0: IntMatrix.from_rows([[0], [1]])})
        Mz = GradedIntMap.zero(src, tgt)
        assert equal_on_homology(Ma, Mb)
        assert not equal_on_homology(Ma, Mz)

    def test_induced_on_homology_of_degree_two_map(self):
        """S¹ 의 차수 2 사상은 H_1 에서 ×2"""
        c = circle_complex()
        M = GradedIntMap(c, c, {0: IntMatrix.identity(1), 1: IntMatrix.from_rows([[2]])})
        on_h = induced_on_homology(M)
        assert on_h[0].to_rows() == [[1]]
        assert on_h[1].to_rows() == [[2]]
        assert not is_quasi_isomorphism(M)

    def test_identity_quasi_isomorphism(self):
        """항등사상의 원뿔은 비순환 (꼬임 포함)"""
        c = projective_plane_complex()
        assert is_quasi_isomorphism(GradedIntMap.identity(c))
        cone = mapping_cone(GradedIntMap.identity(c))
        cone.check_square_zero()

    def test_compose(self):
        """합성 행렬은 곱"""
        c = circle_complex()
        double = GradedIntMap(c, c, {0: IntMatrix.identity(1), 1: IntMatrix.from_rows([[2]])})
        quad = double.compose(double)
        assert quad.matrix(1).to_rows() == [[4]]


class TestSerializers:
    """JSON 스키마 테스트"""

    def test_complex_schema_roundtrip(self):
        """ComplexSchema ↔ GradedComplex"""
        c = projective_plane_complex()
        schema = ComplexSchema.from_complex(c)
        back = ComplexSchema.model_validate(schema.model_dump(mode="json")).to_complex()
        assert homology(back).group(1).torsion == (2,)

    def test_chain_map_schema_unknown_degree(self):
        """소스에 없는 차수의 행렬은 거부"""
        payload = {
            "source": {"degrees": {"0": {"generators": ["p"]}}},
            "target": {"degrees": {"0": {"generators": ["q"]}}},
            "matrices": {"3": [[1]]},
        }
        with pytest.raises(ValueError):
            ChainMapSchema.model_validate(payload)

    def test_chain_map_schema_to_map(self):
        """행렬 dict → GradedIntMap"""
        payload = {
            "source": {"degrees": {"0": {"generators": ["p"]}}},
            "target": {"degrees": {"0": {"generators": ["q"]}}},
            "matrices": {"0": [[3]]},
        }
        M = ChainMapSchema.model_validate(payload).to_map()
        assert M.matrix(0).to_rows() == [[3]]
        assert verify_chain_map(M).holds
