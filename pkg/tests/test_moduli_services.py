import math

import pytest

from domains.exprfield.models import Domain
from domains.exprfield.services import make_field
from domains.flowcore.models import Metric, Region
from domains.flowcore.services import build_morse_datum
from domains.moduli.models import IndexMismatchError, ShootingConfig, UnsupportedDimensionError
from domains.moduli.services import (
    boundary_operator,
    connection_counts,
    continuation_map,
    count_connections,
    morse_homology,
    smoothstep,
    switch_horizon_for,
    working_region,
)
from domains.zalgebra.services import homology, induced_on_homology, is_quasi_isomorphism

from tests.factories import torus_datum


class TestWorkingRegion:
    """작업 영역 결정 테스트"""

    def test_torus_global_has_no_region(self, circle_cos):
        """토러스 전역은 None"""
        assert working_region(build_morse_datum(circle_cos)) is None

    def test_box_defaults_to_whole_domain(self, well, line):
        """박스 도메인은 도메인 전체"""
        region = working_region(build_morse_datum(well))
        assert region.bounding_box.lower == (-2.0,)
        assert region.bounding_box.upper == (2.0,)

    def test_explicit_region_wins(self, well, unit_interval):
        """명시 영역 우선"""
        assert working_region(build_morse_datum(well), unit_interval) is unit_interval


class TestConnectionCounts:
    """연결궤도 세기 테스트"""

    def test_index_mismatch(self, circle_cos):
        """|x| = |y| + 1 이 아니면 거부"""
        datum = build_morse_datum(circle_cos)
        top = datum.of_index(1)[0]
        with pytest.raises(IndexMismatchError):
            count_connections(datum, top, top)

    def test_circle_counts_cancel(self, circle_cos):
        """원 위 cos: 최대→최소 두 가지의 부호가 반대"""
        datum = build_morse_datum(circle_cos)
        top, bottom = datum.of_index(1)[0], datum.of_index(0)[0]
        count = count_connections(datum, top, bottom)
        assert len(count.witnesses) == 2
        assert sorted(w.sign for w in count.witnesses) == [-1, 1]
        assert count.n == 0

    def test_interval_double_well(self, line):
        """(x²−1)²: 최대점 0 에서 두 최소점으로 하나씩, 부호 반대"""
        f = make_field(line, "(x1^2 - 1)^2")
        datum = build_morse_datum(f)
        table = connection_counts(datum)
        top = datum.of_index(1)[0]
        n = [table.lookup(top.label, y.label) for y in datum.of_index(0)]
        assert sorted(n) == [-1, 1]

    @pytest.mark.parametrize("r_launch", [1e-4, 1e-3, 1e-2])
    def test_launch_radius_does_not_change_counts(self, line, circle_cos, r_launch):
        """발사 반경 1e-4 ~ 1e-2 에서 같은 개수"""
        shooting = ShootingConfig(r_launch=r_launch)
        well = build_morse_datum(make_field(line, "(x1^2 - 1)^2"))
        top = well.of_index(1)[0]
        table = connection_counts(well, shooting=shooting)
        assert sorted(table.lookup(top.label, y.label) for y in well.of_index(0)) == [-1, 1]
        circle = build_morse_datum(circle_cos)
        count = count_connections(circle, circle.of_index(1)[0], circle.of_index(0)[0], shooting=shooting)
        assert len(count.witnesses) == 2
        assert count.n == 0

    def test_orientation_flip_negates_boundary(self, line):
        """지표 1 점의 방향을 뒤집으면 ∂ 의 그 열 부호가 바뀌고 호몰로지는 그대로"""
        datum = build_morse_datum(make_field(line, "(x1^2 - 1)^2"))
        flipped = datum.with_points([c.flipped() if c.index == 1 else c for c in datum.critical_points])
        before = boundary_operator(datum).differential(1).to_rows()
        after = boundary_operator(flipped).differential(1).to_rows()
        assert after == [[-v for v in row] for row in before]
        assert homology(boundary_operator(flipped)).betti_numbers() == (1, 0)

    def test_three_dimensions_unsupported(self):
        """3차원은 지표 > 0 점이 있으면 거부"""
        domain = Domain.torus(3)
        f = make_field(domain, "cos(2*pi*x1) + cos(2*pi*x2) + cos(2*pi*x3)")
        datum = build_morse_datum(f, Metric.euclidean(3))
        with pytest.raises(UnsupportedDimensionError):
            connection_counts(datum)

    def test_region_filters_orbits(self, line):
        """N 을 떠나는 궤도는 세지 않음"""
        f = make_field(line, "(x1^2 - 1)^2")
        N = Region.from_bounds(line, [[[-0.5, 1.5]]])
        datum = build_morse_datum(f, region=N)
        assert sorted(c.index for c in datum.critical_points) == [0, 1]
        complex_ = boundary_operator(datum, N)
        assert complex_.differential(1).to_rows() in ([[1]], [[-1]])


class TestMorseHomology:
    """전역 모스 호몰로지 테스트"""

    def test_circle(self, circle_cos):
        """원: Z, Z"""
        result = morse_homology(circle_cos)
        assert result.homology.betti_numbers() == (1, 1)
        assert result.euler == {"index_sum": 0, "euler_characteristic": 0}

    def test_interval_contractible(self, line):
        """박스 위 이중 우물은 점과 같은 호몰로지"""
        result = morse_homology(make_field(line, "(x1^2 - 1)^2"))
        assert result.homology.betti_numbers() == (1, 0)
        assert result.euler is None

    def test_box_saddle(self, saddle):
        """정사각형 위 x2² − x1²: 영역 없이도 박스 전체에서 H_1 = Z"""
        betti = morse_homology(saddle).homology.betti_numbers()
        assert betti[:2] == (0, 1)
        assert sum(betti) == 1

    @pytest.mark.slow
    def test_torus_height(self, height):
        """2-토러스: (1, 2, 1), 꼬임 없음, ∂ = 0"""
        result = morse_homology(height)
        assert result.homology.betti_numbers() == (1, 2, 1)
        assert result.homology.is_torsion_free()
        for k in result.complex.degrees:
            assert result.complex.differential(k).is_zero()
        assert result.datum.perturbation is None

    @pytest.mark.slow
    def test_upright_height_perturbed(self, upright):
        """모스–스메일이 아니면 섭동 후 같은 호몰로지"""
        result = morse_homology(upright)
        assert result.datum.perturbation is not None
        assert result.datum.perturbation["reason"] == "morse_smale"
        assert result.homology.betti_numbers() == (1, 2, 1)

    @pytest.mark.slow
    def test_anisotropic_metric(self, height):
        """상수 SPD 계량에서도 같은 호몰로지"""
        g = Metric.spd([[2.0, 0.3], [0.3, 1.0]])
        assert morse_homology(height, g).homology.betti_numbers() == (1, 2, 1)

    @pytest.mark.slow
    def test_deterministic_across_threads(self, height):
        """스레드 수와 무관하게 같은 복합체"""
        a = morse_homology(height, threads=1)
        b = morse_homology(height, threads=4)
        assert a.complex.to_dict() == b.complex.to_dict()
        assert a.counts.to_dict() == b.counts.to_dict()


class TestContinuation:
    """연속사상 테스트"""

    def test_smoothstep(self):
        """λ(0) = 0, λ(1) = 1, 가운데 1/2"""
        assert smoothstep(-1.0) == 0.0
        assert smoothstep(0.5) == pytest.approx(0.5)
        assert smoothstep(2.0) == 1.0

    def test_circle_self_continuation(self, circle_cos):
        """같은 데이터 사이 연속사상은 호몰로지 동형"""
        datum = build_morse_datum(circle_cos)
        Phi = continuation_map(datum, datum)
        assert is_quasi_isomorphism(Phi)
        for m in induced_on_homology(Phi).values():
            assert abs(m.det()) == 1

    def test_circle_shifted_function(self, circle):
        """임계점이 옮겨진 함수로의 연속사상도 동형"""
        A = build_morse_datum(make_field(circle, "cos(2*pi*x1)"))
        B = build_morse_datum(make_field(circle, "cos(2*pi*(x1 - 0.1))"))
        Phi = continuation_map(A, B)
        assert is_quasi_isomorphism(Phi)

    def test_switch_horizon_clamped_by_stretch_cap(self, circle_cos):
        """e^{T·max|λ|} ≤ cap 이 되도록 T 를 줄이고, 짧은 T 는 그대로"""
        datum = build_morse_datum(circle_cos)
        shooting = ShootingConfig(switch_stretch_cap=1e3)
        limit = math.log(1e3) / (4 * math.pi**2)
        assert switch_horizon_for(datum, datum, 50.0, shooting) == pytest.approx(limit, rel=1e-6)
        assert switch_horizon_for(datum, datum, 0.01, shooting) == 0.01

    def test_domains_must_match(self, circle_cos, well):
        """다른 도메인 사이 연속사상은 거부"""
        with pytest.raises(IndexMismatchError):
            continuation_map(build_morse_datum(circle_cos), build_morse_datum(well))

    @pytest.mark.slow
    def test_torus_metric_change(self, height):
        """계량만 바꾼 연속사상은 동형"""
        A = torus_datum()
        B = torus_datum(metric=Metric.spd([[1.5, 0.2], [0.2, 1.0]]))
        Phi = continuation_map(A, B)
        assert is_quasi_isomorphism(Phi)
