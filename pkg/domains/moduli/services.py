from __future__ import annotations

import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from domains.exprfield.models import ScalarField
from domains.exprfield.services import make_field
from domains.flowcore.models import (
    CriticalPoint,
    FlowConfig,
    GradientFlow,
    Metric,
    MorseDatum,
    OrbitStatus,
    PerturbationConfig,
    Region,
    StopRule,
    VectorFlow,
)
from domains.flowcore.services import connection_det, euler_check, generic_datum, launch_branches
from domains.inducedmaps.maps import FlowTimeMap
from domains.zalgebra.matrices import IntMatrix
from domains.zalgebra.models import GradedComplex, GradedIntMap
from domains.zalgebra.services import homology, require_chain_map
from shared.workers import parallel_map

from .intersections import intersection_matrix
from .models import (
    ConnectionCount,
    CountTable,
    IndexMismatchError,
    IsolationViolation,
    MorseHomology,
    ShootingConfig,
    TransversalityError,
    UnsupportedDimensionError,
    Witness,
)

logger = logging.getLogger(__name__)

__all__ = [
    "IndexMismatchError",
    "IsolationViolation",
    "TransversalityError",
    "UnsupportedDimensionError",
    "count_connections",
    "connection_counts",
    "boundary_operator",
    "continuation_map",
    "morse_homology",
    "switch_horizon_for",
    "working_region",
]


def working_region(datum: MorseDatum, region: Optional[Region] = None) -> Optional[Region]:
    """명시 영역 > 데이터의 영역 > 박스 도메인 전체. 토러스 전역이면 None."""
    if region is not None:
        return region
    if datum.region is not None:
        return datum.region
    return None if datum.domain.is_torus else Region.whole(datum.domain)


def _sgn(v: float) -> int:
    return 1 if v > 0 else -1


# ──────────────────────────────────────────────────────────────────────────────
# 지표 차 1 연결궤도
# ──────────────────────────────────────────────────────────────────────────────
def _descending_witnesses(
    datum: MorseDatum, x: CriticalPoint, region, config, shooting
) -> List[Tuple[CriticalPoint, Witness]]:
    """|x| = 1: 불안정 가지를 앞으로 쏘고, y 에서 [X̂, E^u_y] 대비 운반된 프레임의 방향 비교."""
    stop = StopRule(hit_critical=True, region=region)
    out = []
    for sigma, orbit in launch_branches(
        datum.flow, x, direction=1, r_launch=shooting.r_launch, stop=stop, config=config
    ):
        y = orbit.terminal
        if orbit.status is not OrbitStatus.CONVERGED or y is None or y.index != x.index - 1:
            continue
        q = orbit.endpoint
        det = connection_det(datum.flow, x, y, orbit, config=config)
        margin = abs(det)
        if margin < shooting.tol_transv:
            raise TransversalityError("연결궤도 방향 비교 실패 (비횡단)", x=x.label, y=y.label, branch=sigma, margin=margin)
        sign = _sgn(det) * x.orientation * y.orientation
        out.append((y, Witness("branch", (float(sigma),), tuple(float(c) for c in q), sign, margin, orbit)))
    return out


def _ascending_witnesses(
    datum: MorseDatum, y: CriticalPoint, region, config, shooting
) -> List[Tuple[CriticalPoint, Witness]]:
    """
    n = 2, |y| = 1: y 의 안정 가지를 뒤로 쏘아 지표 2 점 x 로 수렴하면 연결.
    부호 = o(x)o(y)·sgn det E_x·sgn det[X̂(q), e_u(y)]  (q = 발사점)
    """
    stop = StopRule(hit_critical=True, region=region)
    out = []
    for sigma, orbit in launch_branches(
        datum.flow, y, direction=-1, r_launch=shooting.r_launch, stop=stop, config=config
    ):
        x = orbit.terminal
        if orbit.status is not OrbitStatus.CONVERGED or x is None or x.index != y.index + 1:
            continue
        q = orbit.start
        det = connection_det(datum.flow, x, y, orbit, config=config)
        margin = abs(det)
        if margin < shooting.tol_transv:
            raise TransversalityError("연결궤도 방향 비교 실패 (비횡단)", x=x.label, y=y.label, branch=sigma, margin=margin)
        sign = x.orientation * y.orientation * _sgn(np.linalg.det(x.unstable_frame)) * _sgn(det)
        out.append((x, Witness("stable-branch", (float(sigma),), tuple(float(c) for c in q), sign, margin, orbit)))
    return out


def _check_dimension(datum: MorseDatum) -> None:
    if datum.dimension > 2 and any(c.index > 0 for c in datum.critical_points):
        raise UnsupportedDimensionError("연결궤도 세기는 n ≤ 2 에서만", dimension=datum.dimension)


def count_connections(
    datum: MorseDatum,
    x: CriticalPoint,
    y: CriticalPoint,
    region: Optional[Region] = None,
    *,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
) -> ConnectionCount:
    """n(x, y): |x| = |y| + 1. 영역이 있으면 궤도 전체가 N 안에 머물러야 함."""
    config = config or FlowConfig()
    shooting = shooting or ShootingConfig()
    if x.index != y.index + 1:
        raise IndexMismatchError("|x| = |y| + 1 이어야 함", x=x.label, y=y.label, x_index=x.index, y_index=y.index)
    _check_dimension(datum)
    region = working_region(datum, region)
    if x.index == 1:
        found = [w for z, w in _descending_witnesses(datum, x, region, config, shooting) if z is y]
    else:
        found = [w for z, w in _ascending_witnesses(datum, y, region, config, shooting) if z is x]
    found.sort(key=lambda w: w.parameter)
    return ConnectionCount(x, y, tuple(found))


def connection_counts(
    datum: MorseDatum,
    region: Optional[Region] = None,
    *,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    threads: Optional[int] = None,
) -> CountTable:
    """모든 지표 차 1 쌍. 가지 발사는 점마다 독립이라 병렬, 결과는 라벨 순서로 결정적."""
    config = config or FlowConfig()
    shooting = shooting or ShootingConfig()
    _check_dimension(datum)
    region = working_region(datum, region)
    pairs: Dict[Tuple[str, str], List[Witness]] = {}
    for x in datum.critical_points:
        for y in datum.critical_points:
            if x.index == y.index + 1:
                pairs[(x.label, y.label)] = []

    jobs = list(datum.of_index(1))
    results = parallel_map(lambda c: _descending_witnesses(datum, c, region, config, shooting), jobs, threads=threads)
    for x, hits in zip(jobs, results):
        for y, w in hits:
            pairs[(x.label, y.label)].append(w)
    if datum.dimension == 2 and datum.of_index(2):
        results = parallel_map(
            lambda c: _ascending_witnesses(datum, c, region, config, shooting), jobs, threads=threads
        )
        for y, hits in zip(jobs, results):
            for x, w in hits:
                pairs[(x.label, y.label)].append(w)
    by_label = {c.label: c for c in datum.critical_points}
    table = CountTable(
        [
            ConnectionCount(by_label[a], by_label[b], tuple(sorted(ws, key=lambda w: w.parameter)))
            for (a, b), ws in pairs.items()
        ]
    )
    logger.info(f"connection_counts: {len(table.counts)} pairs, nonzero {[c.to_dict()['n'] for c in table.counts]}")
    return table


def _generators(datum: MorseDatum) -> Dict[int, Tuple[str, ...]]:
    gens: Dict[int, Tuple[str, ...]] = {}
    for k in range(datum.dimension + 1):
        labels = tuple(c.label for c in datum.of_index(k))
        if labels:
            gens[k] = labels
    return gens


def boundary_operator(
    datum: MorseDatum,
    region: Optional[Region] = None,
    *,
    table: Optional[CountTable] = None,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    threads: Optional[int] = None,
) -> GradedComplex:
    """∂x = Σ n(x, y)·y. ∂² ≠ 0 이면 BoundarySquareError (놓친 궤도 진단)."""
    table = table or connection_counts(datum, region, config=config, shooting=shooting, threads=threads)
    gens = _generators(datum)
    diffs: Dict[int, IntMatrix] = {}
    for k in gens:
        rows, cols = gens.get(k - 1, ()), gens[k]
        if not rows:
            continue
        diffs[k] = IntMatrix.from_rows([[table.lookup(x, y) for x in cols] for y in rows], cols=len(cols))
    complex_ = GradedComplex(gens, diffs)
    complex_.check_square_zero()
    return complex_


def morse_homology(
    field_: ScalarField,
    metric: Optional[Metric] = None,
    region: Optional[Region] = None,
    *,
    config: Optional[FlowConfig] = None,
    perturbation: Optional[PerturbationConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    threads: Optional[int] = None,
    accept=None,
) -> MorseHomology:
    """임계점 → (필요시 섭동) → 모스–스메일 → ∂ → 호몰로지. 닫힌 도메인이면 오일러 교차검증."""
    datum = generic_datum(field_, metric, region, config=config, perturbation=perturbation, accept=accept)
    table = connection_counts(datum, region, config=config, shooting=shooting, threads=threads)
    complex_ = boundary_operator(datum, region, table=table)
    result = homology(complex_)
    euler = euler_check(datum)
    if euler is not None and euler["index_sum"] != euler["euler_characteristic"]:
        logger.warning(f"morse_homology: index sum {euler['index_sum']} != χ {euler['euler_characteristic']}")
    logger.info(f"morse_homology: {field_.text!r} -> {result.describe()}")
    return MorseHomology(datum, complex_, table, result, euler)


# ──────────────────────────────────────────────────────────────────────────────
# 연속사상 Φ: f_λ = (1−λ)f_A + λ f_B, λ(t) = smoothstep(t/T_s)
# ──────────────────────────────────────────────────────────────────────────────
def smoothstep(s: float) -> float:
    s = min(max(s, 0.0), 1.0)
    return s * s * (3.0 - 2.0 * s)


class HomotopyFlow(VectorFlow):
    """비자율 흐름 ẋ = −g_λ⁻¹ ∇f_λ (λ = λ(t))."""

    autonomous = False

    def __init__(self, datum_A: MorseDatum, datum_B: MorseDatum, horizon: float) -> None:
        self.A, self.B = datum_A, datum_B
        self.domain = datum_A.domain
        self.horizon = horizon

    def lam(self, t: float) -> float:
        return 1.0 if self.horizon <= 0.0 else smoothstep(t / self.horizon)

    def _blend(self, t: float):
        lam = self.lam(t)
        g = (1.0 - lam) * self.A.metric.matrix + lam * self.B.metric.matrix
        return lam, g

    def velocity(self, p: np.ndarray, t: float = 0.0) -> np.ndarray:
        lam, g = self._blend(t)
        grad = (1.0 - lam) * self.A.field.gradient(p) + lam * self.B.field.gradient(p)
        return -np.linalg.solve(g, grad)

    def jacobian(self, p: np.ndarray, t: float = 0.0) -> np.ndarray:
        lam, g = self._blend(t)
        H = (1.0 - lam) * self.A.field.jet2(p)[2] + lam * self.B.field.jet2(p)[2]
        return -np.linalg.solve(g, H)


def interpolated_flow(datum_A: MorseDatum, datum_B: MorseDatum, lam: float) -> GradientFlow:
    """λ 를 고정한 자율 그래디언트 흐름 (고립성 검사용)."""
    text = f"(1 - {lam!r})*({datum_A.field.text}) + ({lam!r})*({datum_B.field.text})"
    field_ = make_field(datum_A.domain, text)
    g = (1.0 - lam) * datum_A.metric.matrix + lam * datum_B.metric.matrix
    euclid = datum_A.metric.is_euclidean and datum_B.metric.is_euclidean
    return GradientFlow(field_, Metric(g, "euclidean" if euclid else "spd"))


def switch_horizon_for(
    datum_A: MorseDatum,
    datum_B: MorseDatum,
    requested: Optional[float] = None,
    shooting: Optional[ShootingConfig] = None,
) -> float:
    """실제 쓰는 전환 구간 길이. e^{T·max|λ|} 가 stretch cap 을 넘지 않도록 줄인다."""
    shooting = shooting or ShootingConfig()
    requested = requested if requested is not None else shooting.switch_horizon
    cap = shooting.switch_stretch_cap
    rates = [abs(e) for d in (datum_A, datum_B) for c in d.critical_points for e in c.eigenvalues]
    if not rates:
        return requested
    limit = math.log(cap) / max(rates)
    if requested > limit:
        logger.warning(f"continuation: switching horizon {requested} clamped to {limit:.4g} (stretch cap {cap:g})")
        return limit
    return requested


def continuation_map(
    datum_A: MorseDatum,
    datum_B: MorseDatum,
    *,
    switch_horizon: Optional[float] = None,
    region: Optional[Region] = None,
    complexes: Optional[Tuple[GradedComplex, GradedComplex]] = None,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    isolation=None,
    threads: Optional[int] = None,
) -> GradedIntMap:
    """
    x ∈ crit f_A 에서 y ∈ crit f_B (|x| = |y|) 로 가는 비자율 흐름선의 부호 있는 개수.
    = W^u_A(x) 와 Ψ_{T_s}⁻¹(W^s_B(y)) 의 교차수 (Ψ: 전환 구간의 시간사상).
    """
    # 지연 import (conley → moduli 순환 방지)
    from domains.conley.services import verify_isolated_homotopy, verify_isolating_neighborhood

    config = config or FlowConfig()
    shooting = shooting or ShootingConfig()
    if datum_A.domain != datum_B.domain:
        raise IndexMismatchError("연속사상은 같은 도메인의 데이터 사이에서만", a=datum_A.domain.to_dict(), b=datum_B.domain.to_dict())
    region = working_region(datum_A, region)
    if region is not None:
        report = verify_isolated_homotopy(
            lambda lam: verify_isolating_neighborhood(interpolated_flow(datum_A, datum_B, lam), region, isolation=isolation, config=config),
            0.0,
            1.0,
            points=shooting.lambda_grid,
            label="lambda",
        )
        if not report.holds:
            raise IsolationViolation(
                "보간 경로에서 고립성이 깨짐: 연속사상 정의 불가",
                violated=report.violated_range,
                verdict=report.verdict.value,
            )
    horizon = switch_horizon_for(datum_A, datum_B, switch_horizon, shooting)
    h = FlowTimeMap(HomotopyFlow(datum_A, datum_B, horizon), horizon, config=config, label="switch")
    C_A, C_B = complexes or (
        boundary_operator(datum_A, region, config=config, shooting=shooting, threads=threads),
        boundary_operator(datum_B, region, config=config, shooting=shooting, threads=threads),
    )
    mats: Dict[int, IntMatrix] = {}
    for k in C_A.degrees:
        mats[k], _ = intersection_matrix(
            h, datum_A, datum_B, k,
            region_A=region, region_B=region, config=config, shooting=shooting, threads=threads,
        )
    Phi = GradedIntMap(C_A, C_B, mats)
    require_chain_map(Phi, what="continuation map")
    logger.info(f"continuation_map: horizon={horizon:.4g}, matrices={ {k: m.to_rows() for k, m in mats.items()} }")
    return Phi
