from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from config import settings
from domains.exprfield.models import ScalarField
from domains.exprfield.services import make_field, perturbed_text

from .integrator import integrate, transport_frame
from .models import (
    CriticalPoint,
    DegenerateCriticalPointError,
    FlowConfig,
    FrameCollapseError,
    IntegrationFailure,
    Metric,
    MetricError,
    MorseDatum,
    Orbit,
    OrbitStatus,
    PerturbationConfig,
    Region,
    StopRule,
    VectorFlow,
)

logger = logging.getLogger(__name__)

__all__ = [
    "DegenerateCriticalPointError",
    "FrameCollapseError",
    "IntegrationFailure",
    "MetricError",
    "find_critical_points",
    "critical_point_at",
    "build_morse_datum",
    "generic_datum",
    "perturb_field",
    "integrate_orbit",
    "unstable_frame_transport",
    "launch_branches",
    "validate_morse_smale",
    "connection_det",
]

_NEWTON_STEPS = 60


# ──────────────────────────────────────────────────────────────────────────────
# 임계점
# ──────────────────────────────────────────────────────────────────────────────
def canonical_frame(vectors: np.ndarray) -> np.ndarray:
    """각 열의 첫 0 아닌 성분이 양수가 되도록 부호 고정."""
    out = np.array(vectors, dtype=float, copy=True)
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            out[:, j] = -col
    return out


def critical_point_at(
    field_: ScalarField,
    metric: Metric,
    coords,
    *,
    label: str,
    config: Optional[FlowConfig] = None,
) -> CriticalPoint:
    config = config or FlowConfig()
    p = np.asarray(coords, dtype=float)
    _, _, H = field_.jet2(p)
    det = float(np.linalg.det(H))
    if abs(det) <= config.tol_nondeg:
        raise DegenerateCriticalPointError("퇴화 임계점", location=p, det=det, field=field_.text)
    # H v = w g v  (계량 보정 헤시안의 고유문제)
    w, v = scipy.linalg.eigh(H, metric.matrix)
    neg = w < 0
    return CriticalPoint(
        label=label,
        coords=p,
        index=int(neg.sum()),
        eigenvalues=tuple(float(e) for e in w),
        unstable_frame=canonical_frame(v[:, neg]),
        stable_frame=canonical_frame(v[:, ~neg][:, ::-1]),
    )


def _newton(field_: ScalarField, seed: np.ndarray, config: FlowConfig, limit: float) -> Optional[np.ndarray]:
    p = seed.copy()
    converged = False
    for _ in range(_NEWTON_STEPS):
        _, g, H = field_.jet2(p)
        step = np.linalg.lstsq(H, g, rcond=None)[0]
        if not np.all(np.isfinite(step)) or np.linalg.norm(step) > limit:
            return None
        if np.linalg.norm(g) < config.tol_crit:
            converged = True
            # 퇴화 근은 선형 수렴이라 |∇f| 만으로는 멈추지 않고 스텝이 사라질 때까지 다듬는다
            if np.linalg.norm(step) <= 1e-14 * max(1.0, float(np.linalg.norm(p))):
                break
        p = p - step
    return field_.domain.reduce(p) if converged else None


def _seeds(field_: ScalarField, region: Optional[Region], per_axis: int) -> np.ndarray:
    domain = field_.domain
    if region is None:
        return domain.grid(per_axis)
    chunks = []
    for box in region.boxes:
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(box.lower, box.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        chunks.append(np.stack([m.ravel() for m in mesh], axis=1))
    return np.vstack(chunks)


def _snap(p: np.ndarray, torus: bool) -> np.ndarray:
    q = np.where(np.abs(p) < 1e-13, 0.0, p)
    if torus:
        q = np.where(np.abs(q - 1.0) < 1e-12, 0.0, q)
    return q


def find_critical_points(
    field_: ScalarField,
    metric: Metric,
    region: Optional[Region] = None,
    *,
    config: Optional[FlowConfig] = None,
) -> Tuple[CriticalPoint, ...]:
    """
    균일 격자 시드에서 ∇f 뉴턴 → 1e-6 이내 중복 제거 → 비퇴화 인증 → 사전식 정렬.
    박스 도메인에 region 이 없으면 도메인 박스 자체가 작업 영역.
    """
    config = config or FlowConfig()
    domain = field_.domain
    work = region if region is not None else (None if domain.is_torus else Region.whole(domain))
    scale = work.scale if work is not None else domain.scale
    roots: List[np.ndarray] = []
    for seed in _seeds(field_, work, config.seeds_per_axis):
        r = _newton(field_, seed, config, limit=2.0 * scale)
        if r is None:
            continue
        if work is not None and not work.contains(r, tol=1e-9):
            continue
        r = _snap(r, domain.is_torus)
        if any(domain.distance(r, q) < config.dedupe_radius for q in roots):
            continue
        roots.append(r)
    roots.sort(key=lambda c: tuple(np.round(c, 9)))
    points = tuple(
        critical_point_at(field_, metric, r, label=f"p{i}", config=config) for i, r in enumerate(roots)
    )
    logger.info(
        f"find_critical_points: {field_.text!r} -> {len(points)} points, indices {[c.index for c in points]}"
    )
    return points


# ──────────────────────────────────────────────────────────────────────────────
# 섭동 / 모스 데이터 구성
# ──────────────────────────────────────────────────────────────────────────────
def perturb_field(field_: ScalarField, epsilon: float, rng: np.random.Generator) -> Tuple[ScalarField, Dict[str, Any]]:
    """토러스: ε·Σ(a_i cos 2πx_i + b_i sin 2πx_i), 박스: ε·Σ a_i x_i."""
    domain = field_.domain
    n = domain.dimension
    if domain.is_torus:
        terms = [f"cos(2*pi*x{i + 1})" for i in range(n)] + [f"sin(2*pi*x{i + 1})" for i in range(n)]
    else:
        terms = [f"x{i + 1}" for i in range(n)]
    coefficients = [float(c) for c in rng.uniform(-1.0, 1.0, size=len(terms))]
    text = perturbed_text(field_.text, epsilon, terms, coefficients)
    record = {"epsilon": epsilon, "terms": terms, "coefficients": coefficients}
    return make_field(domain, text), record


def build_morse_datum(
    field_: ScalarField,
    metric: Optional[Metric] = None,
    region: Optional[Region] = None,
    *,
    config: Optional[FlowConfig] = None,
    perturbation: Optional[PerturbationConfig] = None,
    auto_perturb: bool = True,
) -> MorseDatum:
    """임계점이 퇴화면 (auto_perturb) 결정적 시드로 섭동해 다시 시도."""
    metric = metric or Metric.euclidean(field_.domain.dimension)
    try:
        points = find_critical_points(field_, metric, region, config=config)
        return MorseDatum(field_.domain, field_, metric, points, region)
    except DegenerateCriticalPointError as exc:
        if not auto_perturb:
            raise
        logger.warning(f"build_morse_datum: {exc} -> perturbing")
        return _perturbed_datum(field_, metric, region, config, perturbation, reason="degenerate")


def _perturbed_datum(
    field_: ScalarField,
    metric: Metric,
    region: Optional[Region],
    config: Optional[FlowConfig],
    perturbation: Optional[PerturbationConfig],
    *,
    reason: str,
    accept=None,
) -> MorseDatum:
    perturbation = perturbation or PerturbationConfig()
    rng = np.random.default_rng(perturbation.seed)
    last: Optional[Exception] = None
    for attempt in range(perturbation.attempts):
        candidate, record = perturb_field(field_, perturbation.epsilon, rng)
        try:
            points = find_critical_points(candidate, metric, region, config=config)
        except DegenerateCriticalPointError as exc:
            last = exc
            continue
        record.update({"attempt": attempt, "seed": perturbation.seed, "reason": reason, "base": field_.text})
        datum = MorseDatum(field_.domain, candidate, metric, points, region, record)
        if accept is not None and not accept(datum):
            continue
        logger.info(f"perturbation accepted: attempt={attempt}, epsilon={perturbation.epsilon}, reason={reason}")
        return datum
    raise DegenerateCriticalPointError(
        "섭동 시도 횟수 초과",
        attempts=perturbation.attempts,
        field=field_.text,
        last=str(last) if last else None,
    )


def generic_datum(
    field_: ScalarField,
    metric: Optional[Metric] = None,
    region: Optional[Region] = None,
    *,
    config: Optional[FlowConfig] = None,
    perturbation: Optional[PerturbationConfig] = None,
    accept=None,
) -> MorseDatum:
    """
    비퇴화 + 모스–스메일 (+ accept 조건) 을 만족하는 데이터. 원래 f 가 통과하면 그대로.
    accept: 국소 데이터에서 고립성 유지 등 추가 조건
    """
    metric = metric or Metric.euclidean(field_.domain.dimension)
    try:
        points = find_critical_points(field_, metric, region, config=config)
        datum = MorseDatum(field_.domain, field_, metric, points, region)
        if not validate_morse_smale(datum, region, config=config).violated and (accept is None or accept(datum)):
            return datum
        reason = "morse_smale"
    except DegenerateCriticalPointError as exc:
        logger.warning(f"generic_datum: {exc}")
        reason = "degenerate"

    def acceptable(d: MorseDatum) -> bool:
        if validate_morse_smale(d, region, config=config).violated:
            return False
        return accept is None or accept(d)

    return _perturbed_datum(field_, metric, region, config, perturbation, reason=reason, accept=acceptable)


# ──────────────────────────────────────────────────────────────────────────────
# 궤도 / 프레임
# ──────────────────────────────────────────────────────────────────────────────
def integrate_orbit(
    datum: MorseDatum,
    p,
    direction: int = 1,
    stop: StopRule = StopRule(),
    *,
    config: Optional[FlowConfig] = None,
) -> Orbit:
    """ẋ = −g⁻¹∇f (direction=+1) 또는 +g⁻¹∇f (−1)."""
    if direction not in (1, -1):
        raise ValueError("direction 은 +1 또는 -1")
    return integrate(datum.flow, p, direction=direction, stop=stop, config=config)


def unstable_frame_transport(orbit: Orbit, frame, *, config: Optional[FlowConfig] = None) -> np.ndarray:
    return transport_frame(orbit, frame, config=config)


def launch_branches(
    flow: VectorFlow,
    x: CriticalPoint,
    *,
    direction: int = 1,
    r_launch: Optional[float] = None,
    stop: StopRule = StopRule(),
    config: Optional[FlowConfig] = None,
) -> List[Tuple[int, Orbit]]:
    """
    1차원 불안정 (direction=+1) 또는 안정 (−1) 다양체의 두 가지. (σ, 궤도) 쌍을 σ=−1, +1 순서로.
    """
    frame = x.unstable_frame if direction > 0 else x.stable_frame
    if frame.shape[1] != 1:
        raise ValueError(f"{x.label}: 가지 발사는 1차원 다양체에서만 (dim={frame.shape[1]})")
    r = r_launch if r_launch is not None else settings.R_LAUNCH
    e = frame[:, 0]
    out = []
    for sigma in (-1, 1):
        orbit = integrate(flow, x.coords + sigma * r * e, direction=direction, stop=stop, config=config)
        logger.debug(
            f"branch {x.label} sigma={sigma} dir={direction}: {orbit.status.value} "
            f"-> {orbit.terminal.label if orbit.terminal else '-'}"
        )
        out.append((sigma, orbit))
    return out


# ──────────────────────────────────────────────────────────────────────────────
# 모스–스메일 검증
# ──────────────────────────────────────────────────────────────────────────────
def connection_det(flow: VectorFlow, upper: CriticalPoint, lower: CriticalPoint, orbit: Orbit, *, config=None) -> float:
    """
    지표 차 1 연결궤도의 방향 비교 행렬식. |det| 가 횡단성 여유.
    - 앞방향 궤도 (upper 에서 발사): 운반한 E^u_upper 를 끝점의 [X̂, E^u_lower] 로 표현
    - 뒷방향 궤도 (lower 의 안정 가지): 발사점의 [X̂, e_u(lower)]  (n = 2)
    """
    if orbit.direction > 0:
        F = transport_frame(orbit, upper.unstable_frame, config=config)
        q = orbit.endpoint
        v = flow.velocity(q)
        B = np.column_stack([v / np.linalg.norm(v)] + [lower.unstable_frame[:, j] for j in range(lower.index)])
        return float(np.linalg.det(np.linalg.lstsq(B, F, rcond=None)[0]))
    q = orbit.start
    v = flow.velocity(q)
    return float(np.linalg.det(np.column_stack([v / np.linalg.norm(v), lower.unstable_frame[:, 0]])))


@dataclass
class MorseSmaleReport:
    """
    passed: 위반이 없고 모든 지표 차 1 쌍을 검사했음
    offending: 찾은 위반 (비횡단 연결, 여유 부족)
    unchecked: 1차원 가지로 볼 수 없는 쌍 (n ≥ 3 의 지표 2 → 1 등)
    """

    passed: bool
    offending: List[Dict[str, Any]] = field(default_factory=list)
    connections: List[Dict[str, Any]] = field(default_factory=list)
    unchecked: List[Dict[str, Any]] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def violated(self) -> bool:
        return bool(self.offending)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "complete": not self.unchecked,
            "offending": self.offending,
            "connections": self.connections,
            "unchecked": self.unchecked,
            "notes": self.notes,
        }


def validate_morse_smale(
    datum: MorseDatum,
    region: Optional[Region] = None,
    *,
    config: Optional[FlowConfig] = None,
    r_launch: Optional[float] = None,
    tol_transv: Optional[float] = None,
) -> MorseSmaleReport:
    """
    1차원 불안정/안정 가지를 쏘아 같은 (또는 역전된) 지표 사이의 연결을 찾는다.
    - 지표 1 점의 앞방향 가지가 지표 ≥ 1 점으로 수렴 → 횡단성 실패
    - 지표 n−1 점의 뒷방향 가지가 지표 ≤ n−1 점으로 수렴 → 실패
    - 찾은 지표 차 1 연결은 방향 비교 |det| > tol_transv 이어야 함
    n ≥ 3 에서 양쪽 다양체가 모두 2차원 이상인 쌍은 unchecked 로 남기고 통과시키지 않는다.
    영역이 없으면 박스 도메인은 도메인 전체를 영역으로 쓴다.
    """
    n = datum.dimension
    tol = tol_transv if tol_transv is not None else settings.TOL_TRANSV
    report = MorseSmaleReport(passed=True)
    if n == 1:
        report.notes.append("1차원: 서로 다른 같은 지표 점 사이 연결 불가")
        return report
    region = region if region is not None else datum.region
    if region is None and not datum.domain.is_torus:
        region = Region.whole(datum.domain)
    stop = StopRule(hit_critical=True, region=region)
    flagged = set()

    def flag(source: str, target: str, kind: str, **extra) -> None:
        if (source, target) in flagged:
            return
        flagged.add((source, target))
        report.passed = False
        report.offending.append({"source": source, "target": target, "kind": kind, **extra})

    plans = [(1, 1, lambda z: z.index >= 1), (n - 1, -1, lambda z: z.index <= n - 1)]
    seen = set()
    for index, direction, bad in plans:
        if (index, direction) in seen:
            continue
        seen.add((index, direction))
        for x in datum.of_index(index):
            for sigma, orbit in launch_branches(
                datum.flow, x, direction=direction, r_launch=r_launch, stop=stop, config=config
            ):
                z = orbit.terminal
                if orbit.status is not OrbitStatus.CONVERGED or z is None or z is x:
                    continue
                upper, lower = (x, z) if direction > 0 else (z, x)
                if bad(z):
                    flag(upper.label, lower.label, "non-transverse connection")
                    continue
                if upper.index != lower.index + 1 or (direction < 0 and n != 2):
                    continue
                margin = abs(connection_det(datum.flow, upper, lower, orbit, config=config))
                if margin <= tol:
                    flag(upper.label, lower.label, "transversality margin", margin=margin)
                    continue
                report.connections.append(
                    {"source": upper.label, "target": lower.label, "branch": sigma, "margin": margin}
                )
    if n >= 3:
        for x in datum.of_index(2):
            for z in datum.of_index(1):
                report.unchecked.append({"source": x.label, "target": z.label})
        if report.unchecked:
            report.passed = False
            report.notes.append(f"{n}차원: 지표 2 → 1 쌍은 1차원 가지로 검사할 수 없음")
    if report.offending:
        logger.warning(f"validate_morse_smale: failed {report.offending}")
    elif report.unchecked:
        logger.warning(f"validate_morse_smale: {len(report.unchecked)} pairs unchecked")
    return report


def euler_check(datum: MorseDatum) -> Optional[Dict[str, int]]:
    """닫힌 도메인(토러스, 전역)에서 Σ(−1)^|x| = χ."""
    if datum.region is not None or not datum.domain.is_torus:
        return None
    return {"index_sum": datum.index_sum(), "euler_characteristic": datum.domain.euler_characteristic}


