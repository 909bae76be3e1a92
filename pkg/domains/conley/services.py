"""
고립 기계장치. 모든 인증은 선언된 격자 + 시간 상한 위의 표본 증거이며 판정은
certified / refuted / inconclusive 셋 중 하나. 음성 판정은 예외가 아니라 인증서로 돌려준다.
파이프라인 (국소 호몰로지 등) 은 require_certified 로 전제조건을 강제한다.
"""
from __future__ import annotations

import logging
import math
from dataclasses import replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.spatial import cKDTree

from config import settings
from domains.exprfield.models import DomainError, ScalarField
from domains.exprfield.services import compose_field
from domains.flowcore.integrator import integrate
from domains.flowcore.models import (
    Box,
    CriticalPoint,
    FlowConfig,
    GradientFlow,
    IntegrationFailure,
    Metric,
    Orbit,
    OrbitStatus,
    PerturbationConfig,
    Region,
    StopRule,
    VectorFlow,
)
from domains.flowcore.services import generic_datum
from domains.moduli.models import MorseHomology, ShootingConfig
from domains.moduli.services import boundary_operator, connection_counts, morse_homology
from domains.zalgebra.services import homology, induced_on_homology, isomorphic_groups
from shared.workers import parallel_map

from .geometry import BoundaryDistance, boundary_mesh, merge_boxes, region_grid, relative_cube_complex
from .models import (
    AnchoredFlow,
    BoundaryExitReport,
    CertificationError,
    FaceExit,
    FlowMapReport,
    HomotopyIsolationReport,
    IsolatedMapReport,
    IsolatingNeighborhood,
    IsolationConfig,
    LocalHomology,
    LyapunovCertificate,
    MCFInducedMap,
    PullbackError,
    PullbackReport,
    Verdict,
)

logger = logging.getLogger(__name__)

__all__ = [
    "CertificationError",
    "PullbackError",
    "anchor_flow",
    "require_certified",
    "verify_isolating_neighborhood",
    "verify_isolated_map",
    "verify_flow_map",
    "verify_isolated_homotopy",
    "pullback_neighborhood",
    "verify_lyapunov",
    "local_morse_homology",
    "mcf_homology",
    "mcf_induced_map",
    "boundary_exit_homology",
]

_NEWTON_STEPS = 60
_EQUIVARIANCE_TIMES = (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0)
_PULLBACK_COARSE = 16


def require_certified(cert, what: str) -> None:
    if cert.verdict is not Verdict.CERTIFIED:
        raise CertificationError(f"{what}: {cert.verdict.value}", verdict=cert.verdict.value, certificate=cert.to_dict())


# ──────────────────────────────────────────────────────────────────────────────
# 평형점 고정: N 안의 쌍곡 평형점을 찾아 흐름에 붙인다
# ──────────────────────────────────────────────────────────────────────────────
def _equilibrium_at(flow: VectorFlow, p: np.ndarray, label: str, config: FlowConfig) -> Optional[CriticalPoint]:
    J = flow.jacobian(p)
    eig = np.linalg.eigvals(J)
    if np.min(np.abs(eig.real)) <= config.tol_nondeg:
        logger.debug(f"anchor: non-hyperbolic equilibrium at {p} skipped")
        return None
    _, Zu, k = scipy.linalg.schur(J, output="real", sort="rhp")
    _, Zs, _ = scipy.linalg.schur(J, output="real", sort="lhp")
    n = len(p)
    return CriticalPoint(
        label=label,
        coords=p,
        index=int(k),
        eigenvalues=tuple(sorted(float(e) for e in eig.real)),
        unstable_frame=Zu[:, :k],
        stable_frame=Zs[:, : n - k],
    )


def _newton_zero(flow: VectorFlow, seed: np.ndarray, config: FlowConfig, limit: float) -> Optional[np.ndarray]:
    p = seed.astype(float).copy()
    for _ in range(_NEWTON_STEPS):
        v = flow.velocity(p)
        if np.linalg.norm(v) < config.tol_crit:
            return flow.domain.reduce(p)
        step = np.linalg.lstsq(flow.jacobian(p), v, rcond=None)[0]
        if not np.all(np.isfinite(step)) or np.linalg.norm(step) > limit:
            return None
        p = p - step
    return None


def anchor_flow(flow: VectorFlow, region: Region, *, config: Optional[FlowConfig] = None) -> AnchoredFlow:
    """흐름이 이미 평형점 목록을 들고 있으면 N 안의 것만, 아니면 격자 시드 뉴턴으로 찾는다."""
    config = config or FlowConfig()
    if isinstance(flow, AnchoredFlow):
        return flow
    if flow.equilibria:
        inside = [e for e in flow.equilibria if region.contains(e.coords, tol=1e-9)]
        return AnchoredFlow(flow, inside)
    found: List[np.ndarray] = []
    for seed in region_grid(region, min(config.seeds_per_axis, 16)):
        z = _newton_zero(flow, seed, config, limit=region.scale)
        if z is None or not region.contains(z, tol=1e-9):
            continue
        if any(flow.domain.distance(z, q) < config.dedupe_radius for q in found):
            continue
        found.append(z)
    found.sort(key=lambda c: tuple(np.round(c, 9)))
    equilibria = []
    for i, z in enumerate(found):
        e = _equilibrium_at(flow, z, f"e{i}", config)
        if e is not None:
            equilibria.append(e)
    logger.debug(f"anchor_flow: {len(equilibria)} hyperbolic equilibria in region")
    return AnchoredFlow(flow, equilibria)


def _orbit(flow: VectorFlow, p, direction: int, region: Region, isolation: IsolationConfig, config: FlowConfig) -> Orbit:
    stop = StopRule(t_reach=isolation.t_max, hit_critical=True, region=region)
    return integrate(flow, p, direction=direction, stop=stop, config=config)


# ──────────────────────────────────────────────────────────────────────────────
# 고립 근방
# ──────────────────────────────────────────────────────────────────────────────
def verify_isolating_neighborhood(
    flow: VectorFlow,
    region: Region,
    *,
    isolation: Optional[IsolationConfig] = None,
    config: Optional[FlowConfig] = None,
    threads: Optional[int] = None,
) -> IsolatingNeighborhood:
    """
    Inv(N) ⊂ Int(N) 의 표본 인증.
    - 경계 메쉬의 각 점이 앞/뒤 중 한 방향으로 T_max 안에 N 을 떠나야 함
    - 양방향 모두 머무는 내부 격자점 (S 표본) 은 ∂N 에서 margin_int 보다 멀어야 함
    """
    isolation = isolation or IsolationConfig()
    config = config or FlowConfig()
    anchored = anchor_flow(flow, region, config=config)
    mesh, _ = boundary_mesh(region, isolation.boundary_spacing)

    def boundary_status(p: np.ndarray) -> str:
        fwd = _orbit(anchored, p, 1, region, isolation, config)
        if fwd.status is OrbitStatus.EXITED:
            return "exit"
        bwd = _orbit(anchored, p, -1, region, isolation, config)
        if bwd.status is OrbitStatus.EXITED:
            return "exit"
        if fwd.status is OrbitStatus.CONVERGED and bwd.status is OrbitStatus.CONVERGED:
            return "stays"
        return "capped"

    def stays_both(p: np.ndarray) -> bool:
        # 뒤방향을 먼저: 끌개 근처 점은 대부분 뒤로 금방 빠져나감
        if _orbit(anchored, p, -1, region, isolation, config).status is OrbitStatus.EXITED:
            return False
        return _orbit(anchored, p, 1, region, isolation, config).status is not OrbitStatus.EXITED

    statuses = parallel_map(boundary_status, list(mesh), threads=threads)
    refutations: List[Dict[str, Any]] = []
    inconclusive: List[List[float]] = []
    for p, s in zip(mesh, statuses):
        if s == "stays":
            refutations.append({"point": [float(c) for c in p], "reason": "boundary point stays in N in both directions"})
        elif s == "capped":
            inconclusive.append([float(c) for c in p])

    grid = region_grid(region, isolation.interior_per_axis)
    flags = parallel_map(stays_both, list(grid), threads=threads)
    samples = [p for p, keep in zip(grid, flags) if keep]
    samples.extend(e.coords for e in anchored.equilibria)
    s_samples = np.unique(np.round(np.array(samples), 12), axis=0) if samples else np.zeros((0, region.domain.dimension))

    min_margin: Optional[float] = None
    if len(s_samples):
        dist = BoundaryDistance(region, isolation.boundary_spacing)(s_samples)
        min_margin = float(np.min(dist))
        for p, d in zip(s_samples, dist):
            if d <= isolation.margin_int:
                refutations.append(
                    {"point": [float(c) for c in p], "reason": "invariant set sample near boundary", "distance": float(d)}
                )

    if refutations:
        verdict = Verdict.REFUTED
    elif inconclusive:
        verdict = Verdict.INCONCLUSIVE
        logger.warning(f"isolation: {len(inconclusive)} boundary points time-capped; increase t_max")
    else:
        verdict = Verdict.CERTIFIED
    logger.info(
        f"verify_isolating_neighborhood: {verdict.value} "
        f"(boundary={len(mesh)}, interior={len(grid)}, S={len(s_samples)}, margin={min_margin})"
    )
    return IsolatingNeighborhood(
        region=region,
        verdict=verdict,
        s_samples=s_samples,
        equilibria=anchored.equilibria,
        boundary_points=len(mesh),
        interior_points=len(grid),
        refutations=refutations,
        inconclusive=inconclusive,
        min_margin=min_margin,
        t_max=isolation.t_max,
    )


# ──────────────────────────────────────────────────────────────────────────────
# 고립 사상: S_h = S_−^A ∩ h⁻¹(S_+^B)
# ──────────────────────────────────────────────────────────────────────────────
def _orbit_margin(orbit: Orbit, distance: BoundaryDistance) -> float:
    pts = orbit.points
    if orbit.terminal is not None:
        pts = np.vstack([pts, orbit.terminal.coords[None, :]])
    return float(np.min(distance(pts)))


def verify_isolated_map(
    h,
    flow_A: VectorFlow,
    flow_B: VectorFlow,
    region_A: Region,
    region_B: Region,
    *,
    isolation: Optional[IsolationConfig] = None,
    config: Optional[FlowConfig] = None,
    threads: Optional[int] = None,
) -> IsolatedMapReport:
    """뒤로 N_A 에 머물고 상의 앞궤도가 N_B 에 머무는 점마다 두 궤도 폐포의 내부성 확인."""
    isolation = isolation or IsolationConfig()
    config = config or FlowConfig()
    A = anchor_flow(flow_A, region_A, config=config)
    B = anchor_flow(flow_B, region_B, config=config)
    dist_A = BoundaryDistance(region_A, isolation.boundary_spacing)
    dist_B = BoundaryDistance(region_B, isolation.boundary_spacing)

    candidates = list(region_grid(region_A, isolation.interior_per_axis))
    candidates.extend(e.coords for e in A.equilibria)
    candidates = list(np.unique(np.round(np.array(candidates), 12), axis=0))

    def examine(p: np.ndarray) -> Optional[Dict[str, Any]]:
        bwd = _orbit(A, p, -1, region_A, isolation, config)
        if bwd.status is OrbitStatus.EXITED:
            return None
        q = np.asarray(h.image(p), dtype=float)
        if not region_B.contains(q):
            return None
        fwd = _orbit(B, q, 1, region_B, isolation, config)
        if fwd.status is OrbitStatus.EXITED:
            return None
        return {
            "point": [float(c) for c in p],
            "image": [float(c) for c in q],
            "margin_source": _orbit_margin(bwd, dist_A),
            "margin_target": _orbit_margin(fwd, dist_B),
        }

    hits = [r for r in parallel_map(examine, candidates, threads=threads) if r is not None]
    offending = [r for r in hits if min(r["margin_source"], r["margin_target"]) <= isolation.margin_int]
    margins = [min(r["margin_source"], r["margin_target"]) for r in hits]
    s_h = np.array([r["point"] for r in hits]) if hits else np.zeros((0, region_A.domain.dimension))
    verdict = Verdict.REFUTED if offending else Verdict.CERTIFIED
    logger.info(f"verify_isolated_map: {verdict.value} (|S_h|={len(hits)}, offending={len(offending)})")
    return IsolatedMapReport(
        verdict=verdict,
        s_h=s_h,
        offending=offending,
        min_margin=min(margins) if margins else None,
        candidates=len(candidates),
    )


def verify_isolated_homotopy(
    check: Callable[[float], Any],
    lo: float,
    hi: float,
    *,
    points: Optional[int] = None,
    label: str = "lambda",
    depth: Optional[int] = None,
) -> HomotopyIsolationReport:
    """
    매개변수 격자에서 check(v) 인증서를 모으고, 이웃 격자점 사이에서 S 서명이 바뀌면
    이분 탐색으로 그 구간을 좁혀 경계 접촉 (반증) 을 찾는다.
    끝까지 반증이 없으면 내부 분기로 보고 메모만 남긴다.
    """
    points = points or settings.LAMBDA_GRID
    depth = depth or settings.REFINE_DEPTH
    samples: List[Dict[str, Any]] = []

    def run(v: float):
        cert = check(v)
        samples.append({"param": v, "verdict": cert.verdict.value, "signature": list(cert.signature)})
        return cert

    def report(verdict: Verdict, violated=None, notes=()) -> HomotopyIsolationReport:
        samples.sort(key=lambda s: s["param"])
        if violated is not None:
            logger.warning(f"isolated homotopy violated: {label} in [{violated[0]:.6g}, {violated[1]:.6g}]")
        return HomotopyIsolationReport(label, verdict, samples, violated, list(notes))

    grid = [float(v) for v in np.linspace(lo, hi, points)]
    certs = [run(v) for v in grid]
    for v, c in zip(grid, certs):
        if c.verdict is Verdict.REFUTED:
            return report(Verdict.REFUTED, (v, v))

    notes: List[str] = []
    for (a, ca), (b, cb) in zip(zip(grid, certs), zip(grid[1:], certs[1:])):
        if ca.signature == cb.signature:
            continue
        left = ca.signature
        for _ in range(depth):
            mid = 0.5 * (a + b)
            cm = run(mid)
            if cm.verdict is Verdict.REFUTED:
                return report(Verdict.REFUTED, (a, b))
            if cm.signature == left:
                a = mid
            else:
                b = mid
        notes.append(f"S signature changes in {label} ∈ [{a:.6g}, {b:.6g}] without boundary contact")
    return report(Verdict.worst([c.verdict for c in certs]), None, notes)


# ──────────────────────────────────────────────────────────────────────────────
# 흐름 사상
# ──────────────────────────────────────────────────────────────────────────────
def _sample_points(domain, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.0, 1.0, size=(count, domain.dimension))
    return domain.lower + u * (domain.upper - domain.lower)


def _relevant_samples(h, region_B: Optional[Region], count: int, seed: int) -> np.ndarray:
    """region_B 가 있으면 h⁻¹(N_B) 안의 표본만 (소스에서 넉넉히 뽑아 거른다)."""
    if region_B is None:
        return _sample_points(h.source, count, seed)
    candidates = _sample_points(h.source, 8 * count, seed)
    inside = region_B.contains_many(h.images(candidates))
    return candidates[inside][:count]


def _flow_for(flow: VectorFlow, p, t: float, config: FlowConfig) -> Optional[np.ndarray]:
    """φ(t, p). 유한 시간 폭주 등으로 정의되지 않으면 None."""
    if t == 0.0:
        return np.asarray(p, dtype=float)
    direction = 1 if t > 0 else -1
    try:
        orbit = integrate(
            flow, p, direction=direction, stop=StopRule(t_reach=abs(t), hit_critical=False), config=config
        )
    except IntegrationFailure as exc:
        logger.debug(f"_flow_for: undefined at t={t}: {exc.message} {exc.detail}")
        return None
    return flow.domain.reduce(orbit.endpoint)


def verify_flow_map(
    h,
    flow_A: VectorFlow,
    flow_B: VectorFlow,
    *,
    region_B: Optional[Region] = None,
    isolation: Optional[IsolationConfig] = None,
    config: Optional[FlowConfig] = None,
    threads: Optional[int] = None,
) -> FlowMapReport:
    """
    ‖h(φ^A(t,p)) − φ^B(t,h(p))‖ 표본 최대값 + (박스 소스면) 고유성 확인.
    region_B 가 있으면 h(p) ∈ N_B 인 표본만 본다. 양쪽 흐름이 모두 정의되지 않는 (t, p) 는
    undefined 로 세고 건너뛰며, 한쪽만 정의되면 잔차 ∞ 로 반증.
    """
    isolation = isolation or IsolationConfig()
    config = config or FlowConfig()
    points = _relevant_samples(h, region_B, isolation.equivariance_samples, isolation.seed)

    def residuals(p: np.ndarray) -> List[Tuple[float, Optional[float]]]:
        hp = h.image(p)
        out = []
        for t in _EQUIVARIANCE_TIMES:
            moved_A = _flow_for(flow_A, p, t, config)
            rhs = _flow_for(flow_B, hp, t, config)
            if moved_A is None and rhs is None:
                out.append((t, None))
            elif moved_A is None or rhs is None:
                out.append((t, math.inf))
            else:
                out.append((t, h.target.distance(h.image(moved_A), rhs)))
        return out

    worst: Optional[Dict[str, Any]] = None
    max_residual = 0.0
    compared = undefined = 0
    for p, rows in zip(points, parallel_map(residuals, list(points), threads=threads)):
        for t, r in rows:
            if r is None:
                undefined += 1
                continue
            compared += 1
            if r > max_residual:
                max_residual = r
                worst = {"point": [float(c) for c in p], "t": t, "residual": r}

    notes: List[str] = []
    proper = True
    if not h.source.is_torus and region_B is not None:
        # h⁻¹(N_B) 가 소스 박스 안쪽에 있어야 함: 소스 박스 경계의 상이 N_B 에 닿으면 안 됨
        edge, _ = boundary_mesh(Region.whole(h.source), isolation.boundary_spacing)
        hits = region_B.contains_many(h.images(edge))
        if hits.any():
            proper = False
            notes.append(f"{int(hits.sum())} source boundary points map into N_B")
    else:
        notes.append("compact source: properness automatic" if h.source.is_torus else "no target region given")
    if undefined:
        notes.append(f"{undefined} (point, time) pairs undefined for both flows (finite-time blow-up)")

    if max_residual >= isolation.equivariance_tol or not proper:
        verdict = Verdict.REFUTED
    elif compared == 0:
        verdict = Verdict.INCONCLUSIVE
        notes.append("no comparable samples")
    else:
        verdict = Verdict.CERTIFIED
    logger.info(
        f"verify_flow_map: {verdict.value} (max residual {max_residual:.3g}, proper={proper}, "
        f"compared={compared}, undefined={undefined})"
    )
    return FlowMapReport(verdict, max_residual, worst, proper, compared, undefined, notes)


def _gap_to_box(x: np.ndarray, box: Box, torus: bool) -> float:
    gaps = []
    for v, lo, hi in zip(x, box.lower, box.upper):
        if torus:
            if hi - lo >= 1.0:
                gaps.append(0.0)
                continue
            v = lo + ((v - lo) % 1.0)
            gaps.append(0.0 if v <= hi else min(v - hi, lo + 1.0 - v))
        else:
            gaps.append(max(lo - v, 0.0, v - hi))
    return float(np.linalg.norm(gaps))


def pullback_neighborhood(
    h,
    region_B: Region,
    *,
    flow_A: VectorFlow,
    flow_B: VectorFlow,
    isolation: Optional[IsolationConfig] = None,
    config: Optional[FlowConfig] = None,
    threads: Optional[int] = None,
) -> PullbackReport:
    """
    h⁻¹(N_B) 의 상자 덮개. 소스 도메인을 16 등분한 격자에서 시작해 꼭짓점+중심의 상이
    섞이는 칸만 2ⁿ 분할 (해상도 = pullback_resolution × 도메인 크기). 가장 작은 칸은
    중심의 상이 N_B 안일 때만 채택. 결과는 다시 고립 인증하고 h 의 고립성도 확인.
    """
    isolation = isolation or IsolationConfig()
    config = config or FlowConfig()
    source = h.source
    n = source.dimension
    finest = isolation.pullback_resolution * source.scale
    torus_B = region_B.domain.is_torus
    corners = np.array(list(np.ndindex(*(2,) * n)), dtype=float)

    width0 = (source.upper - source.lower) / _PULLBACK_COARSE
    stack = [(source.lower + np.array(idx) * width0, width0, 0) for idx in np.ndindex(*(_PULLBACK_COARSE,) * n)]
    kept: List[Box] = []
    while stack:
        lower, width, depth = stack.pop()
        pts = np.vstack([lower + corners * width, (lower + 0.5 * width)[None, :]])
        imgs = h.images(pts)
        inside = region_B.contains_many(imgs)
        if inside.all():
            kept.append(Box(tuple(lower), tuple(lower + width)))
            continue
        if not inside.any():
            center = imgs[-1]
            spread = max(region_B.domain.distance(center, q) for q in imgs[:-1])
            gap = min(_gap_to_box(center, b, torus_B) for b in region_B.boxes)
            if gap > spread:
                continue
        if np.max(width) <= finest or depth >= isolation.refine_depth:
            if inside[-1]:
                kept.append(Box(tuple(lower), tuple(lower + width)))
            continue
        half = width / 2
        for idx in np.ndindex(*(2,) * n):
            stack.append((lower + np.array(idx) * half, half, depth + 1))

    if not kept:
        raise PullbackError("h⁻¹(N_B) 가 표본 해상도에서 비어 있음", region=region_B.to_dict())
    boxes = merge_boxes(kept)
    region_A = Region(source, tuple(boxes))
    logger.info(f"pullback_neighborhood: {len(kept)} cells -> {len(boxes)} boxes")
    cert = verify_isolating_neighborhood(flow_A, region_A, isolation=isolation, config=config, threads=threads)
    map_report = verify_isolated_map(
        h, flow_A, flow_B, region_A, region_B, isolation=isolation, config=config, threads=threads
    )
    verdict = Verdict.worst([cert.verdict, map_report.verdict])
    return PullbackReport(verdict, region_A, cert, map_report, len(kept))


# ──────────────────────────────────────────────────────────────────────────────
# 랴푸노프 함수
# ──────────────────────────────────────────────────────────────────────────────
def verify_lyapunov(
    f_phi: ScalarField,
    flow: VectorFlow,
    neighborhood: IsolatingNeighborhood,
    *,
    isolation: Optional[IsolationConfig] = None,
) -> LyapunovCertificate:
    """S 표본 위 변동 < tol_const, S 에서 2·margin_int 밖의 격자점에서 ⟨∇f_φ, X⟩ < 0."""
    isolation = isolation or IsolationConfig()
    if not neighborhood.certified:
        return LyapunovCertificate(
            f_phi, neighborhood, Verdict.INCONCLUSIVE, 0.0, 0.0, reason="neighborhood not certified"
        )
    S = neighborhood.s_samples
    variation = float(np.ptp(f_phi.values(S))) if len(S) else 0.0

    grid = region_grid(neighborhood.region, isolation.lyapunov_per_axis)
    if len(S):
        torus = f_phi.domain.is_torus
        tree = cKDTree(f_phi.domain.reduce(S) if torus else S, boxsize=1.0 if torus else None)
        d, _ = tree.query(f_phi.domain.reduce(grid) if torus else grid, k=1)
        grid = grid[d > 2 * isolation.margin_int]
    rates = np.array([float(f_phi.gradient(p) @ flow.velocity(p)) for p in grid])
    margin = float(-np.max(rates)) if len(rates) else math.inf
    worst = [float(c) for c in grid[int(np.argmax(rates))]] if len(rates) else None

    reason = None
    if variation >= isolation.tol_const:
        reason = "f_phi not constant on S"
    elif margin <= 0.0:
        reason = "f_phi does not decrease along the flow off S"
    verdict = Verdict.REFUTED if reason else Verdict.CERTIFIED
    logger.info(f"verify_lyapunov: {verdict.value} (variation={variation:.3g}, margin={margin:.3g}, checked={len(grid)})")
    return LyapunovCertificate(f_phi, neighborhood, verdict, variation, margin, len(grid), worst, reason)


# ──────────────────────────────────────────────────────────────────────────────
# 국소 모스 / 모스–콘리–플뢰어 호몰로지
# ──────────────────────────────────────────────────────────────────────────────
def local_morse_homology(
    field_: ScalarField,
    metric: Optional[Metric],
    region: Region,
    *,
    config: Optional[FlowConfig] = None,
    perturbation: Optional[PerturbationConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    isolation: Optional[IsolationConfig] = None,
    certificate: Optional[IsolatingNeighborhood] = None,
    threads: Optional[int] = None,
) -> LocalHomology:
    """HM_*(f, g, N): N 인증 → (필요시) 고립성을 유지하는 섭동 → N 안의 복합체 → 호몰로지."""
    metric = metric or Metric.euclidean(field_.domain.dimension)
    cert = certificate or verify_isolating_neighborhood(
        GradientFlow(field_, metric), region, isolation=isolation, config=config, threads=threads
    )
    require_certified(cert, "isolating neighborhood")

    def keeps_isolation(d) -> bool:
        if d.perturbation is None:
            return True
        again = verify_isolating_neighborhood(d.flow, region, isolation=isolation, config=config, threads=threads)
        return again.certified

    datum = generic_datum(field_, metric, region, config=config, perturbation=perturbation, accept=keeps_isolation)
    table = connection_counts(datum, region, config=config, shooting=shooting, threads=threads)
    complex_ = boundary_operator(datum, region, table=table)
    result = homology(complex_)
    logger.info(f"local_morse_homology: {field_.text!r} on {region.to_dict()['boxes']} -> {result.describe()}")
    return LocalHomology(MorseHomology(datum, complex_, table, result), cert)


def mcf_homology(
    flow: VectorFlow,
    region: Region,
    f_phi: ScalarField,
    metric: Optional[Metric] = None,
    *,
    config: Optional[FlowConfig] = None,
    perturbation: Optional[PerturbationConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    isolation: Optional[IsolationConfig] = None,
    threads: Optional[int] = None,
) -> LocalHomology:
    """HI_*(S, φ) = HM_*(f_φ, g, N): 랴푸노프 함수의 국소 모스 호몰로지."""
    flow_cert = verify_isolating_neighborhood(flow, region, isolation=isolation, config=config, threads=threads)
    require_certified(flow_cert, "isolating neighborhood of the flow")
    lyap = verify_lyapunov(f_phi, flow, flow_cert, isolation=isolation)
    require_certified(lyap, "Lyapunov function")
    local = local_morse_homology(
        f_phi,
        metric,
        region,
        config=config,
        perturbation=perturbation,
        shooting=shooting,
        isolation=isolation,
        threads=threads,
    )
    return replace(local, lyapunov=lyap, flow_certificate=flow_cert)


def mcf_induced_map(
    h,
    flow_A: VectorFlow,
    flow_B: VectorFlow,
    region_B: Region,
    f_phi_B: ScalarField,
    metric_A: Optional[Metric] = None,
    metric_B: Optional[Metric] = None,
    *,
    config: Optional[FlowConfig] = None,
    perturbation: Optional[PerturbationConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    isolation: Optional[IsolationConfig] = None,
    threads: Optional[int] = None,
) -> MCFInducedMap:
    """
    흐름 사상 h 의 HI 유도사상.
    N_A = h⁻¹(N_B), f_A = f_φ^B∘h 로 끌어온 뒤 그래디언트 흐름에 대해 h 의 고립성을 인증하고
    횡단이 되도록 섭동한 h 의 국소 유도 사슬사상을 계산한다.
    """
    # 지연 import (inducedmaps → conley 순환 방지)
    from domains.inducedmaps.services import perturb_to_transverse

    opts = dict(config=config, isolation=isolation, threads=threads)
    flow_map = verify_flow_map(h, flow_A, flow_B, region_B=region_B, **opts)
    require_certified(flow_map, "flow map")
    target = mcf_homology(
        flow_B, region_B, f_phi_B, metric_B, perturbation=perturbation, shooting=shooting, **opts
    )
    pull = pullback_neighborhood(h, region_B, flow_A=flow_A, flow_B=flow_B, **opts)
    require_certified(pull, "pullback neighborhood")
    region_A = pull.region
    f_A = compose_field(f_phi_B, h.smooth)
    lyap_A = verify_lyapunov(f_A, flow_A, pull.certificate, isolation=isolation)
    require_certified(lyap_A, "pulled-back Lyapunov function")
    source = local_morse_homology(
        f_A, metric_A, region_A, perturbation=perturbation, shooting=shooting, **opts
    )
    source = replace(source, lyapunov=lyap_A, flow_certificate=pull.certificate)

    iso = verify_isolated_map(h, source.datum.flow, target.datum.flow, region_A, region_B, **opts)
    require_certified(iso, "isolated map (gradient flows)")
    transverse = perturb_to_transverse(
        h,
        source.datum,
        target.datum,
        region_A=region_A,
        region_B=region_B,
        complexes=(source.complex, target.complex),
        config=config,
        shooting=shooting,
        isolation=isolation,
        seed=perturbation.seed if perturbation else None,
        threads=threads,
    )
    M = transverse.moduli.chain_map
    on_h = induced_on_homology(M)
    logger.info(f"mcf_induced_map: {h.describe()} -> { {k: m.to_rows() for k, m in on_h.items()} }")
    return MCFInducedMap(M, on_h, source, target, flow_map, pull, iso)


# ──────────────────────────────────────────────────────────────────────────────
# 박스 도메인: H_*(M, ∂M_−) 와 모스 호몰로지 비교
# ──────────────────────────────────────────────────────────────────────────────
def boundary_exit_homology(
    field_: ScalarField,
    metric: Optional[Metric] = None,
    *,
    config: Optional[FlowConfig] = None,
    perturbation: Optional[PerturbationConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    isolation: Optional[IsolationConfig] = None,
    threads: Optional[int] = None,
) -> BoundaryExitReport:
    """각 면을 출구/입구/혼합으로 분류. 혼합 면이 없으면 입방체 세포로 H_*(M, 출구 면) 을 계산."""
    domain = field_.domain
    if domain.is_torus:
        raise DomainError("경계 출구 호몰로지는 박스 도메인에서만", domain=domain.to_dict())
    isolation = isolation or IsolationConfig()
    metric = metric or Metric.euclidean(domain.dimension)
    flow = GradientFlow(field_, metric)
    whole = Region.whole(domain)
    mesh, normals = boundary_mesh(whole, isolation.boundary_spacing)

    faces: List[FaceExit] = []
    exits = set()
    for axis in range(domain.dimension):
        for side, value, sign in (("l", domain.lower[axis], -1.0), ("u", domain.upper[axis], 1.0)):
            on_face = (normals[:, axis] == sign) & np.isclose(mesh[:, axis], value)
            rates = np.array([float(flow.velocity(p) @ nu) for p, nu in zip(mesh[on_face], normals[on_face])])
            if len(rates) and np.all(rates > 0):
                kind = "exit"
                exits.add((axis, side))
            elif len(rates) and np.all(rates < 0):
                kind = "entrance"
            else:
                kind = "mixed"
            faces.append(FaceExit(axis, "lower" if side == "l" else "upper", kind))

    if any(f.kind == "mixed" for f in faces):
        logger.warning("boundary_exit_homology: mixed face; relative homology not computed")
        return BoundaryExitReport(Verdict.INCONCLUSIVE, faces)
    relative = homology(relative_cube_complex(domain.dimension, exits))
    morse = morse_homology(
        field_, metric, config=config, perturbation=perturbation, shooting=shooting, threads=threads
    ).homology
    verdict = Verdict.CERTIFIED if isomorphic_groups(relative, morse) and isomorphic_groups(morse, relative) else Verdict.REFUTED
    logger.info(f"boundary_exit_homology: {verdict.value} (relative {relative.describe()}, morse {morse.describe()})")
    return BoundaryExitReport(verdict, faces, relative, morse)
