from __future__ import annotations

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import settings
from domains.flowcore.models import FlowConfig, MorseDatum, Region
from domains.moduli.intersections import intersection_matrix, intersection_row
from domains.moduli.models import ConnectionCount, IndexMismatchError, ShootingConfig, TransversalityError
from domains.moduli.services import boundary_operator, continuation_map, working_region
from domains.zalgebra.matrices import IntMatrix
from domains.zalgebra.models import ChainMapError, GradedComplex, GradedIntMap
from domains.zalgebra.services import equal_on_homology, induced_on_homology, require_chain_map

from .maps import ComposedMap, FlowTimeMap, MapFamily, PointMap
from .models import (
    FunctorialityReport,
    HomotopyEndpointError,
    HomotopyReport,
    MapModuli,
    PerturbationError,
    ShiftedMap,
    TransversePerturbation,
)

logger = logging.getLogger(__name__)

__all__ = [
    "PerturbationError",
    "HomotopyEndpointError",
    "count_map_intersections",
    "map_moduli",
    "induced_chain_map",
    "perturb_to_transverse",
    "compose_with_flow",
    "homotopy_check",
    "homology_matrices",
]


def _is_local(datum: MorseDatum, region: Optional[Region]) -> bool:
    return region is not None or datum.region is not None


def count_map_intersections(
    h: PointMap,
    datum_A: MorseDatum,
    datum_B: MorseDatum,
    x: str,
    y: str,
    *,
    region_A: Optional[Region] = None,
    region_B: Optional[Region] = None,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    threads: Optional[int] = None,
) -> ConnectionCount:
    """n_h(x, y), |x| = |y|. 증인 점과 부호 포함."""
    cx, cy = datum_A.by_label(x), datum_B.by_label(y)
    if cx.index != cy.index:
        raise IndexMismatchError("|x| = |y| 이어야 함", x=x, y=y, x_index=cx.index, y_index=cy.index)
    row = intersection_row(
        h,
        datum_A,
        datum_B,
        cx,
        [cy],
        region_A=working_region(datum_A, region_A),
        region_B=working_region(datum_B, region_B),
        config=config,
        shooting=shooting,
        threads=threads,
    )
    return row.get(y, ConnectionCount(cx, cy))


def map_moduli(
    h: PointMap,
    datum_A: MorseDatum,
    datum_B: MorseDatum,
    *,
    region_A: Optional[Region] = None,
    region_B: Optional[Region] = None,
    complexes: Optional[Tuple[GradedComplex, GradedComplex]] = None,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    threads: Optional[int] = None,
) -> MapModuli:
    """h_*(x) = Σ_{|y|=|x|} n_h(x, y)·y. 사슬사상 항등식이 깨지면 ChainMapError."""
    region_A = working_region(datum_A, region_A)
    region_B = working_region(datum_B, region_B)
    C_A, C_B = complexes or (
        boundary_operator(datum_A, region_A, config=config, shooting=shooting, threads=threads),
        boundary_operator(datum_B, region_B, config=config, shooting=shooting, threads=threads),
    )
    mats: Dict[int, IntMatrix] = {}
    counts: List[ConnectionCount] = []
    for k in C_A.degrees:
        mats[k], row = intersection_matrix(
            h, datum_A, datum_B, k,
            region_A=region_A, region_B=region_B, config=config, shooting=shooting, threads=threads,
        )
        counts.extend(row)
    M = GradedIntMap(C_A, C_B, mats)
    require_chain_map(M, what=f"induced map of {h.describe()}")
    logger.info(f"map_moduli: {h.describe()} -> { {k: m.to_rows() for k, m in mats.items()} }")
    return MapModuli(h.describe(), datum_A, datum_B, M, counts)


def induced_chain_map(
    h: PointMap,
    datum_A: MorseDatum,
    datum_B: MorseDatum,
    *,
    region_A: Optional[Region] = None,
    region_B: Optional[Region] = None,
    complexes: Optional[Tuple[GradedComplex, GradedComplex]] = None,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    isolation=None,
    certify: bool = True,
    threads: Optional[int] = None,
) -> GradedIntMap:
    """국소 데이터면 먼저 h 의 고립성을 인증 (certify=False 면 호출자가 이미 인증한 것으로 본다)."""
    if certify and (_is_local(datum_A, region_A) or _is_local(datum_B, region_B)):
        from domains.conley.services import require_certified, verify_isolated_map

        report = verify_isolated_map(
            h,
            datum_A.flow,
            datum_B.flow,
            working_region(datum_A, region_A),
            working_region(datum_B, region_B),
            isolation=isolation,
            config=config,
            threads=threads,
        )
        require_certified(report, f"isolated map {h.describe()}")
    return map_moduli(
        h,
        datum_A,
        datum_B,
        region_A=region_A,
        region_B=region_B,
        complexes=complexes,
        config=config,
        shooting=shooting,
        threads=threads,
    ).chain_map


def perturb_to_transverse(
    h: PointMap,
    datum_A: MorseDatum,
    datum_B: MorseDatum,
    *,
    region_A: Optional[Region] = None,
    region_B: Optional[Region] = None,
    complexes: Optional[Tuple[GradedComplex, GradedComplex]] = None,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    isolation=None,
    seed: Optional[int] = None,
    attempts: Optional[int] = None,
    threads: Optional[int] = None,
) -> TransversePerturbation:
    """
    h_ε(p) = h(p) + ε·v. ε = 0 을 먼저, 그 다음 ε = 1e−3·2^−k (k = 0, 1, …).
    모든 같은 지표 쌍의 증인이 횡단이고 (국소면) 고립성이 유지될 때 채택.
    """
    from domains.conley.services import verify_isolated_map

    seed = settings.DEFAULT_SEED if seed is None else seed
    attempts = attempts or settings.PERTURB_ATTEMPTS
    local = _is_local(datum_A, region_A) or _is_local(datum_B, region_B)
    N_A, N_B = working_region(datum_A, region_A), working_region(datum_B, region_B)
    C = complexes or (
        boundary_operator(datum_A, N_A, config=config, shooting=shooting, threads=threads),
        boundary_operator(datum_B, N_B, config=config, shooting=shooting, threads=threads),
    )
    rng = np.random.default_rng(seed)
    n = h.target.dimension
    rejected = []
    schedule = [(0, 0.0)] + [(k + 1, settings.PERTURB_EPSILON * 2.0 ** -k) for k in range(attempts)]
    for attempt, eps in schedule:
        v = rng.normal(size=n)
        v = v / np.linalg.norm(v)
        candidate: PointMap = h if eps == 0.0 else ShiftedMap(h, tuple(float(c) for c in eps * v))
        if local and eps > 0.0:
            iso = verify_isolated_map(
                candidate, datum_A.flow, datum_B.flow, N_A, N_B, isolation=isolation, config=config, threads=threads
            )
            if not iso.certified:
                rejected.append({"epsilon": eps, "reason": "isolation lost"})
                continue
        try:
            moduli = map_moduli(
                candidate, datum_A, datum_B,
                region_A=N_A, region_B=N_B, complexes=C, config=config, shooting=shooting, threads=threads,
            )
        except (TransversalityError, ChainMapError) as exc:
            rejected.append({"epsilon": eps, "reason": exc.message})
            logger.debug(f"perturb_to_transverse: epsilon={eps} rejected: {exc}")
            continue
        if eps > 0.0:
            logger.info(f"perturb_to_transverse: accepted epsilon={eps} at attempt {attempt}")
        direction = tuple(float(c) for c in v) if eps > 0.0 else tuple(0.0 for _ in range(n))
        return TransversePerturbation(candidate, eps, direction, attempt, moduli, rejected)
    raise PerturbationError("횡단 섭동을 찾지 못함: h 를 직접 섭동할 것", map=h.describe(), attempts=attempts, rejected=rejected)


# ──────────────────────────────────────────────────────────────────────────────
# 흐름 삽입 합성 / 호모토피
# ──────────────────────────────────────────────────────────────────────────────
def compose_with_flow(
    h_BA: PointMap,
    h_CB: PointMap,
    datum_A: MorseDatum,
    datum_B: MorseDatum,
    datum_C: MorseDatum,
    R: float = 0.0,
    *,
    regions: Optional[Tuple[Region, Region, Region]] = None,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    isolation=None,
    threads: Optional[int] = None,
) -> FunctorialityReport:
    """
    (h_CB∘ψ^B_R∘h_BA)_*, (h_CB∘h_BA)_*, h_CB_*·h_BA_* 를 호몰로지에서 비교.
    국소면 R ∈ [0, R_max] 격자에서 h_CB∘ψ^B_R∘h_BA 의 고립성을 먼저 확인한다.
    """
    from domains.conley.models import IsolationConfig
    from domains.conley.services import anchor_flow, verify_isolated_homotopy, verify_isolated_map

    isolation = isolation or IsolationConfig()
    N_A, N_B, N_C = regions or (None, None, None)
    N_A, N_B, N_C = working_region(datum_A, N_A), working_region(datum_B, N_B), working_region(datum_C, N_C)
    local = any(_is_local(d, N) for d, N in ((datum_A, N_A), (datum_B, N_B), (datum_C, N_C)))
    opts = dict(config=config, shooting=shooting, threads=threads)

    C_A = boundary_operator(datum_A, N_A, **opts)
    C_B = boundary_operator(datum_B, N_B, **opts)
    C_C = boundary_operator(datum_C, N_C, **opts)

    report = None
    if local:
        flow_A = anchor_flow(datum_A.flow, N_A, config=config)
        flow_C = anchor_flow(datum_C.flow, N_C, config=config)

        def at(r: float):
            composite = ComposedMap((h_BA, FlowTimeMap(datum_B.flow, r, config=config, label="psi_B"), h_CB))
            return verify_isolated_map(composite, flow_A, flow_C, N_A, N_C, isolation=isolation, config=config, threads=threads)

        report = verify_isolated_homotopy(at, 0.0, isolation.r_max, points=isolation.r_grid, label="R", depth=isolation.refine_depth)
        if not report.holds:
            logger.warning(f"compose_with_flow: functoriality hypothesis violated ({report.violated_range})")

    M_BA = induced_chain_map(h_BA, datum_A, datum_B, region_A=N_A, region_B=N_B, complexes=(C_A, C_B), isolation=isolation, **opts)
    M_CB = induced_chain_map(h_CB, datum_B, datum_C, region_A=N_B, region_B=N_C, complexes=(C_B, C_C), isolation=isolation, **opts)
    product = M_CB.compose(M_BA)
    flow_R = FlowTimeMap(datum_B.flow, R, config=config, label="psi_B")
    composite = induced_chain_map(
        ComposedMap((h_BA, flow_R, h_CB)), datum_A, datum_C,
        region_A=N_A, region_B=N_C, complexes=(C_A, C_C), certify=False, **opts,
    )
    composite_zero = induced_chain_map(
        ComposedMap((h_BA, h_CB)), datum_A, datum_C,
        region_A=N_A, region_B=N_C, complexes=(C_A, C_C), certify=False, **opts,
    )
    result = FunctorialityReport(
        R=R,
        product=product,
        composite=composite,
        composite_zero=composite_zero,
        composite_agrees=equal_on_homology(product, composite),
        composite_zero_agrees=equal_on_homology(product, composite_zero),
        isolation=report,
    )
    logger.info(f"compose_with_flow: holds={result.holds}")
    return result


def _check_endpoint(family: MapFamily, lam: float, h: PointMap) -> None:
    probe = h.source.grid(5)
    a, b = family.at(lam).images(probe), h.images(probe)
    gap = max(h.target.distance(p, q) for p, q in zip(a, b))
    if gap > 1e-9:
        raise HomotopyEndpointError("호모토피 족 끝점이 주어진 사상과 다름", lam=lam, gap=gap)


def homotopy_check(
    h0: PointMap,
    h1: PointMap,
    family: MapFamily,
    datum_A: MorseDatum,
    datum_B: MorseDatum,
    *,
    data_1: Optional[Tuple[MorseDatum, MorseDatum]] = None,
    regions: Optional[Tuple[Region, Region]] = None,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    isolation=None,
    threads: Optional[int] = None,
) -> HomotopyReport:
    """
    h0 ≃ h1 (족 h_λ) ⇒ 호몰로지에서 h0_* = h1_*.
    data_1 = (A', B') 이면 h1 은 A'→B' 에서 세고 Φ_B∘h0_* 와 h1_*∘Φ_A 를 비교 (Φ: 연속사상).
    """
    from domains.conley.services import anchor_flow, verify_isolated_homotopy, verify_isolated_map

    _check_endpoint(family, 0.0, h0)
    _check_endpoint(family, 1.0, h1)
    N_A, N_B = regions or (None, None)
    N_A, N_B = working_region(datum_A, N_A), working_region(datum_B, N_B)
    opts = dict(config=config, shooting=shooting, threads=threads)

    report = None
    if _is_local(datum_A, N_A) or _is_local(datum_B, N_B):
        flow_A = anchor_flow(datum_A.flow, N_A, config=config)
        flow_B = anchor_flow(datum_B.flow, N_B, config=config)
        report = verify_isolated_homotopy(
            lambda lam: verify_isolated_map(
                family.at(lam), flow_A, flow_B, N_A, N_B, isolation=isolation, config=config, threads=threads
            ),
            0.0,
            1.0,
            points=(shooting or ShootingConfig()).lambda_grid,
            label="lambda",
        )

    M0 = induced_chain_map(h0, datum_A, datum_B, region_A=N_A, region_B=N_B, isolation=isolation, **opts)
    if data_1 is None:
        M1 = induced_chain_map(h1, datum_A, datum_B, region_A=N_A, region_B=N_B, isolation=isolation, **opts)
        equal = equal_on_homology(M0, M1)
        via = False
    else:
        A1, B1 = data_1
        M1 = induced_chain_map(h1, A1, B1, region_A=N_A, region_B=N_B, isolation=isolation, **opts)
        phi_A = continuation_map(datum_A, A1, region=N_A, complexes=(M0.source, M1.source), isolation=isolation, **opts)
        phi_B = continuation_map(datum_B, B1, region=N_B, complexes=(M0.target, M1.target), isolation=isolation, **opts)
        equal = equal_on_homology(phi_B.compose(M0), M1.compose(phi_A))
        via = True
    result = HomotopyReport(equal, induced_on_homology(M0), induced_on_homology(M1), report, via)
    logger.info(f"homotopy_check: holds={result.holds}")
    return result


def homology_matrices(M: GradedIntMap) -> Dict[int, List[List[int]]]:
    """자유 호몰로지 좌표에서의 유도사상 행렬 (리포트용 정수 리스트)."""
    return {k: m.to_rows() for k, m in induced_on_homology(M).items()}
