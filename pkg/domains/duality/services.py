"""
쌍대 모스 데이터와 푸앵카레 쌍대.
주변 방향은 표준 좌표 방향으로 고정. ô(x) = o(x)·(−1)^{k(k+1)/2}·sgn det[E^u_x, Ê^u_x] 로 두면
PD_k(x) = η_x 가 부호 없이 사슬사상이 되고 n(x, y; Q) = n(y, x; Q̂) 가 성립한다.
"""
from __future__ import annotations

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from domains.exprfield.services import make_field
from domains.flowcore.models import CriticalPoint, FlowConfig, GradientFlow, Metric, MorseDatum, Region, VectorFlow
from domains.moduli.models import CountTable, ShootingConfig
from domains.moduli.services import boundary_operator, connection_counts, continuation_map, working_region
from domains.zalgebra.matrices import IntMatrix
from domains.zalgebra.models import ChainMapError, GradedComplex, GradedIntMap
from domains.zalgebra.services import (
    dualize,
    equal_on_homology,
    homology,
    is_quasi_isomorphism,
    isomorphic_groups,
    regrade,
    require_chain_map,
)

from .models import (
    ConleyDualityReport,
    ContinuationDualityReport,
    CountSymmetryReport,
    DualDatum,
    DualityError,
    PoincareDualityReport,
    SymmetryMismatch,
)

logger = logging.getLogger(__name__)

__all__ = [
    "DualityError",
    "dual_datum",
    "dual_cochains",
    "poincare_duality_map",
    "poincare_duality",
    "verify_count_symmetry",
    "conley_duality_check",
    "pd_continuation_check",
]


def _sgn_det(frame: np.ndarray) -> int:
    return 1 if np.linalg.det(frame) > 0 else -1


def _dual_point(c: CriticalPoint, m: int) -> Tuple[CriticalPoint, int]:
    k = c.index
    sign = (-1) ** (k * (k + 1) // 2) * _sgn_det(np.hstack([c.unstable_frame, c.stable_frame]))
    dual = CriticalPoint(
        label=c.label,
        coords=c.coords,
        index=m - k,
        eigenvalues=tuple(sorted(-e for e in c.eigenvalues)),
        unstable_frame=c.stable_frame,
        stable_frame=c.unstable_frame,
        orientation=c.orientation * sign,
    )
    return dual, sign


def dual_datum(datum: MorseDatum) -> DualDatum:
    """(M, f, g, o) → (M, −f, g, ô). 임계점 순서와 라벨은 유지."""
    m = datum.dimension
    points: List[CriticalPoint] = []
    signs: Dict[str, int] = {}
    for c in datum.critical_points:
        d, s = _dual_point(c, m)
        points.append(d)
        signs[c.label] = s
    dual = MorseDatum(
        domain=datum.domain,
        field=make_field(datum.domain, f"-({datum.field.text})"),
        metric=datum.metric,
        critical_points=tuple(points),
        region=datum.region,
        perturbation=datum.perturbation,
    )
    logger.debug(f"dual_datum: indices {[(c.label, c.index) for c in points]}")
    return DualDatum(datum, dual, signs)


def dual_cochains(dual_complex: GradedComplex, m: int) -> GradedComplex:
    """C^{m−k}(Q̂) 를 사슬 차수 k 에 놓은 복합체 (미분 δ^{m−k} = ∂̂ᵀ)."""
    return regrade(dualize(dual_complex), m)


def _pd_matrices(source: GradedComplex, target: GradedComplex) -> Dict[int, IntMatrix]:
    mats: Dict[int, IntMatrix] = {}
    for k in source.degrees:
        column = {f"{x}*": j for j, x in enumerate(source.labels(k))}
        rows = [[0] * source.rank(k) for _ in target.labels(k)]
        for i, eta in enumerate(target.labels(k)):
            if eta in column:
                rows[i][column[eta]] = 1
        mats[k] = IntMatrix.from_rows(rows, cols=source.rank(k))
    return mats


def poincare_duality_map(
    datum: MorseDatum,
    region: Optional[Region] = None,
    *,
    dual: Optional[DualDatum] = None,
    complexes: Optional[Tuple[GradedComplex, GradedComplex]] = None,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    threads: Optional[int] = None,
) -> GradedIntMap:
    """
    PD_k(x) = η_x : C_k(Q) → C^{m−k}(Q̂). 두 복합체는 각각 f, −f 의 개수로 따로 조립한다.
    δ^{m−k}∘PD_k = PD_{k−1}∘∂_k 가 깨지면 DualityError (부호 규약 버그).
    """
    dual = dual or dual_datum(datum)
    region = working_region(datum, region)
    C, C_hat = complexes or (
        boundary_operator(datum, region, config=config, shooting=shooting, threads=threads),
        boundary_operator(dual.dual, region, config=config, shooting=shooting, threads=threads),
    )
    target = dual_cochains(C_hat, datum.dimension)
    PD = GradedIntMap(C, target, _pd_matrices(C, target))
    try:
        require_chain_map(PD, what="Poincare duality map")
    except ChainMapError as exc:
        raise DualityError("PD 가 사슬사상이 아님", **exc.detail) from exc
    return PD


def poincare_duality(
    datum: MorseDatum,
    region: Optional[Region] = None,
    *,
    complex_: Optional[GradedComplex] = None,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    threads: Optional[int] = None,
) -> PoincareDualityReport:
    """PD 를 만들고 호몰로지 동형 (사상 원뿔 비순환) 과 HM_k ≅ HM^{m−k} 를 확인."""
    dual = dual_datum(datum)
    region = working_region(datum, region)
    opts = dict(config=config, shooting=shooting, threads=threads)
    C = complex_ or boundary_operator(datum, region, **opts)
    C_hat = boundary_operator(dual.dual, region, **opts)
    PD = poincare_duality_map(datum, region, dual=dual, complexes=(C, C_hat), **opts)
    m = datum.dimension
    base = homology(C)
    co = homology(dualize(C_hat))
    matched = isomorphic_groups(base, co, pairing=lambda k: m - k)
    report = PoincareDualityReport(dual, PD, base, co, is_quasi_isomorphism(PD), matched)
    logger.info(f"poincare_duality: holds={report.holds} (H_* {base.describe()}, H^* {co.describe()})")
    return report


def verify_count_symmetry(
    datum: MorseDatum,
    region: Optional[Region] = None,
    *,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    threads: Optional[int] = None,
) -> CountSymmetryReport:
    """f 로 센 n(x, y; Q) 와 −f 로 따로 센 n(y, x; Q̂) 를 |x| − |y| = 1 인 모든 쌍에서 비교."""
    dual = dual_datum(datum)
    region = working_region(datum, region)
    opts = dict(config=config, shooting=shooting, threads=threads)
    base: CountTable = connection_counts(datum, region, **opts)
    hat: CountTable = connection_counts(dual.dual, region, **opts)
    pairs = []
    mismatches = []
    for k in range(1, datum.dimension + 1):
        for x in datum.of_index(k):
            for y in datum.of_index(k - 1):
                n, nd = base.lookup(x.label, y.label), hat.lookup(y.label, x.label)
                pairs.append((x.label, y.label, n, nd))
                if n != nd:
                    mismatches.append(SymmetryMismatch(x.label, y.label, n, nd))
    report = CountSymmetryReport(pairs, base, hat, mismatches)
    if mismatches:
        logger.warning(f"verify_count_symmetry: {len(mismatches)} mismatched pairs, first {mismatches[0].to_dict()}")
    else:
        logger.info(f"verify_count_symmetry: {len(pairs)} pairs agree")
    return report


# ──────────────────────────────────────────────────────────────────────────────
# 콘리 쌍대: HI_k(S, φ) ≅ HI^{m−k}(S, φ⁻¹)
# ──────────────────────────────────────────────────────────────────────────────
def _reversed(flow: VectorFlow) -> Optional[VectorFlow]:
    if hasattr(flow, "reversed"):
        return flow.reversed()
    if isinstance(flow, GradientFlow):
        return GradientFlow(make_field(flow.domain, f"-({flow.field.text})"), flow.metric)
    return None


def conley_duality_check(
    flow: VectorFlow,
    region: Region,
    f_phi,
    metric: Optional[Metric] = None,
    *,
    config: Optional[FlowConfig] = None,
    perturbation=None,
    shooting: Optional[ShootingConfig] = None,
    isolation=None,
    threads: Optional[int] = None,
) -> ConleyDualityReport:
    """
    HI_*(S, φ) 는 mcf_homology(f_φ) 로, HI^*(S, φ⁻¹) 는 같은 N 위 −f_φ 의 국소 복합체를 쌍대화해서.
    −f_φ 가 φ⁻¹ 의 랴푸노프 함수인지도 따로 인증한다.
    """
    from domains.conley.services import mcf_homology, verify_isolating_neighborhood, verify_lyapunov

    local = mcf_homology(
        flow, region, f_phi, metric,
        config=config, perturbation=perturbation, shooting=shooting, isolation=isolation, threads=threads,
    )
    notes: List[str] = []
    reverse_lyap = None
    reverse = _reversed(flow)
    if reverse is None:
        notes.append(f"reverse flow of {type(flow).__name__} not available; Lyapunov check for -f_phi skipped")
    else:
        cert = verify_isolating_neighborhood(reverse, region, isolation=isolation, config=config, threads=threads)
        neg = make_field(f_phi.domain, f"-({f_phi.text})")
        reverse_lyap = verify_lyapunov(neg, reverse, cert, isolation=isolation)
    duality = poincare_duality(
        local.datum, region, complex_=local.complex, config=config, shooting=shooting, threads=threads
    )
    report = ConleyDualityReport(local, duality, reverse_lyap, notes)
    logger.info(f"conley_duality_check: holds={report.holds}")
    return report


def pd_continuation_check(
    datum_A: MorseDatum,
    datum_B: MorseDatum,
    region: Optional[Region] = None,
    *,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    isolation=None,
    threads: Optional[int] = None,
) -> ContinuationDualityReport:
    """PD_B∘Φ^{BA} 와 (Φ̂^{AB})ᵀ∘PD_A 가 호몰로지에서 같은지. Φ̂ 는 −f_B → −f_A 연속사상."""
    opts = dict(config=config, shooting=shooting, threads=threads)
    region = working_region(datum_A, region)
    A_hat, B_hat = dual_datum(datum_A), dual_datum(datum_B)
    C_A = boundary_operator(datum_A, region, **opts)
    C_B = boundary_operator(datum_B, region, **opts)
    H_A = boundary_operator(A_hat.dual, region, **opts)
    H_B = boundary_operator(B_hat.dual, region, **opts)

    phi = continuation_map(datum_A, datum_B, region=region, complexes=(C_A, C_B), isolation=isolation, **opts)
    phi_hat = continuation_map(B_hat.dual, A_hat.dual, region=region, complexes=(H_B, H_A), isolation=isolation, **opts)
    PD_A = poincare_duality_map(datum_A, region, dual=A_hat, complexes=(C_A, H_A), **opts)
    PD_B = poincare_duality_map(datum_B, region, dual=B_hat, complexes=(C_B, H_B), **opts)

    m = datum_A.dimension
    transposed = GradedIntMap(
        PD_A.target,
        PD_B.target,
        {k: phi_hat.matrix(m - k).T for k in PD_A.target.degrees},
    )
    left = PD_B.compose(phi)
    right = transposed.compose(PD_A)
    report = ContinuationDualityReport(phi, phi_hat, left, right, equal_on_homology(left, right))
    logger.info(f"pd_continuation_check: commutes={report.commutes}")
    return report
