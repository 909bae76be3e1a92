"""
작업 핸들러. 각 핸들러는 (Workspace, 인자 dict) → TaskOutcome.
판정이 있는 작업은 expect 표 ({betti = [...], verdict = "...", holds = ...}) 가 주어지면 그것과 비교하고,
없으면 인증서/리포트의 기본 판정 (certified, holds) 을 쓴다.
"""
from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional, Tuple

from domains.conley.services import (
    boundary_exit_homology,
    local_morse_homology,
    mcf_homology,
    mcf_induced_map,
    pullback_neighborhood,
    verify_flow_map,
    verify_isolated_map,
    verify_isolating_neighborhood,
)
from domains.duality.services import (
    conley_duality_check,
    pd_continuation_check,
    poincare_duality,
    verify_count_symmetry,
)
from domains.flowcore.models import MorseDatum, Orbit, Region
from domains.flowcore.services import find_critical_points, validate_morse_smale
from domains.inducedmaps.services import compose_with_flow, homology_matrices, homotopy_check, perturb_to_transverse
from domains.moduli.models import CountTable, MorseHomology
from domains.moduli.services import continuation_map, morse_homology, switch_horizon_for
from domains.zalgebra.models import HomologyResult
from domains.zalgebra.services import induced_on_homology

from .models import ScenarioError, TaskOutcome, Workspace
from .registry import register_task

logger = logging.getLogger(__name__)

_REQUIRED = object()


def _arg(args: Dict[str, Any], key: str, default: Any = _REQUIRED) -> Any:
    if key in args:
        return args[key]
    if default is _REQUIRED:
        raise ScenarioError(f"작업 인자 {key!r} 가 필요", argument=key)
    return default


def _expect(
    args: Dict[str, Any],
    *,
    homology: Optional[HomologyResult] = None,
    verdict: Optional[str] = None,
    holds: Optional[bool] = None,
) -> Optional[bool]:
    """expect 표와 비교. 표가 없으면 verdict/holds 의 기본 판정 (정보성 작업이면 None)."""
    expect = args.get("expect")
    if not expect:
        if verdict is not None:
            return verdict == "certified"
        return holds
    if ("betti" in expect or "torsion" in expect) and homology is None:
        raise ScenarioError("이 작업에는 호몰로지 기대값을 쓸 수 없음", expect=expect)
    ok = True
    if "betti" in expect:
        want = tuple(expect["betti"])
        ok &= homology.betti_numbers(len(want) - 1) == want and all(
            homology.group(k).is_zero for k in homology.groups if k >= len(want)
        )
    if "torsion" in expect:
        ok &= all(list(homology.group(int(k)).torsion) == list(v) for k, v in expect["torsion"].items())
    if "verdict" in expect:
        ok &= verdict == expect["verdict"]
    if "holds" in expect:
        ok &= holds is bool(expect["holds"])
    return bool(ok)


def _witness_orbits(task: str, counts: CountTable) -> List[Tuple[str, Orbit]]:
    out = []
    for c in counts.counts:
        for i, w in enumerate(c.witnesses):
            if w.orbit is not None:
                out.append((f"{task}/{c.x.label}__{c.y.label}__{i}", w.orbit))
    return out


def _morse(ws: Workspace, field_name: str, metric_name: Optional[str], region_name: Optional[str]):
    """(f, g, N) → MorseHomology 또는 LocalHomology. 같은 조합은 캐시."""
    key = ("morse", field_name, metric_name, region_name)
    if key not in ws.cache:
        f = ws.field(field_name)
        g = ws.metric(metric_name, f.domain.dimension)
        region = ws.region(region_name)
        if region is None:
            ws.cache[key] = morse_homology(f, g, perturbation=ws.perturbation, **ws.options)
        else:
            ws.cache[key] = local_morse_homology(f, g, region, **ws.local_options)
    return ws.cache[key]


def _plain(result) -> MorseHomology:
    return result if isinstance(result, MorseHomology) else result.morse


def _datum(ws: Workspace, args: Dict[str, Any], prefix: str) -> Tuple[MorseDatum, Optional[Region], Any]:
    region_name = args.get(f"neighborhood_{prefix}", args.get("neighborhood"))
    result = _morse(ws, _arg(args, f"field_{prefix}"), args.get(f"metric_{prefix}", args.get("metric")), region_name)
    return result.datum, ws.region(region_name), result


# ──────────────────────────────────────────────────────────────────────────────
# 임계점 / 모스 호몰로지
# ──────────────────────────────────────────────────────────────────────────────
@register_task("critical_points")
def critical_points_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    f = ws.field(_arg(args, "field"))
    g = ws.metric(args.get("metric"), f.domain.dimension)
    points = find_critical_points(f, g, ws.region(args.get("neighborhood")), config=ws.config)
    return TaskOutcome({"critical_points": [c.to_dict() for c in points]})


@register_task("morse_smale")
def morse_smale_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    """섭동 없이 주어진 f 그대로 모스–스메일 검사."""
    f = ws.field(_arg(args, "field"))
    g = ws.metric(args.get("metric"), f.domain.dimension)
    region = ws.region(args.get("neighborhood"))
    points = find_critical_points(f, g, region, config=ws.config)
    report = validate_morse_smale(MorseDatum(f.domain, f, g, points, region), region, config=ws.config)
    return TaskOutcome(report.to_dict(), _expect(args, holds=report.passed))


@register_task("morse_homology")
def morse_homology_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    result = _plain(_morse(ws, _arg(args, "field"), args.get("metric"), None))
    return TaskOutcome(
        result.to_dict(),
        _expect(args, homology=result.homology),
        _witness_orbits(ws.current_task, result.counts),
    )


@register_task("local_morse_homology")
def local_morse_homology_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    local = _morse(ws, _arg(args, "field"), args.get("metric"), _arg(args, "neighborhood"))
    return TaskOutcome(
        local.to_dict(),
        _expect(args, homology=local.homology),
        _witness_orbits(ws.current_task, local.morse.counts),
    )


@register_task("boundary_exit_homology")
def boundary_exit_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    f = ws.field(_arg(args, "field"))
    report = boundary_exit_homology(
        f, ws.metric(args.get("metric"), f.domain.dimension), **ws.local_options
    )
    return TaskOutcome(report.to_dict(), _expect(args, homology=report.relative, verdict=report.verdict.value))


# ──────────────────────────────────────────────────────────────────────────────
# 고립 / 모스–콘리–플뢰어
# ──────────────────────────────────────────────────────────────────────────────
@register_task("verify_isolation")
def verify_isolation_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    cert = verify_isolating_neighborhood(
        ws.flow(_arg(args, "flow")),
        ws.region(_arg(args, "neighborhood")),
        isolation=ws.isolation,
        config=ws.config,
        threads=ws.threads,
    )
    return TaskOutcome(cert.to_dict(), _expect(args, verdict=cert.verdict.value))


@register_task("mcf_homology")
def mcf_homology_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    f_phi = ws.field(_arg(args, "lyapunov"))
    local = mcf_homology(
        ws.flow(_arg(args, "flow")),
        ws.region(_arg(args, "neighborhood")),
        f_phi,
        ws.metric(args.get("metric"), f_phi.domain.dimension),
        **ws.local_options,
    )
    return TaskOutcome(
        local.to_dict(),
        _expect(args, homology=local.homology),
        _witness_orbits(ws.current_task, local.morse.counts),
    )


@register_task("verify_flow_map")
def verify_flow_map_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    report = verify_flow_map(
        ws.map(_arg(args, "map")),
        ws.flow(_arg(args, "flow_source")),
        ws.flow(_arg(args, "flow_target")),
        region_B=ws.region(args.get("neighborhood")),
        isolation=ws.isolation,
        config=ws.config,
        threads=ws.threads,
    )
    return TaskOutcome(report.to_dict(), _expect(args, verdict=report.verdict.value))


@register_task("pullback")
def pullback_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    report = pullback_neighborhood(
        ws.map(_arg(args, "map")),
        ws.region(_arg(args, "neighborhood")),
        flow_A=ws.flow(_arg(args, "flow_source")),
        flow_B=ws.flow(_arg(args, "flow_target")),
        isolation=ws.isolation,
        config=ws.config,
        threads=ws.threads,
    )
    return TaskOutcome(report.to_dict(), _expect(args, verdict=report.verdict.value))


@register_task("mcf_induced_map")
def mcf_induced_map_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    f_phi = ws.field(_arg(args, "lyapunov"))
    n_source = ws.map(_arg(args, "map")).source.dimension
    result = mcf_induced_map(
        ws.map(args["map"]),
        ws.flow(_arg(args, "flow_source")),
        ws.flow(_arg(args, "flow_target")),
        ws.region(_arg(args, "neighborhood")),
        f_phi,
        ws.metric(args.get("metric_source"), n_source),
        ws.metric(args.get("metric_target"), f_phi.domain.dimension),
        **ws.local_options,
    )
    return TaskOutcome(result.to_dict())


# ──────────────────────────────────────────────────────────────────────────────
# 유도사상 / 연속 / 합성 / 호모토피
# ──────────────────────────────────────────────────────────────────────────────
@register_task("induced_map")
def induced_map_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    h = ws.map(_arg(args, "map"))
    A, N_A, res_A = _datum(ws, args, "source")
    B, N_B, res_B = _datum(ws, args, "target")
    result: Dict[str, Any] = {"map": h.describe()}
    if N_A is not None or N_B is not None:
        iso = verify_isolated_map(h, A.flow, B.flow, N_A, N_B, isolation=ws.isolation, config=ws.config, threads=ws.threads)
        result["isolation"] = iso.to_dict()
        if not iso.certified:
            return TaskOutcome(result, _expect(args, verdict=iso.verdict.value))
    transverse = perturb_to_transverse(
        h, A, B,
        region_A=N_A, region_B=N_B, complexes=(res_A.complex, res_B.complex),
        isolation=ws.isolation, seed=ws.seed, **ws.options,
    )
    M = transverse.moduli.chain_map
    result.update(
        perturbation=transverse.to_dict(),
        chain_map=M.to_dict(),
        on_homology={str(k): v for k, v in homology_matrices(M).items()},
        source_homology=res_A.homology.to_dict(),
        target_homology=res_B.homology.to_dict(),
    )
    expect = args.get("expect") or {}
    passed = None
    if "on_homology" in expect:
        got = homology_matrices(M)
        passed = all(got.get(int(k)) == v for k, v in expect["on_homology"].items())
    return TaskOutcome(result, passed)


@register_task("continuation")
def continuation_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    A, N, res_A = _datum(ws, args, "a")
    B, _, res_B = _datum(ws, args, "b")
    requested = float(args.get("switch_horizon", ws.shooting.switch_horizon))
    horizon = switch_horizon_for(A, B, requested, ws.shooting)
    Phi = continuation_map(
        A, B,
        switch_horizon=horizon, region=N, complexes=(res_A.complex, res_B.complex),
        isolation=ws.isolation, **ws.options,
    )
    on_h = induced_on_homology(Phi)
    iso = all(m.rows == m.cols and abs(m.det()) == 1 for m in on_h.values())
    return TaskOutcome(
        {
            "chain_map": Phi.to_dict(),
            "on_homology": {str(k): m.to_rows() for k, m in on_h.items()},
            "isomorphism": iso,
            "horizon": {"requested": requested, "effective": horizon, "clamped": horizon < requested},
        },
        _expect(args, holds=iso),
    )


@register_task("compose_with_flow")
def compose_with_flow_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    A, N_A, _ = _datum(ws, args, "a")
    B, N_B, _ = _datum(ws, args, "b")
    C, N_C, _ = _datum(ws, args, "c")
    regions = (N_A, N_B, N_C) if any(N is not None for N in (N_A, N_B, N_C)) else None
    report = compose_with_flow(
        ws.map(_arg(args, "map_ba")),
        ws.map(_arg(args, "map_cb")),
        A, B, C,
        float(args.get("R", 0.0)),
        regions=regions, isolation=ws.isolation, **ws.options,
    )
    return TaskOutcome(report.to_dict(), _expect(args, holds=report.holds))


@register_task("homotopy")
def homotopy_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    A, N_A, _ = _datum(ws, args, "source")
    B, N_B, _ = _datum(ws, args, "target")
    data_1 = None
    if "field_source_1" in args:
        data_1 = (_datum(ws, args, "source_1")[0], _datum(ws, args, "target_1")[0])
    regions = (N_A, N_B) if (N_A is not None or N_B is not None) else None
    report = homotopy_check(
        ws.map(_arg(args, "map_0")),
        ws.map(_arg(args, "map_1")),
        ws.family(_arg(args, "family")),
        A, B,
        data_1=data_1, regions=regions, isolation=ws.isolation, **ws.options,
    )
    return TaskOutcome(report.to_dict(), _expect(args, holds=report.holds))


# ──────────────────────────────────────────────────────────────────────────────
# 쌍대
# ──────────────────────────────────────────────────────────────────────────────
@register_task("poincare_duality")
def poincare_duality_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    result = _morse(ws, _arg(args, "field"), args.get("metric"), args.get("neighborhood"))
    report = poincare_duality(
        result.datum, ws.region(args.get("neighborhood")), complex_=result.complex, **ws.options
    )
    return TaskOutcome(report.to_dict(), _expect(args, homology=report.homology, holds=report.holds))


@register_task("count_symmetry")
def count_symmetry_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    result = _morse(ws, _arg(args, "field"), args.get("metric"), args.get("neighborhood"))
    report = verify_count_symmetry(result.datum, ws.region(args.get("neighborhood")), **ws.options)
    return TaskOutcome(report.to_dict(), _expect(args, holds=report.holds))


@register_task("conley_duality")
def conley_duality_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    f_phi = ws.field(_arg(args, "lyapunov"))
    report = conley_duality_check(
        ws.flow(_arg(args, "flow")),
        ws.region(_arg(args, "neighborhood")),
        f_phi,
        ws.metric(args.get("metric"), f_phi.domain.dimension),
        **ws.local_options,
    )
    return TaskOutcome(report.to_dict(), _expect(args, homology=report.local.homology, holds=report.holds))


@register_task("pd_continuation")
def pd_continuation_task(ws: Workspace, args: Dict[str, Any]) -> TaskOutcome:
    A, N, _ = _datum(ws, args, "a")
    B, _, _ = _datum(ws, args, "b")
    report = pd_continuation_check(A, B, N, isolation=ws.isolation, **ws.options)
    return TaskOutcome(report.to_dict(), _expect(args, holds=report.holds))
