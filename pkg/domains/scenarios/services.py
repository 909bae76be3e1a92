"""
시나리오 실행과 리포트 요약.
report.json 은 (시나리오, seed) 가 같으면 실행 횟수나 스레드 수와 무관하게 바이트 단위로 같다.
소요 시간은 report.json 에 넣지 않고 timings.json 에 따로 쓴다.
"""
from __future__ import annotations

import json
import logging
import math
import re
import time
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from config import settings
from domains.conley.models import GeneralFlow, IsolationConfig
from domains.exprfield.models import Domain
from domains.exprfield.services import make_field, make_map
from domains.flowcore.models import FlowConfig, GradientFlow, Metric, PerturbationConfig, Region
from domains.inducedmaps.maps import ExpressionMap, MapFamily
from domains.moduli.models import ShootingConfig
from shared.exceptions import McfkitError

from . import handlers  # noqa: F401  (작업 등록)
from .models import ScenarioError, SchemaMismatchError, TaskStatus, Workspace
from .registry import get_handler
from .serializers import ReportSchema, ScenarioSchema, TaskReportSchema

logger = logging.getLogger(__name__)

_TOML_POSITION = re.compile(r"line (\d+), column (\d+)")


@dataclass
class RunResult:
    report: Dict[str, Any]
    exit_code: int
    report_path: Path
    timings_path: Path
    orbit_files: List[Path] = field(default_factory=list)


# ──────────────────────────────────────────────────────────────────────────────
# 로드 / 작업공간 구성
# ──────────────────────────────────────────────────────────────────────────────
def _validation_detail(exc: ValidationError) -> List[Dict[str, Any]]:
    return [{"loc": ".".join(str(p) for p in e["loc"]), "msg": e["msg"]} for e in exc.errors()]


def parse_scenario(text: str, *, source: str = "<string>") -> ScenarioSchema:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, column = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        if line is None:
            m = _TOML_POSITION.search(str(exc))
            line, column = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ScenarioError(f"시나리오 파싱 실패: {exc}", source=source, line=line, column=column) from exc
    version = raw.get("schema")
    if version != settings.SCENARIO_SCHEMA:
        raise SchemaMismatchError(
            "지원하지 않는 시나리오 schema", source=source, found=version, expected=settings.SCENARIO_SCHEMA
        )
    try:
        return ScenarioSchema.model_validate(raw)
    except ValidationError as exc:
        raise ScenarioError("시나리오 검증 실패", source=source, errors=_validation_detail(exc)) from exc


def load_scenario(path: Path) -> ScenarioSchema:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"시나리오 파일을 읽을 수 없음: {exc}", source=str(path)) from exc
    return parse_scenario(text, source=path.name)


def _config(model, values: Dict[str, Any], where: str):
    try:
        return model(**values)
    except ValidationError as exc:
        raise ScenarioError(f"tolerances.{where} 값이 잘못됨", errors=_validation_detail(exc)) from exc


def build_workspace(scenario: ScenarioSchema, *, seed: Optional[int] = None, threads: Optional[int] = None) -> Workspace:
    """선언된 객체를 실제 도메인 객체로. 식/계량 오류는 ScenarioError 로 위치 (표 이름) 와 함께."""
    seed = scenario.seed if seed is None else seed
    tol = scenario.tolerances

    def build(where: str, fn):
        try:
            return fn()
        except McfkitError as exc:
            raise ScenarioError(f"{where}: {exc.message}", where=where, **exc.detail) from exc
        except ValueError as exc:
            raise ScenarioError(f"{where}: {exc}", where=where) from exc

    domains: Dict[str, Domain] = {}
    for name, d in scenario.domains.items():
        domains[name] = build(
            f"domains.{name}",
            lambda d=d: Domain.torus(d.dimension) if d.kind == "torus" else Domain.box(d.bounds),
        )
    fields = {
        name: build(f"fields.{name}", lambda f=f: make_field(domains[f.domain], f.expr))
        for name, f in scenario.fields.items()
    }
    metrics = {name: build(f"metrics.{name}", lambda m=m: Metric.spd(m.matrix)) for name, m in scenario.metrics.items()}
    maps = {
        name: build(
            f"maps.{name}",
            lambda m=m: ExpressionMap(make_map(domains[m.source], domains[m.target], m.components)),
        )
        for name, m in scenario.maps.items()
    }
    families = {
        name: MapFamily(domains[m.source], domains[m.target], tuple(m.components))
        for name, m in scenario.families.items()
    }
    regions = {
        name: build(f"neighborhoods.{name}", lambda n=n: Region.from_bounds(domains[n.domain], n.boxes))
        for name, n in scenario.neighborhoods.items()
    }
    flows = {}
    for name, fl in scenario.flows.items():
        domain = domains[fl.domain]
        if fl.components is not None:
            flows[name] = build(f"flows.{name}", lambda fl=fl, domain=domain: GeneralFlow.from_texts(domain, fl.components))
        else:
            metric = metrics[fl.metric] if fl.metric else Metric.euclidean(domain.dimension)
            flows[name] = GradientFlow(fields[fl.gradient], metric)

    return Workspace(
        seed=seed,
        threads=threads,
        domains=domains,
        fields=fields,
        metrics=metrics,
        maps=maps,
        families=families,
        regions=regions,
        flows=flows,
        config=_config(FlowConfig, tol.flow, "flow"),
        shooting=_config(ShootingConfig, tol.shooting, "shooting"),
        isolation=_config(IsolationConfig, {"seed": seed, **tol.isolation}, "isolation"),
        perturbation=_config(PerturbationConfig, {"seed": seed, **tol.perturbation}, "perturbation"),
    )


# ──────────────────────────────────────────────────────────────────────────────
# 실행
# ──────────────────────────────────────────────────────────────────────────────
def _jsonable(value: Any) -> Any:
    """numpy 값/무한대를 JSON 으로. 무한대와 NaN 은 문자열."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def _dump(data: Dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def run(
    path: Path,
    *,
    output: Optional[Path] = None,
    halt_on_fail: Optional[bool] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    dump_orbits: bool = False,
) -> RunResult:
    """작업을 순서대로 실행. 판정이 있는 작업이 모두 통과하면 exit 0."""
    scenario = load_scenario(path)
    output = Path(output) if output is not None else settings.OUTPUT_DIR
    halt_on_fail = settings.HALT_ON_FAIL if halt_on_fail is None else halt_on_fail
    ws = build_workspace(scenario, seed=seed, threads=threads)
    logger.info(f"run: {Path(path).name} ({len(scenario.tasks)} tasks, seed={ws.seed})")

    entries: List[Dict[str, Any]] = []
    timings: Dict[str, float] = {}
    orbit_files: List[Path] = []
    halted = False
    started = time.perf_counter()
    for task in scenario.tasks:
        entry: Dict[str, Any] = {"name": task.name, "op": task.op, "passed": None, "result": {}, "error": None}
        if halted:
            entry["status"] = TaskStatus.SKIPPED
            entries.append(entry)
            continue
        ws.current_task = task.name
        t0 = time.perf_counter()
        logger.info(f"task {task.name!r} ({task.op}) started")
        try:
            outcome = get_handler(task.op)(ws, task.arguments)
        except McfkitError as exc:
            logger.warning(f"task {task.name!r} failed at {exc.stage}: {exc}")
            entry.update(status=TaskStatus.FAILED, passed=False, error=exc.to_dict())
        except Exception as exc:
            logger.exception(f"task {task.name!r} crashed")
            entry.update(
                status=TaskStatus.ERROR,
                error={"error": type(exc).__name__, "stage": "scenarios.run", "message": str(exc), "detail": {}},
            )
        else:
            entry.update(result=outcome.result, passed=outcome.passed)
            entry["status"] = {True: TaskStatus.PASSED, False: TaskStatus.FAILED, None: TaskStatus.INFO}[outcome.passed]
            if dump_orbits:
                for stem, orbit in outcome.orbits:
                    orbit_files.append(orbit.to_csv(output / "orbits" / f"{stem}.csv"))
        timings[task.name] = round(time.perf_counter() - t0, 6)
        logger.info(f"task {task.name!r} finished: {entry['status']}")
        entries.append(entry)
        if entry["status"] in (TaskStatus.FAILED, TaskStatus.ERROR) and halt_on_fail:
            halted = True

    summary = {
        "total": len(entries),
        "passed": sum(e["status"] == TaskStatus.PASSED for e in entries),
        "failed": sum(e["status"] == TaskStatus.FAILED for e in entries),
        "errors": sum(e["status"] == TaskStatus.ERROR for e in entries),
        "skipped": sum(e["status"] == TaskStatus.SKIPPED for e in entries),
    }
    report = {
        "schema": settings.REPORT_SCHEMA,
        "scenario": Path(path).name,
        "seed": ws.seed,
        "tasks": entries,
        "summary": summary,
    }
    report_path = _dump(report, output / "report.json")
    timings_path = _dump(
        {"tasks": timings, "total": round(time.perf_counter() - started, 6), "threads": ws.threads},
        output / "timings.json",
    )
    exit_code = 0 if summary["failed"] == 0 and summary["errors"] == 0 else 1
    logger.info(f"run: {summary} -> exit {exit_code}")
    return RunResult(report, exit_code, report_path, timings_path, orbit_files)


# ──────────────────────────────────────────────────────────────────────────────
# 요약
# ──────────────────────────────────────────────────────────────────────────────
def _homology_summaries(node: Any, path: str = "") -> List[str]:
    out: List[str] = []
    if isinstance(node, dict):
        if "groups" in node and "summary" in node:
            out.append(f"{path or 'homology'}: {node['summary']}")
            return out
        for k, v in node.items():
            out.extend(_homology_summaries(v, f"{path}.{k}" if path else k))
    elif isinstance(node, list):
        for i, v in enumerate(node):
            out.extend(_homology_summaries(v, f"{path}[{i}]"))
    return out


def _margins(node: Any) -> List[float]:
    out: List[float] = []
    if isinstance(node, dict):
        for k, v in node.items():
            if k in ("min_margin", "margin") and isinstance(v, (int, float)):
                out.append(float(v))
            else:
                out.extend(_margins(v))
    elif isinstance(node, list):
        for v in node:
            out.extend(_margins(v))
    return out


def _summarize(task: TaskReportSchema) -> str:
    lines = [f"[{task.status}] {task.name} ({task.op})"]
    if task.error:
        lines.append(f"  error at {task.error.get('stage')}: {task.error.get('message')}")
        certificate = (task.error.get("detail") or {}).get("certificate")
        if isinstance(certificate, dict) and "verdict" in certificate:
            lines.append(f"  certificate verdict: {certificate['verdict']}")
    result = task.result
    lines.extend(f"  {s}" for s in _homology_summaries(result))
    if "verdict" in result:
        lines.append(f"  verdict: {result['verdict']}")
    if "holds" in result:
        lines.append(f"  holds: {result['holds']}")
    for key in ("product", "composite", "composite_zero"):
        if key in result:
            lines.append(f"  {key}: {result[key].get('matrices')}")
    isolation = result.get("isolation")
    if isinstance(isolation, dict) and isolation.get("violated_range"):
        lines.append(f"  isolation violated for {isolation.get('label', 'parameter')} in {isolation['violated_range']}")
    margins = _margins(result)
    if margins:
        lines.append(f"  worst margin: {min(margins):.6g}")
    return "\n".join(lines)


def explain(path: Path) -> str:
    """리포트를 사람이 읽을 요약으로."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"리포트를 읽을 수 없음: {exc}", source=str(path)) from exc
    if raw.get("schema") != settings.REPORT_SCHEMA:
        raise SchemaMismatchError(
            "지원하지 않는 리포트 schema", source=path.name, found=raw.get("schema"), expected=settings.REPORT_SCHEMA
        )
    try:
        report = ReportSchema.model_validate(raw)
    except ValidationError as exc:
        raise SchemaMismatchError("리포트 형식이 schema 와 다름", source=path.name, errors=_validation_detail(exc)) from exc
    if not report.tasks:
        return "no tasks"
    head = (
        f"{report.scenario} (seed {report.seed}): {report.summary.passed} passed, "
        f"{report.summary.failed} failed, {report.summary.skipped} skipped"
    )
    return "\n\n".join([head] + [_summarize(t) for t in report.tasks])
