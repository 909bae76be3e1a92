from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from domains.conley.models import IsolationConfig
from domains.exprfield.models import Domain, ScalarField
from domains.flowcore.models import FlowConfig, Metric, Orbit, PerturbationConfig, Region, VectorFlow
from domains.inducedmaps.maps import ExpressionMap, MapFamily
from domains.moduli.models import ShootingConfig
from shared.exceptions import McfkitError


class ScenarioError(McfkitError):
    """시나리오 파일 파싱/검증 실패 (파싱 오류면 line, column 포함)"""

    stage = "scenarios.parse"


class SchemaMismatchError(McfkitError):
    """시나리오/리포트의 schema 버전이 지원 버전과 다름"""

    stage = "scenarios.schema"


class TaskStatus:
    PASSED = "passed"
    FAILED = "failed"
    INFO = "info"
    ERROR = "error"
    SKIPPED = "skipped"


@dataclass
class TaskOutcome:
    """
    result: 리포트에 실리는 JSON 가능 dict
    passed: 판정이 있는 작업이면 True/False, 정보성 작업이면 None
    orbits: --dump-orbits 용 (파일 이름 줄기, 궤도)
    """

    result: Dict[str, Any]
    passed: Optional[bool] = None
    orbits: List[Tuple[str, Orbit]] = field(default_factory=list)


@dataclass
class Workspace:
    """시나리오에 선언된 객체를 이름으로 풀어 둔 것 + 실행 옵션. 같은 (f, g, N) 계산은 한 번만."""

    seed: int
    threads: Optional[int]
    domains: Dict[str, Domain]
    fields: Dict[str, ScalarField]
    metrics: Dict[str, Metric]
    maps: Dict[str, ExpressionMap]
    families: Dict[str, MapFamily]
    regions: Dict[str, Region]
    flows: Dict[str, VectorFlow]
    config: FlowConfig
    shooting: ShootingConfig
    isolation: IsolationConfig
    perturbation: PerturbationConfig
    current_task: str = ""
    cache: Dict[Tuple, Any] = field(default_factory=dict)

    def _lookup(self, table: Dict[str, Any], kind: str, name: str) -> Any:
        try:
            return table[name]
        except KeyError:
            raise ScenarioError(f"선언되지 않은 {kind}: {name!r}", kind=kind, name=name) from None

    def field(self, name: str) -> ScalarField:
        return self._lookup(self.fields, "field", name)

    def metric(self, name: Optional[str], dimension: int) -> Metric:
        return Metric.euclidean(dimension) if name is None else self._lookup(self.metrics, "metric", name)

    def region(self, name: Optional[str]) -> Optional[Region]:
        return None if name is None else self._lookup(self.regions, "neighborhood", name)

    def map(self, name: str) -> ExpressionMap:
        return self._lookup(self.maps, "map", name)

    def family(self, name: str) -> MapFamily:
        return self._lookup(self.families, "family", name)

    def flow(self, name: str) -> VectorFlow:
        return self._lookup(self.flows, "flow", name)

    @property
    def options(self) -> Dict[str, Any]:
        return {"config": self.config, "shooting": self.shooting, "threads": self.threads}

    @property
    def local_options(self) -> Dict[str, Any]:
        return {**self.options, "isolation": self.isolation, "perturbation": self.perturbation}

