"""
시나리오 (TOML) 와 리포트 (JSON) 스키마. 문법은 README 의 "Scenario files" 절 참고.
"""
from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import settings


class DomainSchema(BaseModel):
    kind: Literal["torus", "box"]
    dimension: Optional[int] = Field(default=None, ge=1, le=3)
    bounds: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _shape(self) -> "DomainSchema":
        if self.kind == "torus" and self.dimension is None:
            raise ValueError("torus 도메인에는 dimension 이 필요")
        if self.kind == "box":
            if not self.bounds:
                raise ValueError("box 도메인에는 bounds 가 필요")
            if any(len(b) != 2 for b in self.bounds):
                raise ValueError("bounds 의 각 항목은 [lo, hi]")
        return self


class FieldSchema(BaseModel):
    domain: str
    expr: str


class MetricSchema(BaseModel):
    matrix: List[List[float]]


class MapSchema(BaseModel):
    source: str
    target: str
    components: List[str] = Field(min_length=1)


class NeighborhoodSchema(BaseModel):
    domain: str
    boxes: List[List[List[float]]] = Field(min_length=1)


class FlowSchema(BaseModel):
    """components (일반 벡터장) 또는 gradient (+ metric) 중 하나."""

    domain: str
    components: Optional[List[str]] = None
    gradient: Optional[str] = None
    metric: Optional[str] = None

    @model_validator(mode="after")
    def _one_kind(self) -> "FlowSchema":
        if (self.components is None) == (self.gradient is None):
            raise ValueError("flow 에는 components 와 gradient 중 정확히 하나")
        return self


class TolerancesSchema(BaseModel):
    flow: Dict[str, Any] = Field(default_factory=dict)
    shooting: Dict[str, Any] = Field(default_factory=dict)
    isolation: Dict[str, Any] = Field(default_factory=dict)
    perturbation: Dict[str, Any] = Field(default_factory=dict)


class TaskSchema(BaseModel):
    """name, op 외의 키는 그대로 작업 인자."""

    model_config = ConfigDict(extra="allow")

    name: str
    op: str

    @property
    def arguments(self) -> Dict[str, Any]:
        return dict(self.model_extra or {})


class ScenarioSchema(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: str = Field(alias="schema")
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, ge=0)
    domains: Dict[str, DomainSchema] = Field(default_factory=dict)
    fields: Dict[str, FieldSchema] = Field(default_factory=dict)
    metrics: Dict[str, MetricSchema] = Field(default_factory=dict)
    maps: Dict[str, MapSchema] = Field(default_factory=dict)
    families: Dict[str, MapSchema] = Field(default_factory=dict)
    neighborhoods: Dict[str, NeighborhoodSchema] = Field(default_factory=dict)
    flows: Dict[str, FlowSchema] = Field(default_factory=dict)
    tolerances: TolerancesSchema = Field(default_factory=TolerancesSchema)
    tasks: List[TaskSchema] = Field(default_factory=list)

    @field_validator("tasks")
    @classmethod
    def _unique_names(cls, tasks: List[TaskSchema]) -> List[TaskSchema]:
        seen = set()
        for t in tasks:
            if t.name in seen:
                raise ValueError(f"작업 이름 중복: {t.name!r}")
            seen.add(t.name)
        return tasks

    @model_validator(mode="after")
    def _references(self) -> "ScenarioSchema":
        def need(table: Dict[str, Any], name: Optional[str], where: str) -> None:
            if name is not None and name not in table:
                raise ValueError(f"{where}: 선언되지 않은 이름 {name!r}")

        for name, f in self.fields.items():
            need(self.domains, f.domain, f"fields.{name}")
        for name, m in {**self.maps, **self.families}.items():
            need(self.domains, m.source, f"maps.{name}")
            need(self.domains, m.target, f"maps.{name}")
        for name, n in self.neighborhoods.items():
            need(self.domains, n.domain, f"neighborhoods.{name}")
        for name, fl in self.flows.items():
            need(self.domains, fl.domain, f"flows.{name}")
            need(self.fields, fl.gradient, f"flows.{name}")
            need(self.metrics, fl.metric, f"flows.{name}")
        return self


# ──────────────────────────────────────────────────────────────────────────────
# 리포트
# ──────────────────────────────────────────────────────────────────────────────
class TaskReportSchema(BaseModel):
    name: str
    op: str
    status: Literal["passed", "failed", "info", "error", "skipped"]
    passed: Optional[bool] = None
    result: Dict[str, Any] = Field(default_factory=dict)
    error: Optional[Dict[str, Any]] = None


class SummarySchema(BaseModel):
    total: int = 0
    passed: int = 0
    failed: int = 0
    errors: int = 0
    skipped: int = 0


class ReportSchema(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: str = Field(alias="schema")
    scenario: str
    seed: int
    tasks: List[TaskReportSchema] = Field(default_factory=list)
    summary: SummarySchema = Field(default_factory=SummarySchema)
