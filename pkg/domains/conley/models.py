from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config import settings
from domains.exprfield.models import Domain, Expression, ScalarField
from domains.exprfield.services import parse
from domains.flowcore.models import CriticalPoint, Region, VectorFlow
from domains.moduli.models import MorseHomology
from domains.zalgebra.matrices import IntMatrix
from domains.zalgebra.models import GradedIntMap, HomologyResult
from shared.exceptions import McfkitError


class CertificationError(McfkitError):
    """필요한 인증서의 판정이 certified 가 아님 (반증 또는 미결)"""

    stage = "conley.certify"


class PullbackError(McfkitError):
    """h⁻¹(N_B) 상자 덮개를 만들 수 없음"""

    stage = "conley.pullback"


class Verdict(str, Enum):
    CERTIFIED = "certified"
    REFUTED = "refuted"
    INCONCLUSIVE = "inconclusive"

    @classmethod
    def worst(cls, verdicts: Sequence["Verdict"]) -> "Verdict":
        if cls.REFUTED in verdicts:
            return cls.REFUTED
        if cls.INCONCLUSIVE in verdicts:
            return cls.INCONCLUSIVE
        return cls.CERTIFIED


class IsolationConfig(BaseModel):
    """표본 격자/여유/시간 상한. 기본값은 settings."""

    model_config = ConfigDict(frozen=True)

    t_max: float = Field(default_factory=lambda: settings.ISOLATION_T_MAX, gt=0)
    boundary_spacing: float = Field(default_factory=lambda: settings.BOUNDARY_SPACING, gt=0)
    interior_per_axis: int = Field(default_factory=lambda: settings.INTERIOR_PER_AXIS, gt=1)
    margin_int: float = Field(default_factory=lambda: settings.MARGIN_INT, gt=0)
    tol_const: float = Field(default_factory=lambda: settings.TOL_CONST, gt=0)
    lyapunov_per_axis: int = Field(default_factory=lambda: settings.LYAPUNOV_PER_AXIS, gt=1)
    pullback_resolution: float = Field(default_factory=lambda: settings.PULLBACK_RESOLUTION, gt=0)
    equivariance_tol: float = Field(default_factory=lambda: settings.EQUIVARIANCE_TOL, gt=0)
    equivariance_samples: int = Field(default_factory=lambda: settings.EQUIVARIANCE_SAMPLES, gt=0)
    refine_depth: int = Field(default_factory=lambda: settings.REFINE_DEPTH, gt=0)
    r_grid: int = Field(default_factory=lambda: settings.R_GRID, gt=1)
    r_max: float = Field(default_factory=lambda: settings.R_MAX, gt=0)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, ge=0)


def _points(a: np.ndarray) -> List[List[float]]:
    return [[float(c) for c in p] for p in np.atleast_2d(a)] if len(a) else []


# ──────────────────────────────────────────────────────────────────────────────
# 일반 흐름 (식 성분)
# ──────────────────────────────────────────────────────────────────────────────
class GeneralFlow(VectorFlow):
    """ẋ = X(x), X 의 성분은 식 문자열. 그래디언트일 필요 없음."""

    def __init__(self, domain: Domain, components: Sequence[Expression]) -> None:
        if len(components) != domain.dimension:
            raise ValueError(f"성분 개수 {len(components)} ≠ 차원 {domain.dimension}")
        self.domain = domain
        self.components = tuple(components)

    @classmethod
    def from_texts(cls, domain: Domain, texts: Sequence[str]) -> "GeneralFlow":
        return cls(domain, [parse(t, domain.dimension) for t in texts])

    @property
    def texts(self) -> Tuple[str, ...]:
        return tuple(c.text for c in self.components)

    def reversed(self) -> "GeneralFlow":
        """φ⁻¹(t, x) = φ(−t, x)"""
        return GeneralFlow.from_texts(self.domain, [f"-({t})" for t in self.texts])

    def velocity(self, p: np.ndarray, t: float = 0.0) -> np.ndarray:
        q = self.domain.reduce(p)
        return np.array([c.program.value(q) for c in self.components])

    def jacobian(self, p: np.ndarray, t: float = 0.0) -> np.ndarray:
        q = self.domain.reduce(p)
        return np.array([c.program.jet1(q)[1] for c in self.components])

    def describe(self) -> str:
        return "(" + ", ".join(self.texts) + ")"


class AnchoredFlow(VectorFlow):
    """다른 흐름에 N 안의 쌍곡 평형점 목록을 붙인 것 (수렴 판정으로 '머무름' 을 빨리 결정)."""

    def __init__(self, base: VectorFlow, equilibria: Sequence[CriticalPoint]) -> None:
        self.base = base
        self.domain = base.domain
        self.autonomous = base.autonomous
        self._equilibria = tuple(equilibria)

    @property
    def equilibria(self) -> Tuple[CriticalPoint, ...]:
        return self._equilibria

    def velocity(self, p: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self.base.velocity(p, t)

    def jacobian(self, p: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self.base.jacobian(p, t)


# ──────────────────────────────────────────────────────────────────────────────
# 인증서
# ──────────────────────────────────────────────────────────────────────────────
@dataclass
class IsolatingNeighborhood:
    """
    N 과 그 인증 결과.
    s_samples: 양방향으로 T_max 동안 N 에 머문 격자점 + N 안의 평형점 (불변집합 표본)
    refutations: 양방향 모두 머문 경계점, 또는 ∂N 에 너무 가까운 S 표본
    inconclusive: 시간 상한에 걸려 결론을 못 낸 경계점
    """

    region: Region
    verdict: Verdict
    s_samples: np.ndarray
    equilibria: Tuple[CriticalPoint, ...] = ()
    boundary_points: int = 0
    interior_points: int = 0
    refutations: List[Dict[str, Any]] = field(default_factory=list)
    inconclusive: List[List[float]] = field(default_factory=list)
    min_margin: Optional[float] = None
    t_max: float = 0.0

    @property
    def certified(self) -> bool:
        return self.verdict is Verdict.CERTIFIED

    @property
    def signature(self) -> Tuple[str, int]:
        return (self.verdict.value, len(self.s_samples))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "region": self.region.to_dict(),
            "verdict": self.verdict.value,
            "s_samples": _points(self.s_samples),
            "equilibria": [e.to_dict() for e in self.equilibria],
            "boundary_points": self.boundary_points,
            "interior_points": self.interior_points,
            "refutations": self.refutations,
            "inconclusive": self.inconclusive[:20],
            "inconclusive_count": len(self.inconclusive),
            "min_margin": self.min_margin,
            "t_max": self.t_max,
        }


@dataclass
class IsolatedMapReport:
    """S_h = S_−^A ∩ h⁻¹(S_+^B) 표본과 내부성 판정."""

    verdict: Verdict
    s_h: np.ndarray
    offending: List[Dict[str, Any]] = field(default_factory=list)
    min_margin: Optional[float] = None
    candidates: int = 0

    @property
    def certified(self) -> bool:
        return self.verdict is Verdict.CERTIFIED

    @property
    def signature(self) -> Tuple[str, int]:
        return (self.verdict.value, len(self.s_h))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "s_h": _points(self.s_h),
            "offending": self.offending,
            "min_margin": self.min_margin,
            "candidates": self.candidates,
        }


@dataclass
class FlowMapReport:
    verdict: Verdict
    max_residual: float
    worst: Optional[Dict[str, Any]] = None
    proper: bool = True
    samples: int = 0
    undefined: int = 0
    notes: List[str] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.verdict is Verdict.CERTIFIED

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "max_residual": self.max_residual,
            "worst": self.worst,
            "proper": self.proper,
            "samples": self.samples,
            "undefined": self.undefined,
            "notes": self.notes,
        }


@dataclass
class LyapunovCertificate:
    """f_φ 가 S 위에서 상수, N∖S 에서 흐름을 따라 엄격히 감소."""

    field: ScalarField
    neighborhood: IsolatingNeighborhood
    verdict: Verdict
    variation: float
    margin: float
    checked: int = 0
    worst_point: Optional[List[float]] = None
    reason: Optional[str] = None

    @property
    def certified(self) -> bool:
        return self.verdict is Verdict.CERTIFIED

    def to_dict(self) -> Dict[str, Any]:
        return {
            "field": self.field.text,
            "verdict": self.verdict.value,
            "variation": self.variation,
            "margin": self.margin,
            "checked": self.checked,
            "worst_point": self.worst_point,
            "reason": self.reason,
        }


@dataclass
class HomotopyIsolationReport:
    """매개변수 격자 + 서명 변화 구간 이분 탐색 결과."""

    label: str
    verdict: Verdict
    samples: List[Dict[str, Any]] = field(default_factory=list)
    violated_range: Optional[Tuple[float, float]] = None
    notes: List[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.verdict is Verdict.CERTIFIED

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "verdict": self.verdict.value,
            "holds": self.holds,
            "violated_range": list(self.violated_range) if self.violated_range else None,
            "samples": self.samples,
            "notes": self.notes,
        }


@dataclass
class PullbackReport:
    verdict: Verdict
    region: Optional[Region]
    certificate: Optional[IsolatingNeighborhood] = None
    map_report: Optional[IsolatedMapReport] = None
    cells: int = 0

    @property
    def certified(self) -> bool:
        return self.verdict is Verdict.CERTIFIED

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "region": self.region.to_dict() if self.region else None,
            "cells": self.cells,
            "certificate": self.certificate.to_dict() if self.certificate else None,
            "map_report": self.map_report.to_dict() if self.map_report else None,
        }


@dataclass
class LocalHomology:
    """국소 모스 / 모스–콘리–플뢰어 호몰로지 결과 + 근거 인증서."""

    morse: MorseHomology
    neighborhood: IsolatingNeighborhood
    lyapunov: Optional[LyapunovCertificate] = None
    flow_certificate: Optional[IsolatingNeighborhood] = None

    @property
    def homology(self) -> HomologyResult:
        return self.morse.homology

    @property
    def datum(self):
        return self.morse.datum

    @property
    def complex(self):
        return self.morse.complex

    def to_dict(self) -> Dict[str, Any]:
        return {
            "homology": self.homology.to_dict(),
            "complex": self.complex.to_dict(),
            "counts": self.morse.counts.to_dict(),
            "datum": self.datum.to_dict(),
            "neighborhood": self.neighborhood.to_dict(),
            "flow_certificate": self.flow_certificate.to_dict() if self.flow_certificate else None,
            "lyapunov": self.lyapunov.to_dict() if self.lyapunov else None,
        }


@dataclass
class FaceExit:
    axis: int
    side: str  # "lower" | "upper"
    kind: str  # "exit" | "entrance" | "mixed"

    def to_dict(self) -> Dict[str, Any]:
        return {"axis": self.axis, "side": self.side, "kind": self.kind}


@dataclass
class BoundaryExitReport:
    verdict: Verdict
    faces: List[FaceExit]
    relative: Optional[HomologyResult] = None
    morse: Optional[HomologyResult] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "faces": [f.to_dict() for f in self.faces],
            "relative": self.relative.to_dict() if self.relative else None,
            "morse": self.morse.to_dict() if self.morse else None,
        }


@dataclass
class MCFInducedMap:
    chain_map: GradedIntMap
    on_homology: Dict[int, IntMatrix]
    source: LocalHomology
    target: LocalHomology
    flow_map: FlowMapReport
    pullback: PullbackReport
    isolation: IsolatedMapReport

    def to_dict(self) -> Dict[str, Any]:
        return {
            "chain_map": self.chain_map.to_dict(),
            "on_homology": {str(k): m.to_rows() for k, m in self.on_homology.items()},
            "source": self.source.to_dict(),
            "target": self.target.to_dict(),
            "flow_map": self.flow_map.to_dict(),
            "pullback": self.pullback.to_dict(),
            "isolation": self.isolation.to_dict(),
        }
