from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from config import settings
from domains.flowcore.models import CriticalPoint, MorseDatum, Orbit
from domains.zalgebra.models import GradedComplex, HomologyResult
from shared.exceptions import McfkitError


class IndexMismatchError(McfkitError):
    """지표 조건 (|x|=|y|+1 또는 |x|=|y|) 위반"""

    stage = "moduli.index"


class TransversalityError(McfkitError):
    """횡단성 여유가 tol_transv 이하 (섭동 필요)"""

    stage = "moduli.transversality"


class UnsupportedDimensionError(McfkitError):
    """연결궤도/교차 세기는 n ≤ 2 에서만"""

    stage = "moduli.dimension"


class IsolationViolation(McfkitError):
    """호모토피 경로 위에서 고립성이 깨짐"""

    stage = "moduli.isolation"


class ShootingConfig(BaseModel):
    """발사/곡선 표본/근 정밀화 설정. 기본값은 settings."""

    model_config = ConfigDict(frozen=True)

    r_launch: float = Field(default_factory=lambda: settings.R_LAUNCH, gt=0)
    curve_samples: int = Field(default_factory=lambda: settings.CURVE_SAMPLES, gt=3)
    max_curve_samples: int = Field(default_factory=lambda: settings.MAX_CURVE_SAMPLES, gt=3)
    image_resolution: float = Field(default_factory=lambda: settings.IMAGE_RESOLUTION, gt=0)
    side_radius: float = Field(default_factory=lambda: settings.SIDE_RADIUS, gt=0)
    bisection_width: float = Field(default_factory=lambda: settings.BISECTION_WIDTH, gt=0)
    tol_transv: float = Field(default_factory=lambda: settings.TOL_TRANSV, gt=0)
    preimage_seeds: int = Field(default_factory=lambda: settings.PREIMAGE_SEEDS, gt=0)
    switch_horizon: float = Field(default_factory=lambda: settings.SWITCH_HORIZON, gt=0)
    switch_stretch_cap: float = Field(default_factory=lambda: settings.SWITCH_STRETCH_CAP, gt=1)
    lambda_grid: int = Field(default_factory=lambda: settings.LAMBDA_GRID, gt=1)


@dataclass(frozen=True)
class Witness:
    """
    부호가 붙은 교차 하나.
    parameter: 발사 가지 부호 / 곡선 매개변수 u / 역상 점 등 정렬 키
    margin: 횡단성 여유 (|기울기| 또는 |det|)
    """

    kind: str
    parameter: Tuple[float, ...]
    point: Tuple[float, ...]
    sign: int
    margin: float
    orbit: Optional[Orbit] = field(default=None, compare=False, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "parameter": list(self.parameter),
            "point": list(self.point),
            "sign": self.sign,
            "margin": self.margin,
        }


@dataclass(frozen=True)
class ConnectionCount:
    """n = Σ witness.sign (같은 지표 쌍이면 교차수, 지표 차 1 이면 연결궤도 수)."""

    x: CriticalPoint
    y: CriticalPoint
    witnesses: Tuple[Witness, ...] = ()
    warnings: Tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return sum(w.sign for w in self.witnesses)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x": self.x.label,
            "y": self.y.label,
            "n": self.n,
            "witnesses": [w.to_dict() for w in self.witnesses],
            "warnings": list(self.warnings),
        }


@dataclass
class CountTable:
    """차수별 (x, y) → 개수. 리포트용."""

    counts: List[ConnectionCount] = field(default_factory=list)

    def lookup(self, x: str, y: str) -> int:
        for c in self.counts:
            if c.x.label == x and c.y.label == y:
                return c.n
        return 0

    def to_dict(self) -> List[Dict[str, Any]]:
        return [c.to_dict() for c in self.counts]


@dataclass
class MorseHomology:
    """전역/국소 파이프라인 결과: 데이터 (섭동 기록 포함), 복합체, 개수표, 호몰로지."""

    datum: MorseDatum
    complex: GradedComplex
    counts: CountTable
    homology: HomologyResult
    euler: Optional[Dict[str, int]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "datum": self.datum.to_dict(),
            "complex": self.complex.to_dict(),
            "counts": self.counts.to_dict(),
            "homology": self.homology.to_dict(),
            "euler": self.euler,
        }
