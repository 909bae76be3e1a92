from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config import settings
from domains.exprfield.models import Domain, ScalarField
from shared.exceptions import McfkitError


class MetricError(McfkitError):
    """계량이 대칭 양의 정부호가 아님"""

    stage = "flowcore.metric"


class DegenerateCriticalPointError(McfkitError):
    """|det Hessian| ≤ tol_nondeg 인 임계점 (섭동 필요)"""

    stage = "flowcore.critical_points"


class IntegrationFailure(McfkitError):
    """적분기 스텝 크기 언더플로 등"""

    stage = "flowcore.integrate"


class FrameCollapseError(McfkitError):
    """수송 중 프레임 조건수 > 한계"""

    stage = "flowcore.transport"


# ──────────────────────────────────────────────────────────────────────────────
# 설정
# ──────────────────────────────────────────────────────────────────────────────
class FlowConfig(BaseModel):
    """적분/수렴 판정 허용오차. 기본값은 settings (환경변수) 에서."""

    model_config = ConfigDict(frozen=True)

    rtol: float = Field(default_factory=lambda: settings.RTOL, gt=0)
    atol: float = Field(default_factory=lambda: settings.ATOL, gt=0)
    h_init: float = Field(default_factory=lambda: settings.H_INIT, gt=0)
    h_max: float = Field(default_factory=lambda: settings.H_MAX, gt=0)
    t_max: float = Field(default_factory=lambda: settings.T_MAX, gt=0)
    r_conv: float = Field(default_factory=lambda: settings.R_CONV, gt=0)
    cone_ratio: float = Field(default_factory=lambda: settings.CONE_RATIO, gt=0, lt=1)
    tol_crit: float = Field(default_factory=lambda: settings.TOL_CRIT, gt=0)
    tol_nondeg: float = Field(default_factory=lambda: settings.TOL_NONDEG, gt=0)
    seeds_per_axis: int = Field(default_factory=lambda: settings.SEEDS_PER_AXIS, gt=0)
    dedupe_radius: float = Field(default_factory=lambda: settings.DEDUPE_RADIUS, gt=0)
    frame_cond_max: float = Field(default_factory=lambda: settings.FRAME_COND_MAX, gt=1)


class PerturbationConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(default_factory=lambda: settings.PERTURB_EPSILON, gt=0)
    attempts: int = Field(default_factory=lambda: settings.PERTURB_ATTEMPTS, gt=0)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, ge=0)


# ──────────────────────────────────────────────────────────────────────────────
# 계량
# ──────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class Metric:
    """유클리드 또는 상수 SPD 행렬 g."""

    matrix: np.ndarray
    kind: str = "euclidean"

    def __post_init__(self) -> None:
        g = np.asarray(self.matrix, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise MetricError("계량은 정사각 행렬이어야 함", shape=g.shape)
        if not np.allclose(g, g.T, atol=0, rtol=0):
            raise MetricError("계량이 대칭이 아님")
        if np.min(np.linalg.eigvalsh(g)) <= 0:
            raise MetricError("계량이 양의 정부호가 아님")
        object.__setattr__(self, "matrix", g)

    @classmethod
    def euclidean(cls, n: int) -> "Metric":
        return cls(np.eye(n), "euclidean")

    @classmethod
    def spd(cls, rows: Sequence[Sequence[float]]) -> "Metric":
        return cls(np.array(rows, dtype=float), "spd")

    @property
    def is_euclidean(self) -> bool:
        return self.kind == "euclidean"

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)

    def raise_index(self, covector: np.ndarray) -> np.ndarray:
        """g⁻¹·v (그래디언트 → 벡터)"""
        return covector if self.is_euclidean else self.inverse @ covector

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(u @ self.matrix @ v)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "matrix": self.matrix.tolist()}


# ──────────────────────────────────────────────────────────────────────────────
# 영역: 축정렬 박스들의 합집합 (토러스면 주기적으로 감김)
# ──────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class Box:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.lower) != len(self.upper) or any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError(f"잘못된 박스: {self.lower} .. {self.upper}")

    @classmethod
    def from_bounds(cls, bounds: Sequence[Sequence[float]]) -> "Box":
        return cls(tuple(float(b[0]) for b in bounds), tuple(float(b[1]) for b in bounds))

    @property
    def bounds(self) -> List[List[float]]:
        return [[lo, hi] for lo, hi in zip(self.lower, self.upper)]

    @property
    def center(self) -> np.ndarray:
        return (np.array(self.lower) + np.array(self.upper)) / 2


@dataclass(frozen=True)
class Region:
    domain: Domain
    boxes: Tuple[Box, ...]

    def __post_init__(self) -> None:
        if not self.boxes:
            raise ValueError("영역에는 박스가 하나 이상 필요")
        for b in self.boxes:
            if len(b.lower) != self.domain.dimension:
                raise ValueError(f"박스 차원 불일치: {b}")

    @classmethod
    def whole(cls, domain: Domain) -> "Region":
        return cls(domain, (Box(tuple(domain.lower), tuple(domain.upper)),))

    @classmethod
    def from_bounds(cls, domain: Domain, boxes: Sequence[Sequence[Sequence[float]]]) -> "Region":
        return cls(domain, tuple(Box.from_bounds(b) for b in boxes))

    @cached_property
    def _lowers(self) -> np.ndarray:
        return np.array([b.lower for b in self.boxes])

    @cached_property
    def _uppers(self) -> np.ndarray:
        return np.array([b.upper for b in self.boxes])

    @cached_property
    def _shifts(self) -> np.ndarray:
        n = self.domain.dimension
        if not self.domain.is_torus:
            return np.zeros((1, n))
        return np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=n)))

    def contains_many(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.domain.is_torus:
            pts = self.domain.reduce(pts)
        # (K, S, 1, n) 대 (B, n)
        shifted = pts[:, None, None, :] + self._shifts[None, :, None, :]
        inside = np.all(
            (shifted >= self._lowers[None, None, :, :] - tol) & (shifted <= self._uppers[None, None, :, :] + tol),
            axis=-1,
        )
        return inside.any(axis=(1, 2))

    def contains(self, p, tol: float = 0.0) -> bool:
        return bool(self.contains_many(np.asarray(p, dtype=float)[None, :], tol)[0])

    @property
    def bounding_box(self) -> Box:
        return Box(tuple(self._lowers.min(axis=0)), tuple(self._uppers.max(axis=0)))

    @property
    def scale(self) -> float:
        b = self.bounding_box
        return float(np.max(np.array(b.upper) - np.array(b.lower)))

    def to_dict(self) -> Dict[str, Any]:
        return {"boxes": [b.bounds for b in self.boxes]}


# ──────────────────────────────────────────────────────────────────────────────
# 임계점 / 모스 데이터
# ──────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class CriticalPoint:
    """
    index = 불안정 방향 수. unstable_frame 열 = 음의 고유값 고유벡터 (오름차순),
    stable_frame 열 = 양의 고유값 고유벡터 (내림차순). orientation ∈ {±1} 은
    표준 프레임 대비 기록된 방향.
    """

    label: str
    coords: np.ndarray
    index: int
    eigenvalues: Tuple[float, ...]
    unstable_frame: np.ndarray
    stable_frame: np.ndarray
    orientation: int = 1

    def flipped(self) -> "CriticalPoint":
        return replace(self, orientation=-self.orientation)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "coords": [float(c) for c in self.coords],
            "index": self.index,
            "eigenvalues": [float(e) for e in self.eigenvalues],
            "orientation": self.orientation,
        }


class VectorFlow:
    """
    흐름 공통 인터페이스. velocity/jacobian 은 (점, 시각) 을 받는다.
    equilibria 는 수렴 판정에 쓰는 평형점 목록 (불안정/안정 프레임 포함).
    """

    domain: Domain
    autonomous: bool = True

    def velocity(self, p: np.ndarray, t: float = 0.0) -> np.ndarray:  # pragma: no cover - 인터페이스
        raise NotImplementedError

    def jacobian(self, p: np.ndarray, t: float = 0.0) -> np.ndarray:  # pragma: no cover - 인터페이스
        raise NotImplementedError

    @property
    def equilibria(self) -> Tuple[CriticalPoint, ...]:
        return ()

    @cached_property
    def equilibrium_coords(self) -> np.ndarray:
        eq = self.equilibria
        if not eq:
            return np.zeros((0, self.domain.dimension))
        return np.array([e.coords for e in eq])


class GradientFlow(VectorFlow):
    """ẋ = −g⁻¹∇f (음의 그래디언트 흐름)."""

    def __init__(self, field: ScalarField, metric: Metric, equilibria: Sequence[CriticalPoint] = ()) -> None:
        self.field = field
        self.metric = metric
        self.domain = field.domain
        self._equilibria = tuple(equilibria)

    @property
    def equilibria(self) -> Tuple[CriticalPoint, ...]:
        return self._equilibria

    def velocity(self, p: np.ndarray, t: float = 0.0) -> np.ndarray:
        return -self.metric.raise_index(self.field.gradient(p))

    def jacobian(self, p: np.ndarray, t: float = 0.0) -> np.ndarray:
        _, _, H = self.field.jet2(p)
        return -(H if self.metric.is_euclidean else self.metric.inverse @ H)


@dataclass(frozen=True, eq=False)
class MorseDatum:
    """
    (도메인, f, g, 방향) + 임계점 목록. region 이 있으면 국소 데이터 (그 안의 임계점만).
    perturbation: 자동 섭동이 적용됐으면 그 기록
    """

    domain: Domain
    field: ScalarField
    metric: Metric
    critical_points: Tuple[CriticalPoint, ...]
    region: Optional[Region] = None
    perturbation: Optional[Dict[str, Any]] = None

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @cached_property
    def flow(self) -> GradientFlow:
        return GradientFlow(self.field, self.metric, self.critical_points)

    def of_index(self, k: int) -> Tuple[CriticalPoint, ...]:
        return tuple(c for c in self.critical_points if c.index == k)

    def by_label(self, label: str) -> CriticalPoint:
        for c in self.critical_points:
            if c.label == label:
                return c
        raise KeyError(label)

    def with_points(self, points: Sequence[CriticalPoint]) -> "MorseDatum":
        return replace(self, critical_points=tuple(points))

    def index_sum(self) -> int:
        return sum((-1) ** c.index for c in self.critical_points)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "domain": self.domain.to_dict(),
            "field": self.field.text,
            "metric": self.metric.to_dict(),
            "region": self.region.to_dict() if self.region else None,
            "critical_points": [c.to_dict() for c in self.critical_points],
            "perturbation": self.perturbation,
        }


# ──────────────────────────────────────────────────────────────────────────────
# 궤도
# ──────────────────────────────────────────────────────────────────────────────
class OrbitStatus(str, Enum):
    CONVERGED = "converged"
    EXITED = "exited"
    TIME_CAPPED = "time_capped"
    REACHED = "reached"
    MONITORED = "monitored"


@dataclass(frozen=True)
class StopRule:
    """
    t_reach: 이 시각에서 정확히 멈춤 (없으면 T_max 까지)
    hit_critical: 평형점 수렴 시 멈춤
    region: 벗어나면 멈춤 (경계 교차점까지 정밀화)
    monitor: 매 스텝 점을 보고 None 이 아닌 값을 돌려주면 멈춤
    """

    t_reach: Optional[float] = None
    hit_critical: bool = True
    region: Optional[Region] = None
    monitor: Optional[Callable[[np.ndarray], Any]] = None


@dataclass
class Orbit:
    """
    샘플 경로 (토러스는 펼친 좌표). s 는 적분 시간 (0 부터, 방향과 무관하게 증가).
    """

    flow: VectorFlow
    direction: int
    t0: float
    times: np.ndarray
    points: np.ndarray
    status: OrbitStatus
    terminal: Optional[CriticalPoint] = None
    monitor_value: Any = None
    segments: List[Any] = field(default_factory=list, repr=False)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def at(self, s: float) -> np.ndarray:
        """적분 시간 s 에서의 점 (구간별 조밀 출력 보간)."""
        if s <= 0.0 or not self.segments:
            return self.points[0].copy()
        if s >= self.times[-1]:
            return self.points[-1].copy()
        i = int(np.searchsorted(self.times, s, side="right")) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        return np.asarray(self.segments[i](s), dtype=float)

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        n = self.points.shape[1]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(n)])
            for s, p in zip(self.times, self.points):
                w.writerow([repr(float(self.t0 + self.direction * s))] + [repr(float(v)) for v in p])
        return path

    def summary(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "direction": "forward" if self.direction > 0 else "backward",
            "duration": self.duration,
            "start": [float(v) for v in self.start],
            "end": [float(v) for v in self.endpoint],
            "terminal": self.terminal.label if self.terminal else None,
        }
