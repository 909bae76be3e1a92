"""
점 사상 공통 인터페이스.

- evaluate(p) → (상, 야코비안)          : 부호와 횡단성 여유 계산용
- image(p), images(P)                   : 상만
- preimages(y, ...)                     : 정사각 사상의 역상 (이산 집합)

식 사상 / 흐름 시간사상 ψ_R / 합성이 같은 인터페이스를 써서 교차 세기 엔진을 공유한다.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np
from scipy.integrate import solve_ivp

from domains.exprfield.models import Domain, SmoothMap
from domains.exprfield.services import (
    EvaluationDomainError,
    eval_map_jet,
    fix_parameter,
    make_map,
    map_image,
    map_images,
    parse,
)
from domains.flowcore.integrator import integrate
from domains.flowcore.models import FlowConfig, IntegrationFailure, Region, StopRule, VectorFlow

logger = logging.getLogger(__name__)

_NEWTON_STEPS = 50
_PREIMAGE_TOL = 1e-12


@runtime_checkable
class PointMap(Protocol):
    source: Domain
    target: Domain

    def evaluate(self, p) -> Tuple[np.ndarray, np.ndarray]: ...

    def image(self, p) -> np.ndarray: ...

    def images(self, points: np.ndarray) -> np.ndarray: ...

    def preimages(self, y, *, seeds_per_axis: int, region: Optional[Region] = None) -> List[np.ndarray]: ...

    def describe(self) -> str: ...


def _dedupe(domain: Domain, points: Sequence[np.ndarray], radius: float = 1e-6) -> List[np.ndarray]:
    out: List[np.ndarray] = []
    for p in sorted(points, key=lambda c: tuple(np.round(c, 9))):
        if not any(domain.distance(p, q) < radius for q in out):
            out.append(p)
    return out


def _seed_grid(domain: Domain, region: Optional[Region], per_axis: int) -> np.ndarray:
    if region is None:
        return domain.grid(per_axis)
    chunks = []
    for box in region.boxes:
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(box.lower, box.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        chunks.append(np.stack([m.ravel() for m in mesh], axis=1))
    return np.vstack(chunks)


# ──────────────────────────────────────────────────────────────────────────────
# 식 사상
# ──────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class ExpressionMap:
    smooth: SmoothMap

    @property
    def source(self) -> Domain:
        return self.smooth.source

    @property
    def target(self) -> Domain:
        return self.smooth.target

    def evaluate(self, p) -> Tuple[np.ndarray, np.ndarray]:
        return eval_map_jet(self.smooth, p)

    def image(self, p) -> np.ndarray:
        return map_image(self.smooth, p)

    def images(self, points: np.ndarray) -> np.ndarray:
        return map_images(self.smooth, points)

    def preimages(self, y, *, seeds_per_axis: int, region: Optional[Region] = None) -> List[np.ndarray]:
        """격자 시드에서 뉴턴 (토러스 타깃은 최소 이미지 잔차)."""
        if self.source.dimension != self.target.dimension:
            raise ValueError("역상 계산은 정사각 사상에서만")
        y = np.asarray(y, dtype=float)
        found: List[np.ndarray] = []
        for seed in _seed_grid(self.source, region, seeds_per_axis):
            p = seed.copy()
            for _ in range(_NEWTON_STEPS):
                value, J = self.evaluate(p)
                r = self.target.displacement(y, value)
                if np.linalg.norm(r) < _PREIMAGE_TOL:
                    q = self.source.reduce(p)
                    if region is None or region.contains(q, tol=1e-9):
                        if self.source.is_torus or self.source.contains(q, tol=1e-9):
                            found.append(q)
                    break
                step = np.linalg.lstsq(J, r, rcond=None)[0]
                if not np.all(np.isfinite(step)) or np.linalg.norm(step) > self.source.scale:
                    break
                p = p - step
        return _dedupe(self.source, found)

    def describe(self) -> str:
        return "(" + ", ".join(self.smooth.texts) + ")"


def identity_map(domain: Domain) -> ExpressionMap:
    return ExpressionMap(make_map(domain, domain, [f"x{i + 1}" for i in range(domain.dimension)]))


# ──────────────────────────────────────────────────────────────────────────────
# 흐름 시간사상 ψ: 시각 t0 에서 t0+duration 까지
# ──────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class FlowTimeMap:
    flow: VectorFlow
    duration: float
    t0: float = 0.0
    config: Optional[FlowConfig] = None
    label: str = "flow"

    @property
    def source(self) -> Domain:
        return self.flow.domain

    @property
    def target(self) -> Domain:
        return self.flow.domain

    def _orbit(self, p, direction: int = 1):
        start = self.t0 if direction > 0 else self.t0 + self.duration
        stop = StopRule(t_reach=self.duration, hit_critical=False)
        return integrate(self.flow, p, direction=direction, stop=stop, config=self.config, t0=start)

    def evaluate(self, p) -> Tuple[np.ndarray, np.ndarray]:
        """상과 Dψ. Dψ 는 변분방정식 Φ' = DX(x, t)·Φ, Φ(0) = I 를 상태와 함께 적분 (정규화 없음)."""
        x0 = np.asarray(p, dtype=float)
        n = self.source.dimension
        if self.duration == 0.0:
            return self.target.reduce(x0), np.eye(n)
        config = self.config or FlowConfig()

        def rhs(s, z):
            x, phi = z[:n], z[n:].reshape(n, n)
            t = self.t0 + s
            return np.concatenate([self.flow.velocity(x, t), (self.flow.jacobian(x, t) @ phi).ravel()])

        try:
            sol = solve_ivp(
                rhs,
                (0.0, self.duration),
                np.concatenate([x0, np.eye(n).ravel()]),
                method="RK45",
                rtol=config.rtol,
                atol=config.atol,
                max_step=config.h_max,
            )
        except (EvaluationDomainError, OverflowError, FloatingPointError) as exc:
            raise IntegrationFailure("변분방정식 적분 실패", location=x0, time=self.t0, reason=str(exc)) from exc
        z = sol.y[:, -1]
        if not sol.success or not np.all(np.isfinite(z)):
            raise IntegrationFailure("변분방정식 적분 실패", location=x0, time=self.t0, reason=sol.message)
        return self.target.reduce(z[:n]), z[n:].reshape(n, n)

    def image(self, p) -> np.ndarray:
        if self.duration == 0.0:
            return self.target.reduce(p)
        return self.target.reduce(self._orbit(p).endpoint)

    def images(self, points: np.ndarray) -> np.ndarray:
        return np.array([self.image(p) for p in np.atleast_2d(points)])

    def preimages(self, y, *, seeds_per_axis: int = 0, region: Optional[Region] = None) -> List[np.ndarray]:
        # 흐름 사상은 미분동형: 역방향 적분 한 번
        p = self.source.reduce(self._orbit(np.asarray(y, dtype=float), direction=-1).endpoint)
        if region is not None and not region.contains(p):
            return []
        return [p]

    def describe(self) -> str:
        return f"{self.label}[{self.t0}, {self.t0 + self.duration}]"


# ──────────────────────────────────────────────────────────────────────────────
# 합성 (maps[0] 먼저)
# ──────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class ComposedMap:
    maps: Tuple[PointMap, ...]

    def __post_init__(self) -> None:
        for a, b in zip(self.maps, self.maps[1:]):
            if a.target != b.source:
                raise ValueError(f"합성 불가: {a.describe()} 의 타깃과 {b.describe()} 의 소스가 다름")

    @property
    def source(self) -> Domain:
        return self.maps[0].source

    @property
    def target(self) -> Domain:
        return self.maps[-1].target

    def evaluate(self, p) -> Tuple[np.ndarray, np.ndarray]:
        q = np.asarray(p, dtype=float)
        J = np.eye(self.source.dimension)
        for m in self.maps:
            q, Jm = m.evaluate(q)
            J = Jm @ J
        return q, J

    def image(self, p) -> np.ndarray:
        q = np.asarray(p, dtype=float)
        for m in self.maps:
            q = m.image(q)
        return q

    def images(self, points: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(np.asarray(points, dtype=float))
        for m in self.maps:
            q = m.images(q)
        return q

    def preimages(self, y, *, seeds_per_axis: int, region: Optional[Region] = None) -> List[np.ndarray]:
        layer = [np.asarray(y, dtype=float)]
        for i in range(len(self.maps) - 1, -1, -1):
            m = self.maps[i]
            restrict = region if i == 0 else None
            nxt: List[np.ndarray] = []
            for q in layer:
                nxt.extend(m.preimages(q, seeds_per_axis=seeds_per_axis, region=restrict))
            layer = _dedupe(m.source, nxt)
        return layer

    def describe(self) -> str:
        return " ∘ ".join(m.describe() for m in reversed(self.maps))


# ──────────────────────────────────────────────────────────────────────────────
# 사상 족 h_λ (마지막 변수 x_{n+1} = λ)
# ──────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class MapFamily:
    source: Domain
    target: Domain
    texts: Tuple[str, ...]

    def at(self, lam: float) -> ExpressionMap:
        n = self.source.dimension
        comps = tuple(fix_parameter(parse(t, n + 1), n, lam, n) for t in self.texts)
        return ExpressionMap(SmoothMap(self.source, self.target, comps))
