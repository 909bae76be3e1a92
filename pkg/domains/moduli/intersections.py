"""
같은 지표 쌍 (|x| = |y| = k) 의 부호 있는 교차수 n_h(x, y):
W^u(x) ∩ h⁻¹(W^s(y)) 를 센다. 유도사상, 연속사상, 흐름 삽입 합성이 모두 이 엔진을 쓴다.

k = 0  점:     h(x) 의 앞방향 ψ_B 궤도가 y 로 수렴하면 +1
k = 1  곡선:   W^u(x) 를 u 로 매개화 (음의 가지 역순, 선형 조각 [−r, r], 양의 가지).
              각 표본의 상 h(p(u)) 에서 ψ_B 궤도를 돌려 y 근처 공 (반지름 ρ) 에서
              불안정 방향의 어느 쪽으로 나가는지 (side = ±1) 를 본다. side 가 바뀌는 곳이
              W^s(y) 와의 교차. 부호 = (s_after − s_before)/2 · o(x)o(y)
k = 2  역상:   h(p) = y 의 뉴턴 역상 중 뒤방향 ψ_A 궤도가 x 로 수렴하는 것.
              부호 = o(x)o(y)·sgn det E_x·sgn det Dh(p)·sgn det E_y
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from domains.flowcore.integrator import integrate
from domains.flowcore.models import (
    CriticalPoint,
    FlowConfig,
    MorseDatum,
    Orbit,
    OrbitStatus,
    Region,
    StopRule,
    VectorFlow,
)
from domains.flowcore.services import launch_branches
from domains.zalgebra.matrices import IntMatrix
from shared.workers import parallel_map

from .models import (
    ConnectionCount,
    IndexMismatchError,
    ShootingConfig,
    TransversalityError,
    UnsupportedDimensionError,
    Witness,
)

logger = logging.getLogger(__name__)


def _sgn_det(frame: np.ndarray) -> int:
    if frame.shape[1] == 0:
        return 1
    return 1 if np.linalg.det(frame) > 0 else -1


def _escape_coefficient(y: CriticalPoint, d: np.ndarray) -> float:
    basis = np.hstack([y.unstable_frame, y.stable_frame])
    return float(np.linalg.solve(basis, d)[0])


# ──────────────────────────────────────────────────────────────────────────────
# side 판정
# ──────────────────────────────────────────────────────────────────────────────
class SideMonitor:
    """
    ψ_B 궤도를 지켜보다가 대상 점 y 의 공 (반지름 ρ) 안에서 불안정 계수가 ρ/2 를 넘거나
    공을 빠져나가면 (y 라벨, 부호) 를 돌려준다.
    """

    def __init__(self, targets: Sequence[CriticalPoint], flow: VectorFlow, radius: float) -> None:
        self.targets = list(targets)
        self.domain = flow.domain
        self.radius = radius
        self.inside = [False] * len(self.targets)

    def __call__(self, z: np.ndarray):
        for i, y in enumerate(self.targets):
            d = self.domain.displacement(y.coords, z)
            dist = float(np.linalg.norm(d))
            if dist < self.radius:
                self.inside[i] = True
                c = _escape_coefficient(y, d)
                if abs(c) >= self.radius / 2:
                    return (y.label, 1 if c > 0 else -1)
            elif self.inside[i]:
                c = _escape_coefficient(y, d)
                return (y.label, 1 if c > 0 else -1)
        return None


@dataclass
class _SideOracle:
    """h(p) 한 점에서 (라벨, side) 를 계산. side 0 = y 로 수렴 (W^s(y) 위)."""

    flow_B: VectorFlow
    targets: Tuple[CriticalPoint, ...]
    region_B: Optional[Region]
    config: FlowConfig
    shooting: ShootingConfig
    point_targets: bool  # W^s(y) = {y} (y 의 지표 = n_B)

    def __call__(self, q: np.ndarray) -> Dict[str, Optional[int]]:
        if self.region_B is not None and not self.region_B.contains(q):
            return {}
        if self.point_targets:
            out: Dict[str, Optional[int]] = {}
            for y in self.targets:
                d = self.flow_B.domain.displacement(y.coords, q)
                c = _escape_coefficient(y, d)
                out[y.label] = 0 if c == 0.0 else (1 if c > 0 else -1)
            return out
        monitor = SideMonitor(self.targets, self.flow_B, self.shooting.side_radius)
        orbit = integrate(
            self.flow_B,
            q,
            direction=1,
            stop=StopRule(hit_critical=True, region=self.region_B, monitor=monitor),
            config=self.config,
        )
        if orbit.status is OrbitStatus.MONITORED:
            label, side = orbit.monitor_value
            return {label: side}
        if orbit.status is OrbitStatus.CONVERGED and orbit.terminal is not None:
            return {orbit.terminal.label: 0}
        return {}


# ──────────────────────────────────────────────────────────────────────────────
# 불안정 곡선 W^u(x) (|x| = 1)
# ──────────────────────────────────────────────────────────────────────────────
@dataclass
class _UnstableCurve:
    x: CriticalPoint
    r: float
    branches: Dict[int, Orbit]

    @property
    def lower(self) -> float:
        return -(self.r + self.branches[-1].duration)

    @property
    def upper(self) -> float:
        return self.r + self.branches[1].duration

    def point(self, u: float) -> np.ndarray:
        if abs(u) <= self.r:
            return self.x.coords + u * self.x.unstable_frame[:, 0]
        sigma = 1 if u > 0 else -1
        return self.branches[sigma].at(abs(u) - self.r)


def _unstable_curve(datum_A: MorseDatum, x: CriticalPoint, region_A, config, shooting) -> _UnstableCurve:
    stop = StopRule(hit_critical=True, region=region_A)
    branches = dict(
        launch_branches(datum_A.flow, x, direction=1, r_launch=shooting.r_launch, stop=stop, config=config)
    )
    return _UnstableCurve(x, shooting.r_launch, branches)


def _initial_parameters(curve: _UnstableCurve, count: int) -> List[float]:
    per_branch = max(2, count // 2)
    us = set(np.linspace(-curve.r, curve.r, 8).tolist())
    for sigma in (-1, 1):
        dur = curve.branches[sigma].duration
        for s in np.linspace(0.0, dur, per_branch)[1:]:
            us.add(sigma * (curve.r + float(s)))
    return sorted(us)


def _refine_by_images(curve: _UnstableCurve, h, us: List[float], shooting: ShootingConfig):
    """이웃 상 사이 거리가 image_resolution 을 넘으면 중점 삽입."""
    images = {u: h.image(curve.point(u)) for u in us}
    target = h.target
    while len(us) < shooting.max_curve_samples:
        inserted: List[float] = []
        for a, b in zip(us, us[1:]):
            if target.distance(images[a], images[b]) > shooting.image_resolution and b - a > 1e-9:
                inserted.append(0.5 * (a + b))
        if not inserted:
            break
        room = shooting.max_curve_samples - len(us)
        for u in inserted[:room]:
            images[u] = h.image(curve.point(u))
        us = sorted(set(us) | set(inserted[:room]))
    return us, images


def _transversality_margin(h, curve: _UnstableCurve, u: float, y: CriticalPoint, flow_B: VectorFlow) -> float:
    delta = 1e-6
    a, b = h.image(curve.point(u - delta)), h.image(curve.point(u + delta))
    v = h.target.displacement(a, b) / (2 * delta)
    if h.target.dimension == 1:
        return float(np.linalg.norm(v))
    q = h.image(curve.point(u))
    w = flow_B.velocity(q)
    if np.linalg.norm(w) < 1e-9:
        w = y.stable_frame[:, 0]
    w = w / np.linalg.norm(w)
    return float(abs(np.linalg.det(np.column_stack([v, w]))))


def _curve_row(
    h,
    datum_A: MorseDatum,
    datum_B: MorseDatum,
    x: CriticalPoint,
    targets: Sequence[CriticalPoint],
    region_A: Optional[Region],
    region_B: Optional[Region],
    config: FlowConfig,
    shooting: ShootingConfig,
    threads: Optional[int],
) -> Dict[str, ConnectionCount]:
    curve = _unstable_curve(datum_A, x, region_A, config, shooting)
    point_targets = datum_B.dimension == 1
    oracle = _SideOracle(datum_B.flow, tuple(targets), region_B, config, shooting, point_targets)
    us, images = _refine_by_images(curve, h, _initial_parameters(curve, shooting.curve_samples), shooting)
    sides = parallel_map(lambda u: oracle(images[u]), us, threads=threads)
    logger.debug(f"curve {x.label}: {len(us)} samples on [{curve.lower:.3g}, {curve.upper:.3g}]")

    def side_at(u: float, label: str) -> Optional[int]:
        return oracle(h.image(curve.point(u))).get(label)

    out: Dict[str, ConnectionCount] = {}
    for y in targets:
        seq = [s.get(y.label) for s in sides]
        roots: List[Tuple[float, int]] = []
        warnings: List[str] = []
        # side 0 표본: 그 자리가 근, 부호는 양옆의 0 아닌 side 로
        for i, v in enumerate(seq):
            if v != 0:
                continue
            left = next((seq[j] for j in range(i - 1, -1, -1) if seq[j] not in (0, None)), None)
            right = next((seq[j] for j in range(i + 1, len(seq)) if seq[j] not in (0, None)), None)
            if left is not None and right is not None and left != right:
                roots.append((us[i], (right - left) // 2))
            else:
                warnings.append(f"u={us[i]:.6g}: W^s({y.label}) 에 접함 (부호 없음)")
        for i in range(len(us) - 1):
            a, b = seq[i], seq[i + 1]
            if a not in (1, -1) or b not in (1, -1) or a == b:
                continue
            lo, hi = us[i], us[i + 1]
            root = None
            while hi - lo > shooting.bisection_width:
                mid = 0.5 * (lo + hi)
                if mid in (lo, hi):
                    break
                v = side_at(mid, y.label)
                if v == a:
                    lo = mid
                elif v == b:
                    hi = mid
                elif v == 0:
                    root = mid
                    break
                else:
                    warnings.append(f"u∈[{lo:.6g}, {hi:.6g}]: 이분법 중 궤도가 {y.label} 근처를 지나지 않음")
                    break
            roots.append((root if root is not None else 0.5 * (lo + hi), (b - a) // 2))
        roots.sort()
        sign_xy = x.orientation * y.orientation
        witnesses: List[Witness] = []
        for u, s in roots:
            p = curve.point(u)
            q = h.image(p)
            if point_targets and datum_B.domain.distance(q, y.coords) > shooting.image_resolution:
                # 토러스 최소 이미지의 반대편 불연속: 진짜 근이 아님
                continue
            margin = _transversality_margin(h, curve, u, y, datum_B.flow)
            if margin < shooting.tol_transv:
                raise TransversalityError(
                    "비횡단 교차: h 를 섭동할 것",
                    x=x.label,
                    y=y.label,
                    parameter=u,
                    margin=margin,
                )
            witnesses.append(
                Witness("curve", (float(u),), tuple(float(c) for c in p), int(s * sign_xy), margin)
            )
        for w1, w2 in zip(witnesses, witnesses[1:]):
            if h.target.distance(h.image(np.array(w1.point)), h.image(np.array(w2.point))) < shooting.image_resolution:
                msg = f"근 두 개가 해상도 이내 (u={w1.parameter[0]:.6g}, {w2.parameter[0]:.6g}): 놓친 궤도 위험"
                logger.warning(f"{x.label}->{y.label}: {msg}")
                warnings.append(msg)
        out[y.label] = ConnectionCount(x, y, tuple(witnesses), tuple(warnings))
    return out


# ──────────────────────────────────────────────────────────────────────────────
# k = 0, k = 2
# ──────────────────────────────────────────────────────────────────────────────
def _point_row(h, datum_B, x, targets, region_B, config) -> Dict[str, ConnectionCount]:
    out = {y.label: ConnectionCount(x, y) for y in targets}
    q = h.image(x.coords)
    if region_B is not None and not region_B.contains(q):
        return out
    orbit = integrate(datum_B.flow, q, direction=1, stop=StopRule(hit_critical=True, region=region_B), config=config)
    z = orbit.terminal
    if orbit.status is not OrbitStatus.CONVERGED or z is None:
        return out
    if z.index > 0:
        raise TransversalityError(
            "h(x) 가 더 높은 지표 점의 안정다양체 위에 있음: h 를 섭동할 것", x=x.label, target=z.label, image=q
        )
    if z.label in out:
        w = Witness("point", (), tuple(float(c) for c in x.coords), x.orientation * z.orientation, 1.0, orbit)
        out[z.label] = ConnectionCount(x, z, (w,))
    return out


def _preimage_row(h, datum_A, x, targets, region_A, config, shooting) -> Dict[str, ConnectionCount]:
    out: Dict[str, ConnectionCount] = {}
    e_x = _sgn_det(x.unstable_frame)
    for y in targets:
        witnesses: List[Witness] = []
        for p in h.preimages(y.coords, seeds_per_axis=shooting.preimage_seeds, region=region_A):
            orbit = integrate(
                datum_A.flow, p, direction=-1, stop=StopRule(hit_critical=True, region=region_A), config=config
            )
            if orbit.status is not OrbitStatus.CONVERGED or orbit.terminal is not x:
                continue
            _, J = h.evaluate(p)
            det = float(np.linalg.det(J))
            if abs(det) < shooting.tol_transv:
                raise TransversalityError("역상에서 Dh 가 퇴화", x=x.label, y=y.label, point=p, det=det)
            sign = x.orientation * y.orientation * e_x * (1 if det > 0 else -1) * _sgn_det(y.unstable_frame)
            witnesses.append(Witness("preimage", tuple(float(c) for c in p), tuple(float(c) for c in p), sign, abs(det)))
        witnesses.sort(key=lambda w: w.parameter)
        out[y.label] = ConnectionCount(x, y, tuple(witnesses))
    return out


def intersection_row(
    h,
    datum_A: MorseDatum,
    datum_B: MorseDatum,
    x: CriticalPoint,
    targets: Sequence[CriticalPoint],
    *,
    region_A: Optional[Region] = None,
    region_B: Optional[Region] = None,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    threads: Optional[int] = None,
) -> Dict[str, ConnectionCount]:
    """x 하나에 대해 같은 지표의 모든 대상 y 와의 교차수."""
    config = config or FlowConfig()
    shooting = shooting or ShootingConfig()
    k = x.index
    for y in targets:
        if y.index != k:
            raise IndexMismatchError("|x| = |y| 이어야 함", x=x.label, y=y.label, x_index=k, y_index=y.index)
    if not targets:
        return {}
    if k == 0:
        return _point_row(h, datum_B, x, targets, region_B, config)
    if datum_A.dimension > 2 or datum_B.dimension > 2:
        raise UnsupportedDimensionError("교차 세기는 n ≤ 2 에서만", source=datum_A.dimension, target=datum_B.dimension)
    if k == 1:
        return _curve_row(h, datum_A, datum_B, x, targets, region_A, region_B, config, shooting, threads)
    return _preimage_row(h, datum_A, x, targets, region_A, config, shooting)


def intersection_matrix(
    h,
    datum_A: MorseDatum,
    datum_B: MorseDatum,
    k: int,
    *,
    region_A: Optional[Region] = None,
    region_B: Optional[Region] = None,
    config: Optional[FlowConfig] = None,
    shooting: Optional[ShootingConfig] = None,
    threads: Optional[int] = None,
) -> Tuple[IntMatrix, List[ConnectionCount]]:
    """차수 k 행렬 (행: B 의 지표 k 점, 열: A 의 지표 k 점) 과 쌍별 개수."""
    sources, targets = datum_A.of_index(k), datum_B.of_index(k)
    counts: List[ConnectionCount] = []
    entries = [[0] * len(sources) for _ in targets]
    for j, x in enumerate(sources):
        row = intersection_row(
            h, datum_A, datum_B, x, targets,
            region_A=region_A, region_B=region_B, config=config, shooting=shooting, threads=threads,
        )
        for i, y in enumerate(targets):
            c = row.get(y.label, ConnectionCount(x, y))
            entries[i][j] = c.n
            counts.append(c)
    return IntMatrix.from_rows(entries, cols=len(sources)), counts
