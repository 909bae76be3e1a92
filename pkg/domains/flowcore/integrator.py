"""
RK45 (Dormand–Prince) 을 한 스텝씩 진행하면서 정지 조건을 매 스텝 확인한다.

- s: 적분 시간 (0 부터 증가). 실제 흐름 시각은 t0 + direction·s
- 영역 이탈은 조밀 출력 위 이분법으로 경계 교차점까지 정밀화
- 수렴: r_conv 안 + 선형화 수축 원뿔 (불안정 성분 < cone_ratio·|변위|)
"""
from __future__ import annotations

import logging
import math
from typing import List, Optional

import numpy as np
import scipy.linalg
from scipy.integrate import RK45

from domains.exprfield.services import EvaluationDomainError

from .models import (
    CriticalPoint,
    FlowConfig,
    FrameCollapseError,
    IntegrationFailure,
    Orbit,
    OrbitStatus,
    Region,
    StopRule,
    VectorFlow,
)

logger = logging.getLogger(__name__)

_EXIT_BISECTIONS = 60
_TRANSPORT_STEP = 0.2  # h·‖J‖ 상한 (RK4 부분스텝)


def _escaping_component(eq: CriticalPoint, d: np.ndarray, direction: int) -> float:
    """변위 d 를 고유기저로 분해했을 때 '빠져나가는' 쪽 성분의 크기."""
    U, S = eq.unstable_frame, eq.stable_frame
    basis = np.hstack([U, S])
    coeffs = np.linalg.solve(basis, d)
    k = U.shape[1]
    part = U @ coeffs[:k] if direction > 0 else S @ coeffs[k:]
    return float(np.linalg.norm(part))


def converged_to(flow: VectorFlow, y: np.ndarray, direction: int, config: FlowConfig) -> Optional[CriticalPoint]:
    eqs = flow.equilibria
    if not eqs:
        return None
    d_all = y[None, :] - flow.equilibrium_coords
    if flow.domain.is_torus:
        d_all = d_all - np.round(d_all)
    dists = np.linalg.norm(d_all, axis=1)
    i = int(np.argmin(dists))
    if dists[i] >= config.r_conv:
        return None
    if dists[i] == 0.0:
        return eqs[i]
    if _escaping_component(eqs[i], d_all[i], direction) < config.cone_ratio * dists[i]:
        return eqs[i]
    return None


def _refine_exit(dense, region: Region, lo: float, hi: float):
    """lo 는 영역 안, hi 는 밖. 반환: (시각, 밖쪽 점)."""
    for _ in range(_EXIT_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if region.contains(dense(mid)):
            lo = mid
        else:
            hi = mid
    return hi, np.asarray(dense(hi), dtype=float)


def integrate(
    flow: VectorFlow,
    p0,
    *,
    direction: int = 1,
    stop: StopRule = StopRule(),
    config: Optional[FlowConfig] = None,
    t0: float = 0.0,
) -> Orbit:
    config = config or FlowConfig()
    y0 = np.asarray(p0, dtype=float).copy()
    horizon = stop.t_reach if stop.t_reach is not None else config.t_max
    times: List[float] = [0.0]
    points: List[np.ndarray] = [y0]
    segments: List = []

    def finish(status: OrbitStatus, terminal=None, value=None) -> Orbit:
        return Orbit(
            flow=flow,
            direction=direction,
            t0=t0,
            times=np.array(times),
            points=np.array(points),
            status=status,
            terminal=terminal,
            monitor_value=value,
            segments=segments,
        )

    # 시작점 자체 판정
    if stop.region is not None and not stop.region.contains(y0):
        return finish(OrbitStatus.EXITED)
    if stop.hit_critical:
        hit = converged_to(flow, y0, direction, config)
        if hit is not None:
            return finish(OrbitStatus.CONVERGED, hit)
    if stop.monitor is not None:
        value = stop.monitor(y0)
        if value is not None:
            return finish(OrbitStatus.MONITORED, value=value)
    if horizon <= 0.0:
        return finish(OrbitStatus.REACHED)

    def rhs(s, y):
        return direction * flow.velocity(y, t0 + direction * s)

    solver = RK45(
        rhs,
        0.0,
        y0,
        horizon,
        rtol=config.rtol,
        atol=config.atol,
        first_step=min(config.h_init, horizon),
        max_step=config.h_max,
    )
    while True:
        try:
            message = solver.step()
        except (EvaluationDomainError, OverflowError, FloatingPointError) as exc:
            raise IntegrationFailure(
                "장 평가 실패",
                location=points[-1],
                time=t0 + direction * times[-1],
                reason=str(exc),
            ) from exc
        y = np.asarray(solver.y, dtype=float)
        if solver.status == "failed" or not np.all(np.isfinite(y)):
            raise IntegrationFailure(
                "적분 실패",
                location=points[-1],
                time=t0 + direction * times[-1],
                reason=message,
            )
        dense = solver.dense_output()
        s_prev, s = times[-1], float(solver.t)
        segments.append(dense)
        if stop.region is not None and not stop.region.contains(y):
            s_exit, y_exit = _refine_exit(dense, stop.region, s_prev, s)
            times.append(s_exit)
            points.append(y_exit)
            return finish(OrbitStatus.EXITED)
        times.append(s)
        points.append(y.copy())
        if stop.hit_critical:
            hit = converged_to(flow, y, direction, config)
            if hit is not None:
                return finish(OrbitStatus.CONVERGED, hit)
        if stop.monitor is not None:
            value = stop.monitor(y)
            if value is not None:
                return finish(OrbitStatus.MONITORED, value=value)
        if solver.status == "finished":
            return finish(OrbitStatus.REACHED if stop.t_reach is not None else OrbitStatus.TIME_CAPPED)


# ──────────────────────────────────────────────────────────────────────────────
# 변분방정식: Φ' = direction·J(x(s))·Φ
# ──────────────────────────────────────────────────────────────────────────────
def _orthonormalize(frame: np.ndarray, config: FlowConfig) -> np.ndarray:
    sv = np.linalg.svd(frame, compute_uv=False)
    if sv[-1] <= 0.0 or sv[0] / sv[-1] > config.frame_cond_max:
        raise FrameCollapseError("프레임 붕괴", condition=float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf)
    q, r = scipy.linalg.qr(frame, mode="economic")
    # R 대각을 양수로: 열공간의 방향(orientation) 보존
    return q * np.sign(np.diag(r))[None, :]


def transport_frame(orbit: Orbit, frame: np.ndarray, *, config: Optional[FlowConfig] = None) -> np.ndarray:
    """궤도 시작점의 프레임(n×k)을 끝점까지 선형화 흐름으로 운반. 스텝마다 재직교화."""
    config = config or FlowConfig()
    phi = np.asarray(frame, dtype=float).reshape(orbit.points.shape[1], -1).copy()
    if phi.shape[1] == 0:
        return phi
    flow, d, t0 = orbit.flow, orbit.direction, orbit.t0

    def J(s: float, seg) -> np.ndarray:
        return d * flow.jacobian(np.asarray(seg(s), dtype=float), t0 + d * s)

    for i, seg in enumerate(orbit.segments):
        a, b = float(orbit.times[i]), float(orbit.times[i + 1])
        h_total = b - a
        if h_total <= 0.0:
            continue
        L = float(np.linalg.norm(J(a, seg), 2))
        m = max(1, math.ceil(h_total * L / _TRANSPORT_STEP))
        h = h_total / m
        s = a
        for _ in range(m):
            J0, Jm, J1 = J(s, seg), J(s + h / 2, seg), J(s + h, seg)
            k1 = J0 @ phi
            k2 = Jm @ (phi + h / 2 * k1)
            k3 = Jm @ (phi + h / 2 * k2)
            k4 = J1 @ (phi + h * k3)
            phi = phi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            s += h
        phi = _orthonormalize(phi, config)
    logger.debug(f"transport_frame: {len(orbit.segments)} segments, status={orbit.status.value}")
    return phi
