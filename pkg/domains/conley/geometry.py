"""
상자 합집합 N 의 기하: 경계 메쉬, 경계까지 거리, 내부 격자, 상자 병합, 단위 입방체 세포 복합체.
토러스에서는 한 축 전체를 덮는 상자의 그 축 면은 경계가 아니다 (감김).
"""
from __future__ import annotations

import itertools
import math
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.spatial import cKDTree

from domains.flowcore.models import Box, Region
from domains.zalgebra.matrices import IntMatrix
from domains.zalgebra.models import GradedComplex

_NUDGE = 1e-9


def box_grid(box: Box, per_axis: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(box.lower, box.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def region_grid(region: Region, per_axis: int) -> np.ndarray:
    """상자별 균일 격자를 합치고 겹치는 점 제거 (순서는 사전식으로 고정)."""
    pts = np.vstack([box_grid(b, per_axis) for b in region.boxes])
    if region.domain.is_torus:
        pts = region.domain.reduce(pts)
    pts = np.unique(np.round(pts, 12), axis=0)
    return pts


def _face_points(box: Box, axis: int, value: float, spacing: float) -> np.ndarray:
    n = len(box.lower)
    axes = []
    for i in range(n):
        if i == axis:
            axes.append(np.array([value]))
            continue
        width = box.upper[i] - box.lower[i]
        count = max(2, int(math.ceil(width / spacing)) + 1)
        axes.append(np.linspace(box.lower[i], box.upper[i], count))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def boundary_mesh(region: Region, spacing: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    ∂N 위 표본점과 바깥 법선. spacing 은 상자 크기 대비 비율.
    면 위의 점 p 는 p + δν 가 N 밖일 때만 경계로 인정 (다른 상자와 맞닿은 면은 제외).
    """
    points: List[np.ndarray] = []
    normals: List[np.ndarray] = []
    n = region.domain.dimension
    for box in region.boxes:
        step = spacing * max(hi - lo for lo, hi in zip(box.lower, box.upper))
        for axis in range(n):
            for value, sign in ((box.lower[axis], -1.0), (box.upper[axis], 1.0)):
                face = _face_points(box, axis, value, step)
                nu = np.zeros(n)
                nu[axis] = sign
                outside = ~region.contains_many(face + _NUDGE * nu)
                if outside.any():
                    points.append(face[outside])
                    normals.append(np.repeat(nu[None, :], int(outside.sum()), axis=0))
    if not points:
        return np.zeros((0, n)), np.zeros((0, n))
    pts, nus = np.vstack(points), np.vstack(normals)
    # 모서리 중복 제거 (첫 법선 유지)
    _, keep = np.unique(np.round(pts, 12), axis=0, return_index=True)
    keep = np.sort(keep)
    return pts[keep], nus[keep]


class BoundaryDistance:
    """
    N 안의 점에서 ∂N 까지의 거리 (보수적 추정).
    상자 하나면 정확한 값, 합집합이면 max(포함 상자 기준 하한, 메쉬 거리 − 메쉬 반대각선).
    """

    def __init__(self, region: Region, spacing: float) -> None:
        self.region = region
        self.torus = region.domain.is_torus
        self.mesh, _ = boundary_mesh(region, spacing)
        steps = [spacing * max(hi - lo for lo, hi in zip(b.lower, b.upper)) for b in region.boxes]
        self.slack = 0.5 * max(steps) * math.sqrt(max(region.domain.dimension - 1, 0))
        self.tree: Optional[cKDTree] = None
        if len(self.mesh) and len(region.boxes) > 1:
            data = region.domain.reduce(self.mesh) if self.torus else self.mesh
            self.tree = cKDTree(data, boxsize=1.0 if self.torus else None)

    def _box_lower_bound(self, p: np.ndarray) -> float:
        best = 0.0
        for box in self.region.boxes:
            gaps = []
            for i, (lo, hi) in enumerate(zip(box.lower, box.upper)):
                if self.torus and hi - lo >= 1.0:
                    continue
                x = p[i]
                if self.torus:
                    # lo 기준으로 한 주기 안에 놓기
                    x = lo + ((x - lo) % 1.0)
                if x < lo or x > hi:
                    gaps = None
                    break
                gaps.append(min(x - lo, hi - x))
            if gaps is None:
                continue
            best = max(best, min(gaps) if gaps else math.inf)
        return best

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if not len(self.mesh):
            # 경계 없음 (토러스 전체)
            return np.full(len(pts), math.inf)
        lower = np.array([self._box_lower_bound(p) for p in pts])
        if self.tree is None:
            return lower
        data = self.region.domain.reduce(pts) if self.torus else pts
        mesh_dist, _ = self.tree.query(data, k=1)
        return np.maximum(lower, mesh_dist - self.slack)


# ──────────────────────────────────────────────────────────────────────────────
# 상자 병합
# ──────────────────────────────────────────────────────────────────────────────
def _merge_along(boxes: List[Box], axis: int) -> List[Box]:
    groups: Dict[Tuple, List[Box]] = {}
    for b in boxes:
        key = tuple((lo, hi) for i, (lo, hi) in enumerate(zip(b.lower, b.upper)) if i != axis)
        groups.setdefault(key, []).append(b)
    out: List[Box] = []
    for key in sorted(groups):
        run = sorted(groups[key], key=lambda b: b.lower[axis])
        current = run[0]
        for b in run[1:]:
            if math.isclose(b.lower[axis], current.upper[axis], abs_tol=1e-12):
                upper = list(current.upper)
                upper[axis] = b.upper[axis]
                current = Box(current.lower, tuple(upper))
            else:
                out.append(current)
                current = b
        out.append(current)
    return out


def merge_boxes(boxes: Sequence[Box]) -> List[Box]:
    """면을 공유하고 나머지 축 범위가 같은 상자를 더 이상 줄지 않을 때까지 합친다."""
    current = list(boxes)
    if not current:
        return []
    n = len(current[0].lower)
    while True:
        before = len(current)
        for axis in range(n):
            current = _merge_along(current, axis)
        if len(current) == before:
            break
    return sorted(current, key=lambda b: (b.lower, b.upper))


# ──────────────────────────────────────────────────────────────────────────────
# 단위 입방체의 세포 복합체 (상대: 출구 면 합집합)
# ──────────────────────────────────────────────────────────────────────────────
_CHOICES = ("l", "u", "f")  # 하단 면 / 상단 면 / 전체 구간


def _cell_label(cell: Tuple[str, ...]) -> str:
    return "".join({"l": "0", "u": "1", "f": "I"}[c] for c in cell)


def _cell_boundary(cell: Tuple[str, ...]) -> List[Tuple[int, Tuple[str, ...]]]:
    """∂(I_{a_0} × … ) = Σ_j (−1)^j (a_j 을 상단으로 − a_j 을 하단으로)."""
    out = []
    full = [i for i, c in enumerate(cell) if c == "f"]
    for j, axis in enumerate(full):
        sign = -1 if j % 2 else 1
        for side, s in (("u", sign), ("l", -sign)):
            face = list(cell)
            face[axis] = side
            out.append((s, tuple(face)))
    return out


def relative_cube_complex(n: int, exits: Set[Tuple[int, str]]) -> GradedComplex:
    """
    C_*(Iⁿ, E): E = 출구 면들의 합집합. exits 원소는 (축, "l"|"u").
    세포가 E 에 속함 ⇔ 어떤 출구 면 (축 i, 쪽 s) 에 대해 cell[i] == s.
    """

    def in_exit(cell: Tuple[str, ...]) -> bool:
        return any(cell[i] == s for i, s in exits)

    cells = [c for c in itertools.product(_CHOICES, repeat=n) if not in_exit(c)]
    by_degree: Dict[int, List[Tuple[str, ...]]] = {}
    for c in cells:
        by_degree.setdefault(sum(1 for x in c if x == "f"), []).append(c)
    gens = {k: tuple(_cell_label(c) for c in v) for k, v in sorted(by_degree.items())}
    diffs: Dict[int, IntMatrix] = {}
    for k, cs in by_degree.items():
        below = by_degree.get(k - 1, [])
        if not below:
            continue
        index = {c: i for i, c in enumerate(below)}
        rows = [[0] * len(cs) for _ in below]
        for j, c in enumerate(cs):
            for s, face in _cell_boundary(c):
                if face in index:
                    rows[index[face]][j] += s
        diffs[k] = IntMatrix.from_rows(rows, cols=len(cs))
    return GradedComplex(gens, diffs)
