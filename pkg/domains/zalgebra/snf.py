from __future__ import annotations

from dataclasses import dataclass
from typing import List

from .matrices import IntMatrix


@dataclass(frozen=True)
class SmithForm:
    """
    A = U·D·V,  L·A·R = D  (L = U⁻¹, R = V⁻¹). 모두 유니모듈러.
    invariant_factors: D 의 0 아닌 대각 원소 (d_1 | d_2 | …)
    """

    U: IntMatrix
    D: IntMatrix
    V: IntMatrix
    L: IntMatrix
    R: IntMatrix
    invariant_factors: tuple

    @property
    def rank(self) -> int:
        return len(self.invariant_factors)


class _Reducer:
    """행/열 기본연산을 D 와 네 개의 변환행렬에 동시에 적용."""

    def __init__(self, a: List[List[int]], m: int, n: int) -> None:
        self.d = a
        self.m, self.n = m, n
        self.L = [[int(i == j) for j in range(m)] for i in range(m)]
        self.Linv = [[int(i == j) for j in range(m)] for i in range(m)]
        self.R = [[int(i == j) for j in range(n)] for i in range(n)]
        self.Rinv = [[int(i == j) for j in range(n)] for i in range(n)]

    # 행 연산: D ← E·D, L ← E·L, Linv ← Linv·E⁻¹
    def swap_rows(self, i: int, j: int) -> None:
        if i == j:
            return
        for mat in (self.d, self.L):
            mat[i], mat[j] = mat[j], mat[i]
        for row in self.Linv:
            row[i], row[j] = row[j], row[i]

    def add_row(self, target: int, source: int, c: int) -> None:
        """row_target += c·row_source"""
        if c == 0:
            return
        for mat in (self.d, self.L):
            t, s = mat[target], mat[source]
            for k in range(len(t)):
                t[k] += c * s[k]
        for row in self.Linv:
            row[source] -= c * row[target]

    def negate_row(self, i: int) -> None:
        for mat in (self.d, self.L):
            mat[i] = [-v for v in mat[i]]
        for row in self.Linv:
            row[i] = -row[i]

    # 열 연산: D ← D·F, R ← R·F, Rinv ← F⁻¹·Rinv
    def swap_cols(self, i: int, j: int) -> None:
        if i == j:
            return
        for mat in (self.d, self.R):
            for row in mat:
                row[i], row[j] = row[j], row[i]
        self.Rinv[i], self.Rinv[j] = self.Rinv[j], self.Rinv[i]

    def add_col(self, target: int, source: int, c: int) -> None:
        """col_target += c·col_source"""
        if c == 0:
            return
        for mat in (self.d, self.R):
            for row in mat:
                row[target] += c * row[source]
        t, s = self.Rinv[source], self.Rinv[target]
        for k in range(len(t)):
            t[k] -= c * s[k]

    def reduce(self) -> List[int]:
        d, m, n = self.d, self.m, self.n
        factors: List[int] = []
        t = 0
        while t < min(m, n):
            pivot = self._smallest(t)
            if pivot is None:
                break
            pi, pj = pivot
            self.swap_rows(t, pi)
            self.swap_cols(t, pj)
            while True:
                done = True
                for i in range(t + 1, m):
                    if d[i][t]:
                        q = d[i][t] // d[t][t]
                        self.add_row(i, t, -q)
                        if d[i][t]:
                            done = False
                for j in range(t + 1, n):
                    if d[t][j]:
                        q = d[t][j] // d[t][t]
                        self.add_col(j, t, -q)
                        if d[t][j]:
                            done = False
                if not done:
                    # 나머지가 남았으면 더 작은 피벗으로 교체 후 반복
                    pi, pj = self._smallest_in_cross(t)
                    self.swap_rows(t, pi)
                    self.swap_cols(t, pj)
                    continue
                # 나머지 부분행렬이 피벗으로 나누어떨어지는지 (약수 사슬)
                bad = next(
                    ((i, j) for i in range(t + 1, m) for j in range(t + 1, n) if d[i][j] % d[t][t]),
                    None,
                )
                if bad is None:
                    break
                self.add_row(t, bad[0], 1)
            if d[t][t] < 0:
                self.negate_row(t)
            factors.append(d[t][t])
            t += 1
        return factors

    def _smallest(self, t: int):
        best = None
        for i in range(t, self.m):
            for j in range(t, self.n):
                v = abs(self.d[i][j])
                if v and (best is None or v < best[0]):
                    best = (v, i, j)
        return None if best is None else (best[1], best[2])

    def _smallest_in_cross(self, t: int):
        best = (abs(self.d[t][t]), t, t)
        for i in range(t + 1, self.m):
            v = abs(self.d[i][t])
            if v and v < best[0]:
                best = (v, i, t)
        for j in range(t + 1, self.n):
            v = abs(self.d[t][j])
            if v and v < best[0]:
                best = (v, t, j)
        return best[1], best[2]


def smith_normal_form(A: IntMatrix) -> SmithForm:
    """정수 행렬의 스미스 표준형. 전역 함수 (오류 없음)."""
    m, n = A.shape
    red = _Reducer(A.to_rows(), m, n)
    factors = red.reduce()
    wrap_m = lambda rows: IntMatrix.from_rows(rows, cols=m)  # noqa: E731
    wrap_n = lambda rows: IntMatrix.from_rows(rows, cols=n)  # noqa: E731
    return SmithForm(
        U=wrap_m(red.Linv),
        D=IntMatrix.from_rows(red.d, cols=n),
        V=wrap_n(red.Rinv),
        L=wrap_m(red.L),
        R=wrap_n(red.R),
        invariant_factors=tuple(factors),
    )
