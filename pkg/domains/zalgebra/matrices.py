from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

Rows = Tuple[Tuple[int, ...], ...]


@dataclass(frozen=True)
class IntMatrix:
    """
    임의 정밀도 정수 행렬. 0행/0열도 모양을 잃지 않도록 rows/cols 를 따로 보관.
    """

    rows: int
    cols: int
    entries: Rows

    def __post_init__(self) -> None:
        if len(self.entries) != self.rows or any(len(r) != self.cols for r in self.entries):
            raise ValueError(f"IntMatrix 모양 불일치: {self.rows}x{self.cols}")

    # ── 생성 ────────────────────────────────────────────────────────────────
    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], cols: int | None = None) -> "IntMatrix":
        data = tuple(tuple(int(v) for v in r) for r in rows)
        ncols = cols if cols is not None else (len(data[0]) if data else 0)
        return cls(len(data), ncols, data)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "IntMatrix":
        return cls(rows, cols, tuple((0,) * cols for _ in range(rows)))

    @classmethod
    def identity(cls, n: int) -> "IntMatrix":
        return cls(n, n, tuple(tuple(1 if i == j else 0 for j in range(n)) for i in range(n)))

    @classmethod
    def diagonal(cls, values: Sequence[int]) -> "IntMatrix":
        n = len(values)
        return cls(n, n, tuple(tuple(int(values[i]) if i == j else 0 for j in range(n)) for i in range(n)))

    # ── 접근 ────────────────────────────────────────────────────────────────
    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    def __getitem__(self, ij: Tuple[int, int]) -> int:
        i, j = ij
        return self.entries[i][j]

    def column(self, j: int) -> List[int]:
        return [r[j] for r in self.entries]

    def to_rows(self) -> List[List[int]]:
        return [list(r) for r in self.entries]

    def is_zero(self) -> bool:
        return all(v == 0 for r in self.entries for v in r)

    # ── 연산 ────────────────────────────────────────────────────────────────
    @property
    def T(self) -> "IntMatrix":
        return IntMatrix(self.cols, self.rows, tuple(zip(*self.entries)) if self.rows else tuple(() for _ in range(self.cols)))

    def __matmul__(self, other: "IntMatrix") -> "IntMatrix":
        if self.cols != other.rows:
            raise ValueError(f"곱셈 모양 불일치: {self.shape} @ {other.shape}")
        cols = [other.column(j) for j in range(other.cols)]
        data = tuple(tuple(sum(a * b for a, b in zip(r, c)) for c in cols) for r in self.entries)
        return IntMatrix(self.rows, other.cols, data)

    def apply(self, v: Sequence[int]) -> List[int]:
        if len(v) != self.cols:
            raise ValueError(f"벡터 길이 불일치: {len(v)} != {self.cols}")
        return [sum(a * b for a, b in zip(r, v)) for r in self.entries]

    def __add__(self, other: "IntMatrix") -> "IntMatrix":
        self._same_shape(other)
        return IntMatrix(self.rows, self.cols, tuple(tuple(a + b for a, b in zip(r, s)) for r, s in zip(self.entries, other.entries)))

    def __sub__(self, other: "IntMatrix") -> "IntMatrix":
        self._same_shape(other)
        return IntMatrix(self.rows, self.cols, tuple(tuple(a - b for a, b in zip(r, s)) for r, s in zip(self.entries, other.entries)))

    def __neg__(self) -> "IntMatrix":
        return IntMatrix(self.rows, self.cols, tuple(tuple(-a for a in r) for r in self.entries))

    def scaled_rows(self, signs: Sequence[int]) -> "IntMatrix":
        return IntMatrix(self.rows, self.cols, tuple(tuple(s * a for a in r) for s, r in zip(signs, self.entries)))

    def scaled_cols(self, signs: Sequence[int]) -> "IntMatrix":
        return IntMatrix(self.rows, self.cols, tuple(tuple(s * a for s, a in zip(signs, r)) for r in self.entries))

    def _same_shape(self, other: "IntMatrix") -> None:
        if self.shape != other.shape:
            raise ValueError(f"모양 불일치: {self.shape} vs {other.shape}")

    def first_difference(self, other: "IntMatrix") -> Tuple[int, int] | None:
        self._same_shape(other)
        for i, (r, s) in enumerate(zip(self.entries, other.entries)):
            for j, (a, b) in enumerate(zip(r, s)):
                if a != b:
                    return (i, j)
        return None

    def det(self) -> int:
        """Bareiss 소거 (정수 연산만)."""
        if self.rows != self.cols:
            raise ValueError("정사각 행렬만 행렬식 계산 가능")
        n = self.rows
        if n == 0:
            return 1
        a = self.to_rows()
        sign, prev = 1, 1
        for k in range(n - 1):
            if a[k][k] == 0:
                swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
                if swap is None:
                    return 0
                a[k], a[swap] = a[swap], a[k]
                sign = -sign
            for i in range(k + 1, n):
                for j in range(k + 1, n):
                    a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
            prev = a[k][k]
        return sign * a[n - 1][n - 1]


def block(rows_of_blocks: Iterable[Sequence[IntMatrix]]) -> IntMatrix:
    """블록 행렬 조립 (각 블록 행의 높이, 블록 열의 폭이 맞아야 함)."""
    grid = [list(r) for r in rows_of_blocks]
    out: List[List[int]] = []
    for brow in grid:
        height = brow[0].rows
        for i in range(height):
            line: List[int] = []
            for b in brow:
                line.extend(b.entries[i])
            out.append(line)
    cols = sum(b.cols for b in grid[0]) if grid else 0
    return IntMatrix.from_rows(out, cols=cols)
