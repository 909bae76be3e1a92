from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Dict, Tuple, Union

import numpy as np

from shared.exceptions import McfkitError


class DomainError(McfkitError):
    """도메인 정의가 잘못됨 (차원 범위, 박스 경계 순서)"""

    stage = "exprfield.domain"


class DomainKind(str, Enum):
    TORUS = "torus"
    BOX = "box"


@dataclass(frozen=True)
class Domain:
    """
    평탄 토러스 T^n (주기 1) 또는 축정렬 박스. 1 ≤ n ≤ 3.
    - 토러스 좌표는 항상 [0,1) 로 환원
    - 박스는 고립 로직의 범위만 정하고, 식 자체는 박스 밖에서도 평가 가능
    """

    kind: DomainKind
    dimension: int
    bounds: Tuple[Tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not 1 <= self.dimension <= 3:
            raise DomainError("도메인 차원은 1..3", dimension=self.dimension)
        if len(self.bounds) != self.dimension:
            raise DomainError("경계 개수와 차원 불일치", dimension=self.dimension, bounds=len(self.bounds))
        for axis, (lo, hi) in enumerate(self.bounds):
            if not lo < hi:
                raise DomainError("박스 경계는 lo < hi 여야 함", axis=axis, lo=lo, hi=hi)

    @classmethod
    def torus(cls, dimension: int) -> "Domain":
        return cls(DomainKind.TORUS, dimension, tuple((0.0, 1.0) for _ in range(dimension)))

    @classmethod
    def box(cls, bounds) -> "Domain":
        b = tuple((float(lo), float(hi)) for lo, hi in bounds)
        return cls(DomainKind.BOX, len(b), b)

    @property
    def is_torus(self) -> bool:
        return self.kind is DomainKind.TORUS

    @cached_property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])

    @property
    def scale(self) -> float:
        return float(np.max(self.upper - self.lower))

    @property
    def euler_characteristic(self) -> int:
        return 0 if self.is_torus else 1

    def reduce(self, p) -> np.ndarray:
        q = np.asarray(p, dtype=float)
        if not self.is_torus:
            return q.copy()
        r = np.mod(q, 1.0)
        # -1e-17 mod 1 == 1.0 이 되는 경우 보정
        return np.where(r >= 1.0, 0.0, r)

    def displacement(self, p, q) -> np.ndarray:
        """p 에서 q 로 가는 변위. 토러스는 최소 이미지."""
        d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
        if self.is_torus:
            d = d - np.round(d)
        return d

    def distance(self, p, q) -> float:
        return float(np.linalg.norm(self.displacement(p, q)))

    def contains(self, p, tol: float = 0.0) -> bool:
        if self.is_torus:
            return True
        q = np.asarray(p, dtype=float)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def grid(self, per_axis: int) -> np.ndarray:
        """균일 격자 (토러스는 끝점 제외, 박스는 양 끝 포함). shape (per_axis**n, n)"""
        axes = []
        for lo, hi in self.bounds:
            if self.is_torus:
                axes.append(np.arange(per_axis) / per_axis)
            else:
                axes.append(np.linspace(lo, hi, per_axis))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_dict(self) -> Dict[str, Any]:
        if self.is_torus:
            return {"kind": self.kind.value, "dimension": self.dimension}
        return {"kind": self.kind.value, "bounds": [list(b) for b in self.bounds]}


# ──────────────────────────────────────────────────────────────────────────────
# 식 AST
# ──────────────────────────────────────────────────────────────────────────────
UNARY_FUNCTIONS = ("sin", "cos", "exp", "tanh")
BINARY_OPS = ("+", "-", "*", "/")


@dataclass(frozen=True)
class Node:
    """
    op: "const" | "var" | "+" | "-" | "*" | "/" | "^" | "neg" | sin/cos/exp/tanh
    value: const 값, var 인덱스(0부터), ^ 의 정수 지수
    """

    op: str
    args: Tuple["Node", ...] = ()
    value: Union[float, int] = 0


def render(node: Node) -> str:
    """AST → 다시 파싱 가능한 텍스트 (괄호는 보수적으로)."""
    op = node.op
    if op == "const":
        return repr(float(node.value))
    if op == "var":
        return f"x{int(node.value) + 1}"
    if op == "neg":
        return f"(-{render(node.args[0])})"
    if op == "^":
        return f"({render(node.args[0])})^{int(node.value)}"
    if op in BINARY_OPS:
        a, b = node.args
        return f"({render(a)} {op} {render(b)})"
    return f"{op}({render(node.args[0])})"


@dataclass(frozen=True)
class Expression:
    text: str
    dimension: int
    root: Node = field(repr=False)

    def __str__(self) -> str:
        return self.text

    @cached_property
    def program(self):
        # 지연 import (jets → models 순환 방지)
        from .jets import compile_program

        return compile_program(self.root, self.dimension)


@dataclass(frozen=True)
class ScalarField:
    """도메인 위의 스칼라장 f. 토러스에서는 평가 전에 좌표를 환원."""

    domain: Domain
    expression: Expression

    def __post_init__(self) -> None:
        if self.expression.dimension != self.domain.dimension:
            raise DomainError(
                "식 차원과 도메인 차원 불일치",
                expression=self.expression.text,
                dimension=self.domain.dimension,
            )

    @property
    def text(self) -> str:
        return self.expression.text

    def value(self, p) -> float:
        return self.expression.program.value(self.domain.reduce(p))

    def gradient(self, p) -> np.ndarray:
        return self.expression.program.jet1(self.domain.reduce(p))[1]

    def jet2(self, p):
        return self.expression.program.jet2(self.domain.reduce(p))

    def values(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.domain.is_torus:
            pts = self.domain.reduce(pts)
        return self.expression.program.many(pts)


@dataclass(frozen=True)
class SmoothMap:
    source: Domain
    target: Domain
    components: Tuple[Expression, ...]

    def __post_init__(self) -> None:
        if len(self.components) != self.target.dimension:
            raise DomainError(
                "성분 개수는 타깃 차원과 같아야 함",
                components=len(self.components),
                target_dimension=self.target.dimension,
            )
        for c in self.components:
            if c.dimension != self.source.dimension:
                raise DomainError("성분 식 차원과 소스 차원 불일치", component=c.text)

    @property
    def texts(self) -> Tuple[str, ...]:
        return tuple(c.text for c in self.components)
