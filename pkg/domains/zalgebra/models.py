from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from shared.exceptions import McfkitError

from .matrices import IntMatrix


class ShapeMismatchError(McfkitError):
    """행렬 모양이 생성원 개수와 맞지 않음"""

    stage = "zalgebra.shape"


class BoundarySquareError(McfkitError):
    """∂∘∂ ≠ 0 (연결궤도 누락 등을 의심)"""

    stage = "zalgebra.boundary"


class ChainMapError(McfkitError):
    """∂M = M∂ 가 정수 항등식으로 성립하지 않음"""

    stage = "zalgebra.chain_map"


class ComplexKind(str, Enum):
    CHAIN = "chain"
    COCHAIN = "cochain"

    @property
    def step(self) -> int:
        # 미분이 차수를 옮기는 방향
        return -1 if self is ComplexKind.CHAIN else 1


_SUPERSCRIPT = str.maketrans("0123456789", "⁰¹²³⁴⁵⁶⁷⁸⁹")


@dataclass(frozen=True)
class GradedComplex:
    """
    generators: 차수별 생성원 라벨 (순서 = 행렬 좌표 순서)
    differentials: 차수 k 에서 나가는 미분 (사슬: k→k−1, 공사슬: k→k+1)
    """

    generators: Dict[int, Tuple[str, ...]]
    differentials: Dict[int, IntMatrix] = field(default_factory=dict)
    kind: ComplexKind = ComplexKind.CHAIN

    def __post_init__(self) -> None:
        for k, d in self.differentials.items():
            expected = (self.rank(k + self.kind.step), self.rank(k))
            if d.shape != expected:
                raise ShapeMismatchError(
                    "미분 행렬 모양이 생성원 개수와 다름",
                    degree=k,
                    shape=d.shape,
                    expected=expected,
                )

    @property
    def step(self) -> int:
        return self.kind.step

    @property
    def degrees(self) -> List[int]:
        return sorted(k for k, gens in self.generators.items() if gens)

    def rank(self, k: int) -> int:
        return len(self.generators.get(k, ()))

    def labels(self, k: int) -> Tuple[str, ...]:
        return tuple(self.generators.get(k, ()))

    def differential(self, k: int) -> IntMatrix:
        d = self.differentials.get(k)
        if d is None:
            return IntMatrix.zeros(self.rank(k + self.step), self.rank(k))
        return d

    def incoming(self, k: int) -> IntMatrix:
        """차수 k 로 들어오는 미분."""
        return self.differential(k - self.step)

    def square_zero_defect(self) -> Optional[Tuple[int, int, int, int]]:
        """(차수, 행, 열, 값): ∂∘∂ 의 첫 번째 0 아닌 성분."""
        for k in self.degrees:
            prod = self.differential(k + self.step) @ self.differential(k)
            for i, row in enumerate(prod.entries):
                for j, v in enumerate(row):
                    if v:
                        return (k, i, j, v)
        return None

    def check_square_zero(self) -> None:
        defect = self.square_zero_defect()
        if defect is not None:
            k, i, j, v = defect
            raise BoundarySquareError(
                "∂∘∂ ≠ 0",
                degree=k,
                source=self.labels(k)[j],
                target=self.labels(k + 2 * self.step)[i],
                value=v,
            )

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * self.rank(k) for k in self.degrees)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "degrees": {
                str(k): {
                    "generators": list(self.labels(k)),
                    "differential": self.differential(k).to_rows(),
                }
                for k in self.degrees
            },
        }


@dataclass(frozen=True)
class GradedIntMap:
    """소스 차수 k → 타깃 차수 k+shift 정수 행렬들."""

    source: GradedComplex
    target: GradedComplex
    matrices: Dict[int, IntMatrix]
    shift: int = 0

    def __post_init__(self) -> None:
        for k, m in self.matrices.items():
            expected = (self.target.rank(k + self.shift), self.source.rank(k))
            if m.shape != expected:
                raise ShapeMismatchError("사슬사상 행렬 모양 불일치", degree=k, shape=m.shape, expected=expected)

    def matrix(self, k: int) -> IntMatrix:
        m = self.matrices.get(k)
        if m is None:
            return IntMatrix.zeros(self.target.rank(k + self.shift), self.source.rank(k))
        return m

    @classmethod
    def identity(cls, c: GradedComplex) -> "GradedIntMap":
        return cls(c, c, {k: IntMatrix.identity(c.rank(k)) for k in c.degrees})

    @classmethod
    def zero(cls, source: GradedComplex, target: GradedComplex, shift: int = 0) -> "GradedIntMap":
        return cls(source, target, {}, shift)

    def compose(self, first: "GradedIntMap") -> "GradedIntMap":
        """self ∘ first"""
        mats = {k: self.matrix(k + first.shift) @ first.matrix(k) for k in first.source.degrees}
        return GradedIntMap(first.source, self.target, mats, first.shift + self.shift)

    def __sub__(self, other: "GradedIntMap") -> "GradedIntMap":
        if other.shift != self.shift:
            raise ShapeMismatchError("차수 이동이 다른 사상끼리 뺄 수 없음", left=self.shift, right=other.shift)
        return GradedIntMap(
            self.source,
            self.target,
            {k: self.matrix(k) - other.matrix(k) for k in self.source.degrees},
            self.shift,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "shift": self.shift,
            "matrices": {str(k): self.matrix(k).to_rows() for k in self.source.degrees},
            "source_generators": {str(k): list(self.source.labels(k)) for k in self.source.degrees},
            "target_generators": {str(k): list(self.target.labels(k)) for k in self.target.degrees},
        }


@dataclass(frozen=True)
class ChainMapReport:
    holds: bool
    degree: Optional[int] = None
    entry: Optional[Tuple[int, int]] = None
    expected: Optional[int] = None
    actual: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "holds": self.holds,
            "degree": self.degree,
            "entry": list(self.entry) if self.entry else None,
            "expected": self.expected,
            "actual": self.actual,
        }


@dataclass(frozen=True)
class HomologyGroup:
    betti: int
    torsion: Tuple[int, ...] = ()
    free_generators: Tuple[Tuple[int, ...], ...] = ()
    torsion_generators: Tuple[Tuple[int, ...], ...] = ()

    @property
    def is_zero(self) -> bool:
        return self.betti == 0 and not self.torsion

    def describe(self) -> str:
        parts: List[str] = []
        if self.betti == 1:
            parts.append("Z")
        elif self.betti > 1:
            parts.append("Z" + str(self.betti).translate(_SUPERSCRIPT))
        parts.extend(f"Z/{t}" for t in self.torsion)
        return " ⊕ ".join(parts) if parts else "0"

    def isomorphic(self, other: "HomologyGroup") -> bool:
        return self.betti == other.betti and self.torsion == other.torsion


@dataclass(frozen=True)
class HomologyResult:
    groups: Dict[int, HomologyGroup]
    kind: ComplexKind = ComplexKind.CHAIN

    def group(self, k: int) -> HomologyGroup:
        return self.groups.get(k, HomologyGroup(0))

    def betti_numbers(self, top: Optional[int] = None) -> Tuple[int, ...]:
        hi = top if top is not None else max(self.groups, default=-1)
        return tuple(self.group(k).betti for k in range(hi + 1))

    def is_torsion_free(self) -> bool:
        return all(not g.torsion for g in self.groups.values())

    def describe(self) -> str:
        mark = "H_" if self.kind is ComplexKind.CHAIN else "H^"
        nonzero = [k for k in sorted(self.groups) if not self.groups[k].is_zero]
        if not nonzero:
            return "0"
        return ", ".join(f"{mark}{k}={self.groups[k].describe()}" for k in nonzero)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "groups": {
                str(k): {
                    "betti": g.betti,
                    "torsion": list(g.torsion),
                    "describe": g.describe(),
                    "free_generators": [list(v) for v in g.free_generators],
                }
                for k, g in sorted(self.groups.items())
            },
            "summary": self.describe(),
        }
