from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from domains.exprfield.models import Domain
from domains.flowcore.models import MorseDatum, Region
from domains.moduli.models import ConnectionCount
from domains.zalgebra.matrices import IntMatrix
from domains.zalgebra.models import GradedIntMap
from shared.exceptions import McfkitError

from .maps import PointMap


class PerturbationError(McfkitError):
    """허용 횟수 안에 횡단 (및 고립 유지) 섭동을 찾지 못함"""

    stage = "inducedmaps.perturb"


class HomotopyEndpointError(McfkitError):
    """호모토피 족의 λ=0, 1 이 주어진 h0, h1 과 다름"""

    stage = "inducedmaps.homotopy"


# ──────────────────────────────────────────────────────────────────────────────
# 평행이동 섭동 h_ε(p) = h(p) + ε·v
# ──────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class ShiftedMap:
    base: PointMap
    shift: Tuple[float, ...]

    @property
    def source(self) -> Domain:
        return self.base.source

    @property
    def target(self) -> Domain:
        return self.base.target

    def _move(self, q: np.ndarray) -> np.ndarray:
        return self.target.reduce(np.asarray(q, dtype=float) + np.array(self.shift))

    def evaluate(self, p) -> Tuple[np.ndarray, np.ndarray]:
        q, J = self.base.evaluate(p)
        return self._move(q), J

    def image(self, p) -> np.ndarray:
        return self._move(self.base.image(p))

    def images(self, points: np.ndarray) -> np.ndarray:
        return self.target.reduce(self.base.images(points) + np.array(self.shift)[None, :])

    def preimages(self, y, *, seeds_per_axis: int, region: Optional[Region] = None) -> List[np.ndarray]:
        back = self.target.reduce(np.asarray(y, dtype=float) - np.array(self.shift))
        return self.base.preimages(back, seeds_per_axis=seeds_per_axis, region=region)

    def describe(self) -> str:
        return f"{self.base.describe()} + {list(self.shift)}"


@dataclass
class MapModuli:
    """W_h(x, y) 의 부호 있는 개수 전체와 그로부터 만든 사슬사상."""

    description: str
    source: MorseDatum
    target: MorseDatum
    chain_map: GradedIntMap
    counts: List[ConnectionCount] = field(default_factory=list)

    def count(self, x: str, y: str) -> int:
        for c in self.counts:
            if c.x.label == x and c.y.label == y:
                return c.n
        return 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "map": self.description,
            "chain_map": self.chain_map.to_dict(),
            "counts": [c.to_dict() for c in self.counts if c.witnesses or c.warnings],
        }


@dataclass
class TransversePerturbation:
    map: PointMap
    epsilon: float
    direction: Tuple[float, ...]
    attempt: int
    moduli: MapModuli
    rejected: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "direction": list(self.direction),
            "attempt": self.attempt,
            "rejected": self.rejected,
            "moduli": self.moduli.to_dict(),
        }


def _rows(m: Dict[int, IntMatrix]) -> Dict[str, List[List[int]]]:
    return {str(k): v.to_rows() for k, v in m.items()}


@dataclass
class FunctorialityReport:
    """h_CB∘ψ_R∘h_BA, h_CB∘h_BA, h_CB_*·h_BA_* 의 호몰로지 수준 비교."""

    R: float
    product: GradedIntMap
    composite: GradedIntMap
    composite_zero: GradedIntMap
    composite_agrees: bool
    composite_zero_agrees: bool
    isolation: Optional[Any] = None

    @property
    def isolation_holds(self) -> bool:
        return self.isolation is None or self.isolation.holds

    @property
    def holds(self) -> bool:
        return self.isolation_holds and self.composite_agrees and self.composite_zero_agrees

    def to_dict(self) -> Dict[str, Any]:
        return {
            "R": self.R,
            "holds": self.holds,
            "functoriality_hypothesis": "ok" if self.isolation_holds else "functoriality hypothesis violated",
            "product": self.product.to_dict(),
            "composite": self.composite.to_dict(),
            "composite_zero": self.composite_zero.to_dict(),
            "composite_agrees": self.composite_agrees,
            "composite_zero_agrees": self.composite_zero_agrees,
            "isolation": self.isolation.to_dict() if self.isolation is not None else None,
        }


@dataclass
class HomotopyReport:
    equal_on_homology: bool
    h0: Dict[int, IntMatrix]
    h1: Dict[int, IntMatrix]
    isolation: Optional[Any] = None
    via_continuation: bool = False

    @property
    def holds(self) -> bool:
        return self.equal_on_homology and (self.isolation is None or self.isolation.holds)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "holds": self.holds,
            "equal_on_homology": self.equal_on_homology,
            "via_continuation": self.via_continuation,
            "h0_on_homology": _rows(self.h0),
            "h1_on_homology": _rows(self.h1),
            "isolation": self.isolation.to_dict() if self.isolation is not None else None,
        }
