from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from domains.flowcore.models import MorseDatum
from domains.moduli.models import CountTable
from domains.zalgebra.models import GradedIntMap, HomologyResult
from shared.exceptions import McfkitError


class DualityError(McfkitError):
    """쌍대 항등식 (PD 사슬사상, 개수 대칭) 이 정수 수준에서 깨짐: 부호 규약 버그"""

    stage = "duality"


@dataclass(frozen=True, eq=False)
class DualDatum:
    """
    Q̂ = (M, −f, g, ô). 임계점 좌표는 그대로, 지표는 m − k,
    쌍대 불안정 프레임 = 원래 안정 프레임, ô 는 [E^u ⊕ Ê^u] 가 주변 방향과 맞도록 정한다.
    signs: 라벨 → ô(x)·o(x)
    """

    base: MorseDatum
    dual: MorseDatum
    signs: Dict[str, int] = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def to_dict(self) -> Dict[str, Any]:
        return {
            "field": self.dual.field.text,
            "indices": {c.label: c.index for c in self.dual.critical_points},
            "orientations": {c.label: c.orientation for c in self.dual.critical_points},
            "signs": dict(sorted(self.signs.items())),
        }


@dataclass(frozen=True)
class SymmetryMismatch:
    x: str
    y: str
    base: int
    dual: int

    def to_dict(self) -> Dict[str, Any]:
        return {"x": self.x, "y": self.y, "n": self.base, "n_dual": self.dual}


@dataclass
class CountSymmetryReport:
    """모든 |x| − |y| = 1 쌍에 대해 n(x, y; Q) 와 n(y, x; Q̂) 를 따로 세어 비교."""

    pairs: List[Tuple[str, str, int, int]]
    base_counts: CountTable
    dual_counts: CountTable
    mismatches: List[SymmetryMismatch] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return not self.mismatches

    def to_dict(self) -> Dict[str, Any]:
        return {
            "holds": self.holds,
            "pairs": [{"x": x, "y": y, "n": n, "n_dual": nd} for x, y, n, nd in self.pairs],
            "mismatches": [m.to_dict() for m in self.mismatches],
        }


@dataclass
class PoincareDualityReport:
    dual: DualDatum
    pd: GradedIntMap
    homology: HomologyResult
    cohomology: HomologyResult
    quasi_isomorphism: bool
    groups_match: bool

    @property
    def holds(self) -> bool:
        return self.quasi_isomorphism and self.groups_match

    def to_dict(self) -> Dict[str, Any]:
        m = self.dual.dimension
        return {
            "holds": self.holds,
            "dual": self.dual.to_dict(),
            "pd": self.pd.to_dict(),
            "quasi_isomorphism": self.quasi_isomorphism,
            "groups_match": self.groups_match,
            "homology": self.homology.to_dict(),
            "cohomology": self.cohomology.to_dict(),
            "pairing": {str(k): m - k for k in sorted(self.homology.groups)},
        }


@dataclass
class ConleyDualityReport:
    """HI_k(S, φ) 와 HI^{m−k}(S, φ⁻¹) 비교. local 은 conley.models.LocalHomology."""

    local: Any
    duality: PoincareDualityReport
    reverse_lyapunov: Optional[Any] = None
    notes: List[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        lyap = self.reverse_lyapunov is None or self.reverse_lyapunov.certified
        return lyap and self.duality.holds

    def to_dict(self) -> Dict[str, Any]:
        return {
            "holds": self.holds,
            "forward": self.local.homology.to_dict(),
            "duality": self.duality.to_dict(),
            "reverse_lyapunov": self.reverse_lyapunov.to_dict() if self.reverse_lyapunov else None,
            "notes": self.notes,
        }


@dataclass
class ContinuationDualityReport:
    """PD_B∘Φ 와 (Φ̂)ᵀ∘PD_A 를 호몰로지에서 비교."""

    phi: GradedIntMap
    phi_dual: GradedIntMap
    left: GradedIntMap
    right: GradedIntMap
    commutes: bool

    @property
    def holds(self) -> bool:
        return self.commutes

    def to_dict(self) -> Dict[str, Any]:
        return {
            "holds": self.holds,
            "phi": self.phi.to_dict(),
            "phi_dual": self.phi_dual.to_dict(),
            "pd_after_phi": self.left.to_dict(),
            "phi_dual_after_pd": self.right.to_dict(),
        }
