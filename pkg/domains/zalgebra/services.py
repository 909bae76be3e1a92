from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from .matrices import IntMatrix, block
from .models import (
    BoundarySquareError,
    ChainMapError,
    ChainMapReport,
    ComplexKind,
    GradedComplex,
    GradedIntMap,
    HomologyGroup,
    HomologyResult,
    ShapeMismatchError,
)
from .snf import SmithForm, smith_normal_form

logger = logging.getLogger(__name__)

__all__ = [
    "BoundarySquareError",
    "ChainMapError",
    "ShapeMismatchError",
    "smith_normal_form",
    "homology",
    "dualize",
    "regrade",
    "verify_chain_map",
    "equal_on_homology",
    "induced_on_homology",
    "is_quasi_isomorphism",
    "isomorphic_groups",
    "mapping_cone",
    "require_chain_map",
]


# ──────────────────────────────────────────────────────────────────────────────
# 차수별 사이클 기저 (SNF 좌표)
# ──────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class _CycleBasis:
    """
    V: 나가는 미분 d 의 SNF 에서 R⁻¹ (z 의 사이클 좌표 = (V z)[rank:])
    L: 들어오는 미분을 사이클 좌표로 쓴 행렬 B 의 SNF 에서 L (u = L w)
    factors: B 의 불변인자 e_1 | … | e_s
    """

    size: int
    rank: int
    V: IntMatrix
    L: IntMatrix
    factors: Tuple[int, ...]
    generators: Tuple[Tuple[int, ...], ...]  # Z·L⁻¹ 의 열들

    def coordinates(self, z: Sequence[int]) -> List[int]:
        w = self.V.apply(list(z))[self.rank :]
        return self.L.apply(w) if w else []

    def is_zero_class(self, z: Sequence[int]) -> bool:
        u = self.coordinates(z)
        for i, ui in enumerate(u):
            e = self.factors[i] if i < len(self.factors) else 0
            if (e == 0 and ui != 0) or (e > 0 and ui % e):
                return False
        return True

    def free_coordinates(self, z: Sequence[int]) -> List[int]:
        return self.coordinates(z)[len(self.factors) :]


def _cycle_basis(c: GradedComplex, k: int) -> _CycleBasis:
    n = c.rank(k)
    out: SmithForm = smith_normal_form(c.differential(k))
    r = out.rank
    z_cols = [out.R.column(j) for j in range(r, n)]  # ker d 의 기저
    # 들어오는 미분을 사이클 좌표로: (V·d_in)[r:, :]
    d_in = c.incoming(k)
    moved = out.V @ d_in
    B = IntMatrix.from_rows(moved.entries[r:], cols=d_in.cols)
    inner = smith_normal_form(B)
    # 생성원 = Z · L⁻¹ 의 열
    gens: List[Tuple[int, ...]] = []
    for j in range(len(z_cols)):
        coeffs = inner.U.column(j)
        gens.append(tuple(sum(coeffs[t] * z_cols[t][i] for t in range(len(z_cols))) for i in range(n)))
    return _CycleBasis(
        size=n,
        rank=r,
        V=out.V,
        L=inner.L,
        factors=inner.invariant_factors,
        generators=tuple(gens),
    )


def homology(c: GradedComplex) -> HomologyResult:
    """H_k = ker ∂_k / im ∂_{k+1} (공사슬이면 코호몰로지). ∂² ≠ 0 이면 거부."""
    c.check_square_zero()
    groups: Dict[int, HomologyGroup] = {}
    for k in c.degrees:
        basis = _cycle_basis(c, k)
        s = len(basis.factors)
        torsion = tuple(e for e in basis.factors if e > 1)
        groups[k] = HomologyGroup(
            betti=len(basis.generators) - s,
            torsion=torsion,
            free_generators=basis.generators[s:],
            torsion_generators=tuple(g for g, e in zip(basis.generators, basis.factors) if e > 1),
        )
    return HomologyResult(groups, c.kind)


# ──────────────────────────────────────────────────────────────────────────────
# 쌍대 / 재차수화
# ──────────────────────────────────────────────────────────────────────────────
def _dual_label(label: str) -> str:
    return label[:-1] if label.endswith("*") else f"{label}*"


def dualize(c: GradedComplex) -> GradedComplex:
    """δ^k = (∂_{k+1})ᵀ. 두 번 적용하면 원래 행렬로 돌아옴."""
    kind = ComplexKind.COCHAIN if c.kind is ComplexKind.CHAIN else ComplexKind.CHAIN
    gens = {k: tuple(_dual_label(x) for x in c.labels(k)) for k in c.degrees}
    diffs = {k: c.differential(k - c.step).T for k in c.degrees}
    return GradedComplex(gens, diffs, kind)


def regrade(c: GradedComplex, m: int) -> GradedComplex:
    """공사슬 C^* 를 사슬로: 차수 k ↔ 공사슬 차수 m−k, 미분은 δ^{m−k}."""
    if c.kind is not ComplexKind.COCHAIN:
        raise ShapeMismatchError("재차수화는 공사슬 복합체에만 적용", kind=c.kind.value)
    gens = {m - k: c.labels(k) for k in c.degrees}
    diffs = {m - k: c.differential(k) for k in c.degrees}
    return GradedComplex(gens, diffs, ComplexKind.CHAIN)


# ──────────────────────────────────────────────────────────────────────────────
# 사슬사상 검증 / 호몰로지 수준 비교
# ──────────────────────────────────────────────────────────────────────────────
def verify_chain_map(M: GradedIntMap) -> ChainMapReport:
    """∂^target·M = M·∂^source 를 정수 항등식으로 확인. 첫 실패 위치 반환."""
    src, tgt = M.source, M.target
    if src.kind is not tgt.kind:
        raise ShapeMismatchError("사슬/공사슬 종류가 다름", source=src.kind.value, target=tgt.kind.value)
    step = src.step
    for k in src.degrees:
        lhs = tgt.differential(k + M.shift) @ M.matrix(k)
        rhs = M.matrix(k + step) @ src.differential(k)
        if lhs.shape != rhs.shape:
            raise ShapeMismatchError("사슬사상 항등식 양변 모양 불일치", degree=k, left=lhs.shape, right=rhs.shape)
        diff = lhs.first_difference(rhs)
        if diff is not None:
            i, j = diff
            return ChainMapReport(False, k, diff, expected=lhs[i, j], actual=rhs[i, j])
    return ChainMapReport(True)


def require_chain_map(M: GradedIntMap, *, what: str = "map") -> None:
    report = verify_chain_map(M)
    if not report.holds:
        raise ChainMapError(
            f"{what} 가 사슬사상이 아님",
            degree=report.degree,
            entry=report.entry,
            expected=report.expected,
            actual=report.actual,
        )


def equal_on_homology(M1: GradedIntMap, M2: GradedIntMap) -> bool:
    """모든 H_k 에서 유도사상이 같은지. 차이의 상이 경계인지를 SNF 좌표로 판정."""
    require_chain_map(M1, what="M1")
    require_chain_map(M2, what="M2")
    diff = M1 - M2
    for k in M1.source.degrees:
        src = _cycle_basis(M1.source, k)
        tgt = _cycle_basis(M1.target, k + M1.shift) if M1.target.rank(k + M1.shift) else None
        mat = diff.matrix(k)
        for g, e in zip(src.generators, src.factors + (0,) * len(src.generators)):
            if e == 1:
                continue  # 자명한 류
            image = mat.apply(list(g))
            if tgt is None:
                continue
            if not tgt.is_zero_class(image):
                logger.debug(f"equal_on_homology: degree {k} differs on generator {g}")
                return False
    return True


def induced_on_homology(M: GradedIntMap) -> Dict[int, IntMatrix]:
    """자유 부분 좌표에서의 유도사상 행렬 (행: 타깃 자유 생성원, 열: 소스 자유 생성원)."""
    require_chain_map(M)
    out: Dict[int, IntMatrix] = {}
    for k in M.source.degrees:
        src = _cycle_basis(M.source, k)
        s = len(src.factors)
        free = src.generators[s:]
        tk = k + M.shift
        if M.target.rank(tk) == 0:
            out[k] = IntMatrix.zeros(0, len(free))
            continue
        tgt = _cycle_basis(M.target, tk)
        t_free = len(tgt.generators) - len(tgt.factors)
        cols = [tgt.free_coordinates(M.matrix(k).apply(list(g))) for g in free]
        rows = [[col[i] for col in cols] for i in range(t_free)]
        out[k] = IntMatrix.from_rows(rows, cols=len(free))
    return out


def mapping_cone(M: GradedIntMap) -> GradedComplex:
    """Cone_k = C_{k+σ}(src) ⊕ C_k(tgt), d(a, b) = (−∂a, M a + ∂b). σ 는 미분 방향."""
    if M.shift != 0:
        raise ShapeMismatchError("차수 0 사상만 원뿔 구성 가능", shift=M.shift)
    src, tgt = M.source, M.target
    s = src.step
    degrees = sorted({k - s for k in src.degrees} | set(tgt.degrees))
    gens = {k: src.labels(k + s) + tgt.labels(k) for k in degrees}
    diffs = {}
    for k in degrees:
        top = [-src.differential(k + s), IntMatrix.zeros(src.rank(k + 2 * s), tgt.rank(k))]
        bottom = [M.matrix(k + s), tgt.differential(k)]
        diffs[k] = block([top, bottom])
    return GradedComplex(gens, diffs, src.kind)


def is_quasi_isomorphism(M: GradedIntMap) -> bool:
    """원뿔이 비순환이면 호몰로지 동형 (꼬임까지 포함)."""
    require_chain_map(M)
    cone = homology(mapping_cone(M))
    return all(g.is_zero for g in cone.groups.values())


def isomorphic_groups(a: HomologyResult, b: HomologyResult, *, pairing=None) -> bool:
    """a 의 차수 k 와 b 의 차수 pairing(k) 의 군이 모두 같은지 (기본: 같은 차수)."""
    pair = pairing or (lambda k: k)
    if any(not a.group(k).isomorphic(b.group(pair(k))) for k in a.groups):
        return False
    covered = {pair(k) for k in a.groups}
    return all(g.is_zero for j, g in b.groups.items() if j not in covered)
