from __future__ import annotations

from typing import Dict, Sequence, Tuple

import numpy as np

from .jets import EvaluationDomainError
from .models import Domain, DomainError, Expression, Node, ScalarField, SmoothMap, render
from .parser import (
    ArityError,
    ExpressionSyntaxError,
    UnknownIdentifierError,
    VariableIndexError,
    parse_expression,
)

__all__ = [
    "ArityError",
    "EvaluationDomainError",
    "ExpressionSyntaxError",
    "UnknownIdentifierError",
    "VariableIndexError",
    "parse",
    "eval_jet2",
    "eval_map_jet",
    "make_field",
    "make_map",
    "substitute",
    "compose_field",
]


def parse(text: str, dimension: int) -> Expression:
    """x1..xn 문법의 식을 파싱. 실패 시 position 을 담은 오류."""
    return parse_expression(text, dimension)


def eval_jet2(e: Expression, p) -> Tuple[float, np.ndarray, np.ndarray]:
    """(값, 그래디언트, 헤시안). 헤시안은 상삼각에서 펼쳐 정확히 대칭."""
    return e.program.jet2(np.asarray(p, dtype=float))


def eval_map_jet(m: SmoothMap, p) -> Tuple[np.ndarray, np.ndarray]:
    """
    (상, 야코비안). 토러스 타깃이면 상만 mod 1 로 환원하고 야코비안은 그대로.
    """
    x = m.source.reduce(p)
    values = np.empty(len(m.components))
    jac = np.empty((len(m.components), m.source.dimension))
    for row, comp in enumerate(m.components):
        v, g = comp.program.jet1(x)
        values[row] = v
        jac[row] = g
    return m.target.reduce(values), jac


def map_image(m: SmoothMap, p) -> np.ndarray:
    x = m.source.reduce(p)
    return m.target.reduce(np.array([c.program.value(x) for c in m.components]))


def map_images(m: SmoothMap, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if m.source.is_torus:
        pts = m.source.reduce(pts)
    out = np.stack([c.program.many(pts) for c in m.components], axis=1)
    return m.target.reduce(out) if m.target.is_torus else out


def make_field(domain: Domain, text: str) -> ScalarField:
    return ScalarField(domain, parse(text, domain.dimension))


def make_map(source: Domain, target: Domain, texts: Sequence[str]) -> SmoothMap:
    return SmoothMap(source, target, tuple(parse(t, source.dimension) for t in texts))


# ──────────────────────────────────────────────────────────────────────────────
# 치환 / 합성 (f∘h, 매개변수 고정)
# ──────────────────────────────────────────────────────────────────────────────
def _replace(node: Node, table: Dict[int, Node]) -> Node:
    if node.op == "var":
        return table.get(int(node.value), node)
    if not node.args:
        return node
    return Node(node.op, tuple(_replace(a, table) for a in node.args), node.value)


def substitute(e: Expression, replacements: Sequence[Node], dimension: int) -> Expression:
    """x_{i+1} 를 replacements[i] 로 치환한 새 식 (새 식의 변수 차원은 dimension)."""
    root = _replace(e.root, dict(enumerate(replacements)))
    # 렌더링 결과를 다시 파싱해 변수 차원 검증까지 한 번에
    return parse_expression(render(root), dimension)


def compose_field(f: ScalarField, h: SmoothMap) -> ScalarField:
    """f∘h 를 소스 도메인 위의 스칼라장으로. 토러스 타깃이면 f 가 주기적이어야 의미가 있음."""
    if f.domain != h.target:
        raise DomainError("f 의 도메인과 h 의 타깃이 달라 합성 불가", field=f.text)
    expr = substitute(f.expression, [c.root for c in h.components], h.source.dimension)
    return ScalarField(h.source, expr)


def fix_parameter(e: Expression, index: int, value: float, dimension: int) -> Expression:
    """마지막 매개변수(호모토피 λ 등)를 상수로 고정해 차원을 줄인 식."""
    reps = [Node("var", (), i) for i in range(index)]
    reps.append(Node("const", (), float(value)))
    reps.extend(Node("var", (), i) for i in range(index, dimension))
    return substitute(e, reps, dimension)


def perturbed_text(text: str, epsilon: float, terms: Sequence[str], coefficients: Sequence[float]) -> str:
    """text + ε·Σ c_i·term_i 형태의 식 텍스트 (repr 로 비트 단위 재현)."""
    body = " + ".join(f"({c!r})*({t})" for c, t in zip(coefficients, terms))
    return f"({text}) + ({epsilon!r})*({body})"
