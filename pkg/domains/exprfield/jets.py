"""
Forward-mode jets compiled from the expression AST.

Each node is compiled once into a closure per evaluation mode:
  value  scalar float (math module)
  many   vectorized over an (K, n) array of points (numpy ufuncs)
  jet1   (value, gradient list)
  jet2   (value, gradient list, upper-triangular Hessian list of length n(n+1)/2)

The Hessian is expanded to a full matrix from its upper triangle, so it is symmetric
entry for entry.
"""
from __future__ import annotations

import math
from functools import cached_property
from typing import Callable, List, Tuple

import numpy as np

from shared.exceptions import McfkitError

from .models import Node


class EvaluationDomainError(McfkitError):
    """0 으로 나누기, 0 의 음수 거듭제곱, exp 오버플로"""

    stage = "exprfield.eval"


# 함수명 → (math 함수, numpy 함수, v ↦ (f, f', f''))
def _sin_d(v: float) -> Tuple[float, float, float]:
    s, c = math.sin(v), math.cos(v)
    return s, c, -s


def _cos_d(v: float) -> Tuple[float, float, float]:
    s, c = math.sin(v), math.cos(v)
    return c, -s, -c


def _exp_d(v: float) -> Tuple[float, float, float]:
    e = _safe_exp(v)
    return e, e, e


def _tanh_d(v: float) -> Tuple[float, float, float]:
    t = math.tanh(v)
    s = 1.0 - t * t
    return t, s, -2.0 * t * s


def _safe_exp(v: float) -> float:
    try:
        return math.exp(v)
    except OverflowError as exc:
        raise EvaluationDomainError("exp 오버플로", argument=v) from exc


_FUNCS = {
    "sin": (math.sin, np.sin, _sin_d),
    "cos": (math.cos, np.cos, _cos_d),
    "exp": (_safe_exp, np.exp, _exp_d),
    "tanh": (math.tanh, np.tanh, _tanh_d),
}


def _check_divisor(d: float) -> None:
    if d == 0.0:
        raise EvaluationDomainError("0 으로 나누기")


def _safe_pow(v: float, k: int) -> float:
    if v == 0.0 and k < 0:
        raise EvaluationDomainError("0 의 음수 거듭제곱", exponent=k)
    try:
        return v**k
    except OverflowError as exc:
        raise EvaluationDomainError("거듭제곱 오버플로", argument=v, exponent=k) from exc


def _pow_d(v: float, k: int) -> Tuple[float, float, float]:
    f = _safe_pow(v, k)
    d1 = k * _safe_pow(v, k - 1) if k != 0 else 0.0
    d2 = k * (k - 1) * _safe_pow(v, k - 2) if k not in (0, 1) else 0.0
    return f, d1, d2


# ──────────────────────────────────────────────────────────────────────────────
# 모드별 컴파일
# ──────────────────────────────────────────────────────────────────────────────
def _compile_value(node: Node) -> Callable:
    op = node.op
    if op == "const":
        c = float(node.value)
        return lambda x: c
    if op == "var":
        i = int(node.value)
        return lambda x: x[i]
    if op == "neg":
        a = _compile_value(node.args[0])
        return lambda x: -a(x)
    if op == "^":
        a = _compile_value(node.args[0])
        k = int(node.value)

        return lambda x: _safe_pow(a(x), k)
    if op in _FUNCS:
        a = _compile_value(node.args[0])
        f = _FUNCS[op][0]
        return lambda x: f(a(x))
    a, b = (_compile_value(n) for n in node.args)
    if op == "+":
        return lambda x: a(x) + b(x)
    if op == "-":
        return lambda x: a(x) - b(x)
    if op == "*":
        return lambda x: a(x) * b(x)

    def divide(x):
        d = b(x)
        _check_divisor(d)
        return a(x) / d

    return divide


def _compile_many(node: Node) -> Callable:
    op = node.op
    if op == "const":
        c = float(node.value)
        return lambda X: np.full(X.shape[0], c)
    if op == "var":
        i = int(node.value)
        return lambda X: X[:, i]
    if op == "neg":
        a = _compile_many(node.args[0])
        return lambda X: -a(X)
    if op == "^":
        a = _compile_many(node.args[0])
        k = int(node.value)

        def power(X):
            v = a(X)
            if k < 0 and np.any(v == 0.0):
                raise EvaluationDomainError("0 의 음수 거듭제곱", exponent=k)
            return v**k if k >= 0 else 1.0 / v ** (-k)

        return power
    if op in _FUNCS:
        a = _compile_many(node.args[0])
        f = _FUNCS[op][1]
        return lambda X: f(a(X))
    a, b = (_compile_many(n) for n in node.args)
    if op == "+":
        return lambda X: a(X) + b(X)
    if op == "-":
        return lambda X: a(X) - b(X)
    if op == "*":
        return lambda X: a(X) * b(X)

    def divide(X):
        d = b(X)
        if np.any(d == 0.0):
            raise EvaluationDomainError("0 으로 나누기")
        return a(X) / d

    return divide


def _compile_jet1(node: Node, n: int) -> Callable:
    op = node.op
    if op == "const":
        c = float(node.value)
        zero = [0.0] * n
        return lambda x: (c, zero)
    if op == "var":
        i = int(node.value)
        unit = [1.0 if j == i else 0.0 for j in range(n)]
        return lambda x: (x[i], unit)
    if op == "neg":
        a = _compile_jet1(node.args[0], n)

        def neg(x):
            v, g = a(x)
            return -v, [-gi for gi in g]

        return neg
    if op == "^" or op in _FUNCS:
        a = _compile_jet1(node.args[0], n)
        if op == "^":
            k = int(node.value)
            deriv = lambda v: _pow_d(v, k)  # noqa: E731
        else:
            deriv = _FUNCS[op][2]

        def chain(x):
            v, g = a(x)
            f, d1, _ = deriv(v)
            return f, [d1 * gi for gi in g]

        return chain
    a, b = (_compile_jet1(m, n) for m in node.args)
    if op == "+":

        def add(x):
            va, ga = a(x)
            vb, gb = b(x)
            return va + vb, [p + q for p, q in zip(ga, gb)]

        return add
    if op == "-":

        def sub(x):
            va, ga = a(x)
            vb, gb = b(x)
            return va - vb, [p - q for p, q in zip(ga, gb)]

        return sub
    if op == "*":

        def mul(x):
            va, ga = a(x)
            vb, gb = b(x)
            return va * vb, [va * q + vb * p for p, q in zip(ga, gb)]

        return mul

    def div(x):
        va, ga = a(x)
        vb, gb = b(x)
        _check_divisor(vb)
        r = 1.0 / vb
        v = va * r
        return v, [(p - v * q) * r for p, q in zip(ga, gb)]

    return div


def _compile_jet2(node: Node, n: int, pairs: List[Tuple[int, int]]) -> Callable:
    op = node.op
    m = len(pairs)
    if op == "const":
        c = float(node.value)
        zg, zh = [0.0] * n, [0.0] * m
        return lambda x: (c, zg, zh)
    if op == "var":
        i = int(node.value)
        unit = [1.0 if j == i else 0.0 for j in range(n)]
        zh = [0.0] * m
        return lambda x: (x[i], unit, zh)
    if op == "neg":
        a = _compile_jet2(node.args[0], n, pairs)

        def neg(x):
            v, g, h = a(x)
            return -v, [-t for t in g], [-t for t in h]

        return neg
    if op == "^" or op in _FUNCS:
        a = _compile_jet2(node.args[0], n, pairs)
        if op == "^":
            k = int(node.value)
            deriv = lambda v: _pow_d(v, k)  # noqa: E731
        else:
            deriv = _FUNCS[op][2]

        def chain(x):
            v, g, h = a(x)
            f, d1, d2 = deriv(v)
            return (
                f,
                [d1 * t for t in g],
                [d1 * hij + d2 * g[i] * g[j] for hij, (i, j) in zip(h, pairs)],
            )

        return chain
    a, b = (_compile_jet2(c, n, pairs) for c in node.args)
    if op in ("+", "-"):
        s = 1.0 if op == "+" else -1.0

        def addsub(x):
            va, ga, ha = a(x)
            vb, gb, hb = b(x)
            return (
                va + s * vb,
                [p + s * q for p, q in zip(ga, gb)],
                [p + s * q for p, q in zip(ha, hb)],
            )

        return addsub
    if op == "*":

        def mul(x):
            va, ga, ha = a(x)
            vb, gb, hb = b(x)
            return (
                va * vb,
                [va * q + vb * p for p, q in zip(ga, gb)],
                [
                    va * hb_ij + vb * ha_ij + ga[i] * gb[j] + gb[i] * ga[j]
                    for ha_ij, hb_ij, (i, j) in zip(ha, hb, pairs)
                ],
            )

        return mul

    def div(x):
        va, ga, ha = a(x)
        vb, gb, hb = b(x)
        _check_divisor(vb)
        # a * (1/b): 역수 jet 을 먼저 만들고 곱한다
        r = 1.0 / vb
        d1, d2 = -r * r, 2.0 * r * r * r
        gr = [d1 * q for q in gb]
        hr = [d1 * hb_ij + d2 * gb[i] * gb[j] for hb_ij, (i, j) in zip(hb, pairs)]
        return (
            va * r,
            [va * q + r * p for p, q in zip(ga, gr)],
            [
                va * hr_ij + r * ha_ij + ga[i] * gr[j] + gr[i] * ga[j]
                for ha_ij, hr_ij, (i, j) in zip(ha, hr, pairs)
            ],
        )

    return div


class Program:
    """한 식에 대한 모드별 컴파일 결과 묶음. 불변이며 스레드 간 공유해도 안전."""

    def __init__(self, root: Node, dimension: int) -> None:
        self.root = root
        self.dimension = dimension
        self.pairs = [(i, j) for i in range(dimension) for j in range(i, dimension)]

    @cached_property
    def _value(self):
        return _compile_value(self.root)

    @cached_property
    def _many(self):
        return _compile_many(self.root)

    @cached_property
    def _jet1(self):
        return _compile_jet1(self.root, self.dimension)

    @cached_property
    def _jet2(self):
        return _compile_jet2(self.root, self.dimension, self.pairs)

    def value(self, p) -> float:
        return float(self._value([float(t) for t in p]))

    def many(self, points: np.ndarray) -> np.ndarray:
        with np.errstate(over="raise"):
            try:
                out = self._many(points)
            except FloatingPointError as exc:
                raise EvaluationDomainError("벡터 평가 중 오버플로") from exc
        return np.broadcast_to(out, (points.shape[0],)).astype(float)

    def jet1(self, p) -> Tuple[float, np.ndarray]:
        v, g = self._jet1([float(t) for t in p])
        return float(v), np.array(g, dtype=float)

    def jet2(self, p) -> Tuple[float, np.ndarray, np.ndarray]:
        v, g, h = self._jet2([float(t) for t in p])
        n = self.dimension
        H = np.empty((n, n))
        for hij, (i, j) in zip(h, self.pairs):
            H[i, j] = hij
            H[j, i] = hij
        return float(v), np.array(g, dtype=float), H


def compile_program(root: Node, dimension: int) -> Program:
    return Program(root, dimension)
