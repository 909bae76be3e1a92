from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import List, Optional

from shared.exceptions import McfkitError

from .models import UNARY_FUNCTIONS, Expression, Node


class ExpressionSyntaxError(McfkitError):
    """문법에 맞지 않는 식 (position 은 0부터 센 문자 위치)"""

    stage = "exprfield.parse"


class UnknownIdentifierError(McfkitError):
    """x1..xn, pi, 허용 함수 외의 식별자"""

    stage = "exprfield.parse"


class ArityError(McfkitError):
    """함수 인자 개수 불일치"""

    stage = "exprfield.parse"


class VariableIndexError(McfkitError):
    """변수 인덱스가 도메인 차원을 넘음"""

    stage = "exprfield.parse"


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^(),])
    """,
    re.VERBOSE,
)
_VAR = re.compile(r"x(\d+)$")


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | op | end
    text: str
    pos: int


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExpressionSyntaxError(f"알 수 없는 문자 '{text[pos]}'", position=pos)
        kind = m.lastgroup or ""
        if kind != "ws":
            lexeme = m.group(kind)
            # ** 는 ^ 의 별칭
            tokens.append(Token(kind, "^" if lexeme == "**" else lexeme, pos))
        pos = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class _Parser:
    """
    재귀 하강 파서.
      expr  := term (('+'|'-') term)*
      term  := unary (('*'|'/') unary)*
      unary := ('-'|'+') unary | power
      power := atom ('^' ['-'|'+'] INT)?
      atom  := NUMBER | 'pi' | x<i> | FUNC '(' expr ')' | '(' expr ')'
    """

    def __init__(self, text: str, dimension: int) -> None:
        self.text = text
        self.dimension = dimension
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def _advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def _expect(self, lexeme: str) -> Token:
        t = self.tok
        if t.text != lexeme or t.kind == "end":
            found = t.text or "end of input"
            raise ExpressionSyntaxError(f"'{lexeme}' 이(가) 필요함, '{found}' 발견", position=t.pos)
        return self._advance()

    def parse(self) -> Node:
        node = self._expr()
        if self.tok.kind != "end":
            raise ExpressionSyntaxError(f"예상치 못한 토큰 '{self.tok.text}'", position=self.tok.pos)
        return node

    def _expr(self) -> Node:
        node = self._term()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self._advance().text
            node = Node(op, (node, self._term()))
        return node

    def _term(self) -> Node:
        node = self._unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self._advance().text
            node = Node(op, (node, self._unary()))
        return node

    def _unary(self) -> Node:
        if self.tok.kind == "op" and self.tok.text in ("-", "+"):
            op = self._advance().text
            inner = self._unary()
            return Node("neg", (inner,)) if op == "-" else inner
        return self._power()

    def _power(self) -> Node:
        base = self._atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self._advance()
            sign = 1
            if self.tok.kind == "op" and self.tok.text in ("-", "+"):
                sign = -1 if self._advance().text == "-" else 1
            t = self.tok
            if t.kind != "num" or not t.text.isdigit():
                raise ExpressionSyntaxError("지수는 정수 리터럴이어야 함", position=t.pos)
            self._advance()
            return Node("^", (base,), sign * int(t.text))
        return base

    def _atom(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self._advance()
            return Node("const", (), float(t.text))
        if t.kind == "op" and t.text == "(":
            self._advance()
            node = self._expr()
            self._expect(")")
            return node
        if t.kind == "ident":
            self._advance()
            return self._identifier(t)
        found = t.text or "end of input"
        raise ExpressionSyntaxError(f"피연산자가 필요함, '{found}' 발견", position=t.pos)

    def _identifier(self, t: Token) -> Node:
        name = t.text
        if name == "pi":
            return Node("const", (), math.pi)
        m = _VAR.match(name)
        if m:
            index = int(m.group(1))
            if not 1 <= index <= self.dimension:
                raise VariableIndexError(
                    f"변수 {name} 은(는) 차원 {self.dimension} 범위 밖",
                    position=t.pos,
                    dimension=self.dimension,
                )
            return Node("var", (), index - 1)
        if name in UNARY_FUNCTIONS:
            if not (self.tok.kind == "op" and self.tok.text == "("):
                raise ArityError(f"{name} 는 인자 1개가 필요함", position=t.pos)
            self._advance()
            args = [self._expr()]
            while self.tok.kind == "op" and self.tok.text == ",":
                self._advance()
                args.append(self._expr())
            self._expect(")")
            if len(args) != 1:
                raise ArityError(f"{name} 는 인자 1개가 필요함 ({len(args)}개 받음)", position=t.pos)
            return Node(name, (args[0],))
        raise UnknownIdentifierError(f"알 수 없는 식별자 '{name}'", position=t.pos)


def parse_expression(text: str, dimension: int, *, label: Optional[str] = None) -> Expression:
    root = _Parser(text, dimension).parse()
    return Expression(text=label or text.strip(), dimension=dimension, root=root)
