"""Per-mode update expressions: parsing, evaluation, differentiation.

Grammar (see README for the full token set)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" UINT)*
    atom    := NUMBER | VAR | FUNC "(" expr ")" | "(" expr ")"
    VAR     := "x1" ... "xn"          (1-based, n = declared state dimension)
    FUNC    := sin cos tan exp log sqrt abs
    NUMBER  := decimal or scientific literal

Precedence: ^ binds tighter than unary minus, which binds tighter than * /,
which bind tighter than + -.  Binary operators are left-associative.  The
exponent of ^ must be a literal non-negative integer, enforced at parse time.

Expression trees are immutable; evaluation is pure.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from . import interval as iv
from .errors import DomainError, ExprSyntaxError, NonDifferentiable, NonIntegerExponent, UnknownVariable
from .interval import Box, Interval, RoundingPolicy


@dataclass(frozen=True, slots=True)
class ParseDiagnostic:
    position: int
    message: str


class Expr:
    """Base class of expression nodes."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expr):
    index: int  # 1-based


@dataclass(frozen=True, slots=True)
class Unary(Expr):
    op: str  # neg sin cos tan exp log sqrt abs
    child: Expr


@dataclass(frozen=True, slots=True)
class Binary(Expr):
    op: str  # + - * /
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class PowInt(Expr):
    child: Expr
    k: int


_FUNCS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None or m.end() == pos:
            at = pos + len(src[pos:]) - len(src[pos:].lstrip())
            raise ExprSyntaxError(ParseDiagnostic(at, f"unexpected character {src[at]!r}"))
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str, n: int):
        self.src = src
        self.n = n
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def fail(self, pos, message):
        raise ExprSyntaxError(ParseDiagnostic(pos, message))

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            self.fail(pos, f"unexpected token {val!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                e = Binary(val, e, self.term())
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                e = Binary(val, e, self.unary())
            else:
                return e

    def unary(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.next()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        e = self.atom()
        while True:
            kind, val, pos = self.peek()
            if kind == "op" and val == "^":
                self.next()
                e = PowInt(e, self.exponent())
            else:
                return e

    def exponent(self) -> int:
        kind, val, pos = self.next()
        if kind != "num" or not re.fullmatch(r"\d+", val):
            raise NonIntegerExponent(
                f"at offset {pos}: '^' needs a literal non-negative integer, got {val!r}"
            )
        return int(val)

    def atom(self) -> Expr:
        kind, val, pos = self.next()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            m = re.fullmatch(r"x([1-9]\d*)", val)
            if m:
                idx = int(m.group(1))
                if idx > self.n:
                    raise UnknownVariable(f"variable {val} exceeds state dimension {self.n}")
                return Var(idx)
            if val in _FUNCS:
                self.expect("(", pos)
                child = self.expr()
                self.expect(")", self.peek()[2])
                return Unary(val, child)
            raise UnknownVariable(f"unknown name {val!r} at offset {pos}")
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")", self.peek()[2])
            return e
        self.fail(pos, f"expected a value, got {val!r}" if val else "unexpected end of input")

    def expect(self, opval, pos):
        kind, val, p = self.next()
        if kind != "op" or val != opval:
            self.fail(p if val else pos, f"expected {opval!r}, got {val!r}" if val else f"expected {opval!r}")


def parse(src: str, n: int) -> Expr:
    """Parse an update expression over x1..xn into an expression tree."""
    if not src or not src.strip():
        raise ExprSyntaxError(ParseDiagnostic(0, "empty expression"))
    if n < 1:
        raise ValueError("state dimension must be >= 1")
    return _Parser(src, n).parse()


def variables(e: Expr) -> set[int]:
    if isinstance(e, Const):
        return set()
    if isinstance(e, Var):
        return {e.index}
    if isinstance(e, Unary):
        return variables(e.child)
    if isinstance(e, PowInt):
        return variables(e.child)
    return variables(e.left) | variables(e.right)


def contains_abs(e: Expr) -> bool:
    if isinstance(e, Unary):
        return e.op == "abs" or contains_abs(e.child)
    if isinstance(e, Binary):
        return contains_abs(e.left) or contains_abs(e.right)
    if isinstance(e, PowInt):
        return contains_abs(e.child)
    return False


_REAL_UNARY = {
    "neg": lambda v: -v,
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "abs": abs,
}


def eval_real(e: Expr, x) -> float:
    """Evaluate at a point (sequence of n floats)."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return float(x[e.index - 1])
    if isinstance(e, Unary):
        v = eval_real(e.child, x)
        try:
            return _REAL_UNARY[e.op](v)
        except ValueError as exc:
            raise DomainError(f"{e.op}({v}) out of domain") from exc
    if isinstance(e, PowInt):
        return eval_real(e.child, x) ** e.k
    v1 = eval_real(e.left, x)
    v2 = eval_real(e.right, x)
    if e.op == "+":
        return v1 + v2
    if e.op == "-":
        return v1 - v2
    if e.op == "*":
        return v1 * v2
    if v2 == 0.0:
        raise DomainError(f"division by zero: {v1}/{v2}")
    return v1 / v2


def eval_interval(e: Expr, b: Box, rounding: RoundingPolicy = RoundingPolicy.NONE) -> Interval:
    """Natural interval extension over a box."""
    if isinstance(e, Const):
        return Interval(e.value, e.value)
    if isinstance(e, Var):
        return b.dims[e.index - 1]
    if isinstance(e, Unary):
        return iv.UNARY_OPS[e.op](eval_interval(e.child, b, rounding), rounding)
    if isinstance(e, PowInt):
        return iv.pow_int(eval_interval(e.child, b, rounding), e.k, rounding)
    return iv.BINARY_OPS[e.op](
        eval_interval(e.left, b, rounding), eval_interval(e.right, b, rounding), rounding
    )


def _is_const(e: Expr, v: float) -> bool:
    return isinstance(e, Const) and e.value == v


def simplify(e: Expr) -> Expr:
    """Constant folding plus zero/one elimination, applied bottom-up."""
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Unary):
        c = simplify(e.child)
        if e.op == "neg":
            if isinstance(c, Const):
                return Const(-c.value)
            if isinstance(c, Unary) and c.op == "neg":
                return c.child
        return Unary(e.op, c)
    if isinstance(e, PowInt):
        c = simplify(e.child)
        if e.k == 0:
            return Const(1.0)
        if e.k == 1:
            return c
        if isinstance(c, Const):
            return Const(c.value**e.k)
        return PowInt(c, e.k)
    l, r = simplify(e.left), simplify(e.right)
    if isinstance(l, Const) and isinstance(r, Const) and not (e.op == "/" and r.value == 0.0):
        return Const(eval_real(Binary(e.op, l, r), ()))
    if e.op == "+":
        if _is_const(l, 0.0):
            return r
        if _is_const(r, 0.0):
            return l
    elif e.op == "-":
        if _is_const(r, 0.0):
            return l
        if _is_const(l, 0.0):
            return simplify(Unary("neg", r))
    elif e.op == "*":
        if _is_const(l, 0.0) or _is_const(r, 0.0):
            return Const(0.0)
        if _is_const(l, 1.0):
            return r
        if _is_const(r, 1.0):
            return l
    elif e.op == "/":
        if _is_const(l, 0.0):
            return Const(0.0)
        if _is_const(r, 1.0):
            return l
    return Binary(e.op, l, r)


def differentiate(e: Expr, i: int) -> Expr:
    """Symbolic partial derivative wrt x_i, simplified."""
    return simplify(_diff(e, i))


def _diff(e: Expr, i: int) -> Expr:
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.index == i else 0.0)
    if isinstance(e, Unary):
        du = _diff(e.child, i)
        u = e.child
        if e.op == "neg":
            return Unary("neg", du)
        if e.op == "sin":
            return Binary("*", Unary("cos", u), du)
        if e.op == "cos":
            return Unary("neg", Binary("*", Unary("sin", u), du))
        if e.op == "tan":
            return Binary("/", du, PowInt(Unary("cos", u), 2))
        if e.op == "exp":
            return Binary("*", Unary("exp", u), du)
        if e.op == "log":
            return Binary("/", du, u)
        if e.op == "sqrt":
            return Binary("/", du, Binary("*", Const(2.0), Unary("sqrt", u)))
        raise NonDifferentiable("abs has no symbolic derivative")
    if isinstance(e, PowInt):
        if e.k == 0:
            return Const(0.0)
        return Binary(
            "*", Binary("*", Const(float(e.k)), PowInt(e.child, e.k - 1)), _diff(e.child, i)
        )
    dl, dr = _diff(e.left, i), _diff(e.right, i)
    if e.op == "+":
        return Binary("+", dl, dr)
    if e.op == "-":
        return Binary("-", dl, dr)
    if e.op == "*":
        return Binary("+", Binary("*", dl, e.right), Binary("*", e.left, dr))
    return Binary(
        "/",
        Binary("-", Binary("*", dl, e.right), Binary("*", e.left, dr)),
        PowInt(e.right, 2),
    )


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "pow": 4, "atom": 5}


def pretty(e: Expr) -> str:
    """Render with minimal parentheses; parse(pretty(e)) == e structurally."""
    return _pretty(e)[0]


def _pretty(e: Expr) -> tuple[str, int]:
    if isinstance(e, Const):
        if e.value < 0:
            return f"-{-e.value!r}", _PREC["neg"]
        return repr(e.value), _PREC["atom"]
    if isinstance(e, Var):
        return f"x{e.index}", _PREC["atom"]
    if isinstance(e, Unary):
        if e.op == "neg":
            s, p = _pretty(e.child)
            if p < _PREC["neg"]:
                s = f"({s})"
            return f"-{s}", _PREC["neg"]
        return f"{e.op}({_pretty(e.child)[0]})", _PREC["atom"]
    if isinstance(e, PowInt):
        s, p = _pretty(e.child)
        if p < _PREC["atom"]:
            s = f"({s})"
        return f"{s}^{e.k}", _PREC["pow"]
    ls, lp = _pretty(e.left)
    rs, rp = _pretty(e.right)
    prec = _PREC[e.op]
    if lp < prec:
        ls = f"({ls})"
    # left-associative: right operand needs parens at equal precedence
    if rp < prec or (rp == prec and e.op in ("-", "/", "+", "*")):
        rs = f"({rs})"
    return f"{ls}{e.op}{rs}", prec
