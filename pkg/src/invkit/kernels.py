"""Vectorized interval arithmetic over ndarray endpoint pairs.

The synthesis sweep classifies tens of thousands of boxes per iteration, so
interval images are computed for whole batches at once: a batch of k boxes in
R^n is a pair of float64 arrays ``lo, hi`` of shape (k, n), and expression
evaluation maps them to endpoint arrays of shape (k,).

Semantics mirror :mod:`invkit.interval` exactly (same outward-rounding step
counts, same domain errors); the scalar module is the reference and the two
are cross-checked by property tests.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError
from .expr import Binary, Const, Expr, PowInt, Unary, Var
from .interval import RoundingPolicy

_TWO_PI = 2.0 * math.pi
_HALF_PI = math.pi / 2.0


class BatchDomainError(DomainError):
    """Domain violation inside a batch; ``mask`` flags offending rows."""

    def __init__(self, message: str, mask: np.ndarray):
        self.mask = mask
        super().__init__(message)


def _down(x: np.ndarray, steps: int) -> np.ndarray:
    for _ in range(steps):
        x = np.nextafter(x, -np.inf)
    return x


def _up(x: np.ndarray, steps: int) -> np.ndarray:
    for _ in range(steps):
        x = np.nextafter(x, np.inf)
    return x


def _mk(lo, hi, rounding: RoundingPolicy, steps: int = 1):
    if rounding is RoundingPolicy.OUTWARD:
        return _down(lo, steps), _up(hi, steps)
    return lo, hi


def add(a, b, rounding):
    return _mk(a[0] + b[0], a[1] + b[1], rounding)


def sub(a, b, rounding):
    return _mk(a[0] - b[1], a[1] - b[0], rounding)


def neg(a, rounding):
    return -a[1], -a[0]


def mul(a, b, rounding):
    p1 = a[0] * b[0]
    p2 = a[0] * b[1]
    p3 = a[1] * b[0]
    p4 = a[1] * b[1]
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    return _mk(lo, hi, rounding)


def div(a, b, rounding):
    bad = (b[0] <= 0.0) & (b[1] >= 0.0)
    if np.any(bad):
        raise BatchDomainError("division by interval containing zero", np.asarray(bad))
    q1 = a[0] / b[0]
    q2 = a[0] / b[1]
    q3 = a[1] / b[0]
    q4 = a[1] / b[1]
    lo = np.minimum(np.minimum(q1, q2), np.minimum(q3, q4))
    hi = np.maximum(np.maximum(q1, q2), np.maximum(q3, q4))
    return _mk(lo, hi, rounding)


def pow_int(a, k: int, rounding):
    if k == 0:
        ones = np.ones_like(a[0])
        return ones, ones.copy()
    if k == 1:
        return a
    plo = a[0] ** k
    phi = a[1] ** k
    if k % 2 == 1:
        return _mk(plo, phi, rounding)
    crosses = (a[0] <= 0.0) & (a[1] >= 0.0)
    lo = np.where(crosses, 0.0, np.minimum(plo, phi))
    hi = np.maximum(plo, phi)
    lo, hi = _mk(lo, hi, rounding)
    return np.where(crosses, 0.0, lo), hi


def _contains_angle(lo, hi, base):
    k = np.ceil((lo - base) / _TWO_PI)
    return base + _TWO_PI * k <= hi


def sin(a, rounding):
    slo = np.sin(a[0])
    shi = np.sin(a[1])
    lo = np.where(_contains_angle(a[0], a[1], -_HALF_PI), -1.0, np.minimum(slo, shi))
    hi = np.where(_contains_angle(a[0], a[1], _HALF_PI), 1.0, np.maximum(slo, shi))
    lo, hi = _mk(lo, hi, rounding, steps=2)
    wide = (a[1] - a[0]) >= _TWO_PI
    lo = np.where(wide, -1.0, np.maximum(lo, -1.0))
    hi = np.where(wide, 1.0, np.minimum(hi, 1.0))
    return lo, hi


def cos(a, rounding):
    clo = np.cos(a[0])
    chi = np.cos(a[1])
    lo = np.where(_contains_angle(a[0], a[1], math.pi), -1.0, np.minimum(clo, chi))
    hi = np.where(_contains_angle(a[0], a[1], 0.0), 1.0, np.maximum(clo, chi))
    lo, hi = _mk(lo, hi, rounding, steps=2)
    wide = (a[1] - a[0]) >= _TWO_PI
    lo = np.where(wide, -1.0, np.maximum(lo, -1.0))
    hi = np.where(wide, 1.0, np.minimum(hi, 1.0))
    return lo, hi


def tan(a, rounding):
    bad = np.floor((a[0] + _HALF_PI) / math.pi) != np.floor((a[1] + _HALF_PI) / math.pi)
    if np.any(bad):
        raise BatchDomainError("tan over interval containing an asymptote", np.asarray(bad))
    return _mk(np.tan(a[0]), np.tan(a[1]), rounding, steps=2)


def exp(a, rounding):
    lo, hi = _mk(np.exp(a[0]), np.exp(a[1]), rounding, steps=2)
    return np.maximum(lo, 0.0), hi


def log(a, rounding):
    bad = a[0] <= 0.0
    if np.any(bad):
        raise BatchDomainError("log of interval touching non-positive values", np.asarray(bad))
    return _mk(np.log(a[0]), np.log(a[1]), rounding, steps=2)


def sqrt(a, rounding):
    bad = a[0] < 0.0
    if np.any(bad):
        raise BatchDomainError("sqrt of interval with negative values", np.asarray(bad))
    lo, hi = _mk(np.sqrt(a[0]), np.sqrt(a[1]), rounding)
    return np.maximum(lo, 0.0), hi


def abs_(a, rounding):
    crosses = (a[0] <= 0.0) & (a[1] >= 0.0)
    mag = np.maximum(np.abs(a[0]), np.abs(a[1]))
    lo = np.where(crosses, 0.0, np.minimum(np.abs(a[0]), np.abs(a[1])))
    return lo, mag


_UNARY = {
    "neg": neg,
    "sin": sin,
    "cos": cos,
    "tan": tan,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "abs": abs_,
}

_BINARY = {"+": add, "-": sub, "*": mul, "/": div}


def eval_interval_batch(e: Expr, lo: np.ndarray, hi: np.ndarray, rounding: RoundingPolicy):
    """Natural inclusion of ``e`` over k boxes given as (k, n) endpoint arrays.

    Returns a pair of (k,) arrays.
    """
    if isinstance(e, Const):
        v = np.full(lo.shape[0], e.value)
        return v, v.copy()
    if isinstance(e, Var):
        j = e.index - 1
        return lo[:, j].copy(), hi[:, j].copy()
    if isinstance(e, Unary):
        return _UNARY[e.op](eval_interval_batch(e.child, lo, hi, rounding), rounding)
    if isinstance(e, PowInt):
        return pow_int(eval_interval_batch(e.child, lo, hi, rounding), e.k, rounding)
    a = eval_interval_batch(e.left, lo, hi, rounding)
    b = eval_interval_batch(e.right, lo, hi, rounding)
    return _BINARY[e.op](a, b, rounding)


_REAL_UNARY = {
    "neg": np.negative,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}


def eval_real_batch(e: Expr, x: np.ndarray) -> np.ndarray:
    """Evaluate ``e`` at k points given as a (k, n) array."""
    if isinstance(e, Const):
        return np.full(x.shape[0], e.value)
    if isinstance(e, Var):
        return x[:, e.index - 1].copy()
    if isinstance(e, Unary):
        return _REAL_UNARY[e.op](eval_real_batch(e.child, x))
    if isinstance(e, PowInt):
        return eval_real_batch(e.child, x) ** e.k
    a = eval_real_batch(e.left, x)
    b = eval_real_batch(e.right, x)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    return a / b
