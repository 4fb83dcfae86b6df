"""Closed-interval and box arithmetic with optional outward rounding.

Intervals are closed subsets [lo, hi] of the reals with lo <= hi; the empty
set is represented by ``None`` everywhere (a distinct sentinel, never an
Interval with lo > hi).  Boxes are axis-aligned products of intervals.

All values are immutable and safe to share between workers.

Under ``RoundingPolicy.OUTWARD`` every elementary operation steps its result
endpoints to adjacent representable floats (one step for +,-,*,/ and integer
powers, two for transcendental functions whose libm error can reach 1 ulp),
so the returned interval rigorously encloses the true real-valued range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import DegenerateBox, DomainError, EmptyOperand, NegativeRadius

_INF = math.inf


class RoundingPolicy(Enum):
    NONE = "none"
    OUTWARD = "outward"


def _down(x: float, steps: int = 1) -> float:
    for _ in range(steps):
        x = math.nextafter(x, -_INF)
    return x


def _up(x: float, steps: int = 1) -> float:
    for _ in range(steps):
        x = math.nextafter(x, _INF)
    return x


@dataclass(frozen=True, slots=True)
class Interval:
    """Closed interval [lo, hi], lo <= hi."""

    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("interval endpoints must not be NaN")
        if self.lo > self.hi:
            raise ValueError(f"interval endpoints out of order: [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return (self.lo + self.hi) / 2.0

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    def mag(self) -> float:
        """max |x| over the interval."""
        return max(abs(self.lo), abs(self.hi))

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def contains_interval(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def intersects(self, other: "Interval") -> bool:
        """Closed-set convention: touching endpoints count."""
        return self.lo <= other.hi and other.lo <= self.hi

    def __repr__(self):
        return f"[{self.lo!r}, {self.hi!r}]"


def _check(*ops):
    for a in ops:
        if a is None:
            raise EmptyOperand("operation on empty interval")


def _mk(lo: float, hi: float, rounding: RoundingPolicy, steps: int = 1) -> Interval:
    if rounding is RoundingPolicy.OUTWARD:
        lo, hi = _down(lo, steps), _up(hi, steps)
    return Interval(lo, hi)


def add(a: Interval, b: Interval, rounding: RoundingPolicy = RoundingPolicy.NONE) -> Interval:
    _check(a, b)
    return _mk(a.lo + b.lo, a.hi + b.hi, rounding)


def sub(a: Interval, b: Interval, rounding: RoundingPolicy = RoundingPolicy.NONE) -> Interval:
    _check(a, b)
    return _mk(a.lo - b.hi, a.hi - b.lo, rounding)


def neg(a: Interval, rounding: RoundingPolicy = RoundingPolicy.NONE) -> Interval:
    _check(a)
    return Interval(-a.hi, -a.lo)  # exact in floating point


def mul(a: Interval, b: Interval, rounding: RoundingPolicy = RoundingPolicy.NONE) -> Interval:
    _check(a, b)
    ps = (a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi)
    return _mk(min(ps), max(ps), rounding)


def div(a: Interval, b: Interval, rounding: RoundingPolicy = RoundingPolicy.NONE) -> Interval:
    _check(a, b)
    if b.lo <= 0.0 <= b.hi:
        raise DomainError(f"division by interval containing zero: {b}")
    qs = (a.lo / b.lo, a.lo / b.hi, a.hi / b.lo, a.hi / b.hi)
    return _mk(min(qs), max(qs), rounding)


def pow_int(a: Interval, k: int, rounding: RoundingPolicy = RoundingPolicy.NONE) -> Interval:
    """[a]^k for a literal integer k >= 0; even powers use 0 when 0 in [a]."""
    _check(a)
    if not isinstance(k, int) or k < 0:
        raise ValueError(f"pow_int exponent must be a non-negative integer, got {k!r}")
    if k == 0:
        return Interval(1.0, 1.0)
    if k == 1:
        return a
    plo, phi = a.lo**k, a.hi**k
    if k % 2 == 1:
        return _mk(plo, phi, rounding)
    if a.lo <= 0.0 <= a.hi:
        r = _mk(0.0, max(plo, phi), rounding)
        return Interval(0.0, r.hi)  # 0 is attained, no need to loosen it
    return _mk(min(plo, phi), max(plo, phi), rounding)


_TWO_PI = 2.0 * math.pi
_HALF_PI = math.pi / 2.0


def _contains_angle(lo: float, hi: float, base: float) -> bool:
    # true iff base + 2*pi*k lies in [lo, hi] for some integer k
    k = math.ceil((lo - base) / _TWO_PI)
    return base + _TWO_PI * k <= hi


def sin(a: Interval, rounding: RoundingPolicy = RoundingPolicy.NONE) -> Interval:
    _check(a)
    if not a.is_finite or a.width >= _TWO_PI:
        return Interval(-1.0, 1.0)
    slo, shi = math.sin(a.lo), math.sin(a.hi)
    lo = -1.0 if _contains_angle(a.lo, a.hi, -_HALF_PI) else min(slo, shi)
    hi = 1.0 if _contains_angle(a.lo, a.hi, _HALF_PI) else max(slo, shi)
    r = _mk(lo, hi, rounding, steps=2)
    return Interval(max(r.lo, -1.0), min(r.hi, 1.0))


def cos(a: Interval, rounding: RoundingPolicy = RoundingPolicy.NONE) -> Interval:
    _check(a)
    if not a.is_finite or a.width >= _TWO_PI:
        return Interval(-1.0, 1.0)
    clo, chi = math.cos(a.lo), math.cos(a.hi)
    lo = -1.0 if _contains_angle(a.lo, a.hi, math.pi) else min(clo, chi)
    hi = 1.0 if _contains_angle(a.lo, a.hi, 0.0) else max(clo, chi)
    r = _mk(lo, hi, rounding, steps=2)
    return Interval(max(r.lo, -1.0), min(r.hi, 1.0))


def tan(a: Interval, rounding: RoundingPolicy = RoundingPolicy.NONE) -> Interval:
    _check(a)
    if not a.is_finite:
        raise DomainError("tan of unbounded interval")
    # same branch iff no asymptote pi/2 + k*pi inside
    if math.floor((a.lo + _HALF_PI) / math.pi) != math.floor((a.hi + _HALF_PI) / math.pi):
        raise DomainError(f"tan over interval containing an asymptote: {a}")
    return _mk(math.tan(a.lo), math.tan(a.hi), rounding, steps=2)


def exp(a: Interval, rounding: RoundingPolicy = RoundingPolicy.NONE) -> Interval:
    _check(a)
    r = _mk(math.exp(a.lo), math.exp(a.hi), rounding, steps=2)
    return Interval(max(r.lo, 0.0), r.hi)


def log(a: Interval, rounding: RoundingPolicy = RoundingPolicy.NONE) -> Interval:
    _check(a)
    if a.lo <= 0.0:
        raise DomainError(f"log of interval touching non-positive values: {a}")
    return _mk(math.log(a.lo), math.log(a.hi), rounding, steps=2)


def sqrt(a: Interval, rounding: RoundingPolicy = RoundingPolicy.NONE) -> Interval:
    _check(a)
    if a.lo < 0.0:
        raise DomainError(f"sqrt of interval with negative values: {a}")
    r = _mk(math.sqrt(a.lo), math.sqrt(a.hi), rounding)
    return Interval(max(r.lo, 0.0), r.hi)


def abs_(a: Interval, rounding: RoundingPolicy = RoundingPolicy.NONE) -> Interval:
    _check(a)
    if a.lo <= 0.0 <= a.hi:
        return Interval(0.0, a.mag())
    m = min(abs(a.lo), abs(a.hi))
    return Interval(m, a.mag())


def intersect_iv(a: Interval, b: Interval) -> Interval | None:
    _check(a, b)
    lo, hi = max(a.lo, b.lo), min(a.hi, b.hi)
    return Interval(lo, hi) if lo <= hi else None


def hull_iv(a: Interval, b: Interval) -> Interval:
    _check(a, b)
    return Interval(min(a.lo, b.lo), max(a.hi, b.hi))


@dataclass(frozen=True, slots=True)
class Box:
    """Axis-aligned interval vector; dimension fixed by len(dims)."""

    dims: tuple[Interval, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        if not self.dims:
            raise ValueError("box needs at least one dimension")

    @classmethod
    def from_bounds(cls, bounds) -> "Box":
        """Build from [(lo1, hi1), (lo2, hi2), ...]."""
        return cls(tuple(Interval(lo, hi) for lo, hi in bounds))

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def lo(self) -> tuple[float, ...]:
        return tuple(iv.lo for iv in self.dims)

    @property
    def hi(self) -> tuple[float, ...]:
        return tuple(iv.hi for iv in self.dims)

    @property
    def midpoint(self) -> tuple[float, ...]:
        return tuple(iv.mid for iv in self.dims)

    @property
    def is_finite(self) -> bool:
        return all(iv.is_finite for iv in self.dims)

    def volume(self) -> float:
        v = 1.0
        for iv in self.dims:
            v *= iv.width
        return v

    def __repr__(self):
        return "x".join(repr(iv) for iv in self.dims)

    def to_text(self) -> str:
        """Comma-separated "lo1,hi1,lo2,hi2,..." with round-trip-exact floats."""
        return ",".join(f"{iv.lo!r},{iv.hi!r}" for iv in self.dims)

    @classmethod
    def from_text(cls, text: str) -> "Box":
        parts = [float(t) for t in text.split(",")]
        if len(parts) < 2 or len(parts) % 2 != 0:
            raise ValueError(f"box text needs an even number of endpoints: {text!r}")
        return cls(tuple(Interval(parts[i], parts[i + 1]) for i in range(0, len(parts), 2)))


def width(b: Box) -> float:
    """w([x]) = max side length."""
    return max(iv.width for iv in b.dims)


def widest_dim(b: Box) -> int:
    """Dimension attaining the width; ties broken by lowest index."""
    w = [iv.width for iv in b.dims]
    return w.index(max(w))


def bisect(b: Box) -> tuple[Box, Box]:
    """Split along the widest dimension at the exact midpoint."""
    if width(b) <= 0.0:
        raise DegenerateBox(f"cannot bisect zero-width box {b}")
    j = widest_dim(b)
    m = b.dims[j].mid
    left = list(b.dims)
    right = list(b.dims)
    left[j] = Interval(b.dims[j].lo, m)
    right[j] = Interval(m, b.dims[j].hi)
    return Box(tuple(left)), Box(tuple(right))


def intersect(a: Box, b: Box) -> Box | None:
    """Per-coordinate intersection; None when empty."""
    out = []
    for ia, ib in zip(a.dims, b.dims, strict=True):
        iv = intersect_iv(ia, ib)
        if iv is None:
            return None
        out.append(iv)
    return Box(tuple(out))


def hull(a: Box, b: Box) -> Box:
    return Box(tuple(hull_iv(ia, ib) for ia, ib in zip(a.dims, b.dims, strict=True)))


def contains_point(b: Box, x) -> bool:
    return all(iv.contains(float(xi)) for iv, xi in zip(b.dims, x, strict=True))


def contains_box(a: Box, b: Box) -> bool:
    return all(ia.contains_interval(ib) for ia, ib in zip(a.dims, b.dims, strict=True))


def intersects_box(a: Box, b: Box) -> bool:
    return all(ia.intersects(ib) for ia, ib in zip(a.dims, b.dims, strict=True))


def inflate(b: Box, r: float) -> Box:
    """Minkowski sum with the inf-norm ball of radius r."""
    if r < 0:
        raise NegativeRadius(f"inflate radius {r} < 0")
    return Box(tuple(Interval(iv.lo - r, iv.hi + r) for iv in b.dims))


def deflate(b: Box, r: float) -> Box | None:
    """Pontryagin difference with the inf-norm ball of radius r; None if empty."""
    if r < 0:
        raise NegativeRadius(f"deflate radius {r} < 0")
    out = []
    for iv in b.dims:
        lo, hi = iv.lo + r, iv.hi - r
        if lo > hi:
            return None
        out.append(Interval(lo, hi))
    return Box(tuple(out))


# op-name table used by the expression evaluator
UNARY_OPS = {
    "neg": neg,
    "sin": sin,
    "cos": cos,
    "tan": tan,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "abs": abs_,
}

BINARY_OPS = {"+": add, "-": sub, "*": mul, "/": div}
