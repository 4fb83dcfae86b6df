"""Switched systems: modes, inclusion functions, Lipschitz bounds, helpers.

A system is a finite ordered list of modes, each an n-vector of update
expressions x_{k+1} = f_p(x_k).  This module evaluates interval enclosures of
mode images (natural or mean-value form), bounds the dynamics' Lipschitz
constant in the inf-norm from the interval Jacobian, and provides the two
discretization recipes used by the bundled benchmarks (exact linear-affine
via the augmented matrix exponential, and a symbolic Euler step) plus a
quadratic-Lyapunov robust-margin estimator for single-mode linear systems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import expr as ex
from . import interval as iv
from . import kernels
from .errors import NonDifferentiable, NotConverging, OriginOutside
from .expr import Binary, Const, Expr, Var
from .interval import Box, Interval, RoundingPolicy


class InclusionStrategy(Enum):
    NATURAL = "natural"
    MEANVALUE = "meanvalue"


@dataclass(frozen=True, slots=True)
class Mode:
    name: str
    update: tuple[Expr, ...]


@dataclass(frozen=True)
class SwitchedSystem:
    """x_{k+1} = f_{p_k}(x_k) with p_k drawn from a finite ordered mode set."""

    n: int
    modes: tuple[Mode, ...]
    _jacobians: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("state dimension must be >= 1")
        if not self.modes:
            raise ValueError("mode set must be nonempty")
        names = [m.name for m in self.modes]
        if len(set(names)) != len(names):
            raise ValueError(f"mode names must be unique: {names}")
        for m in self.modes:
            if len(m.update) != self.n:
                raise ValueError(f"mode {m.name!r} has {len(m.update)} coordinates, expected {self.n}")
            for e in m.update:
                bad = {j for j in ex.variables(e) if j > self.n}
                if bad:
                    raise ValueError(f"mode {m.name!r} references x{max(bad)} beyond dimension {self.n}")

    @property
    def mode_names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.modes)

    def mode_index(self, name: str) -> int:
        return self.mode_names.index(name)

    def differentiable(self, p: int) -> bool:
        return not any(ex.contains_abs(e) for e in self.modes[p].update)

    def jacobian(self, p: int) -> tuple[tuple[Expr, ...], ...]:
        """Symbolic Jacobian of mode p, cached; rows follow coordinates."""
        if p not in self._jacobians:
            if not self.differentiable(p):
                raise NonDifferentiable(f"mode {self.modes[p].name!r} contains abs")
            self._jacobians[p] = tuple(
                tuple(ex.differentiate(e, j + 1) for j in range(self.n))
                for e in self.modes[p].update
            )
        return self._jacobians[p]

    def step(self, p: int, x) -> tuple[float, ...]:
        return tuple(ex.eval_real(e, x) for e in self.modes[p].update)


@dataclass(frozen=True, slots=True)
class LipschitzEstimate:
    rho1: float
    domain: Box


def include(
    sys: SwitchedSystem,
    p: int,
    b: Box,
    strat: InclusionStrategy = InclusionStrategy.NATURAL,
    rounding: RoundingPolicy = RoundingPolicy.NONE,
) -> Box:
    """Interval enclosure of f_p over the box b.

    NATURAL applies the natural inclusion coordinate-wise.  MEANVALUE returns
    f_p(m) + [J_p](b)·(b - m) around the midpoint m, which contracts widths
    per the interval-Jacobian bound; modes containing abs fall back to the
    natural form (their Jacobian does not exist).
    """
    if b.n != sys.n:
        raise ValueError(f"box dimension {b.n} != system dimension {sys.n}")
    mode = sys.modes[p]
    if strat is InclusionStrategy.NATURAL or not sys.differentiable(p):
        return Box(tuple(ex.eval_interval(e, b, rounding) for e in mode.update))
    m = b.midpoint
    jac = sys.jacobian(p)
    offsets = tuple(iv.sub(bj, Interval(mj, mj), rounding) for bj, mj in zip(b.dims, m))
    out = []
    for i, e in enumerate(mode.update):
        acc = Interval(ex.eval_real(e, m), ex.eval_real(e, m))
        for j in range(sys.n):
            jij = ex.eval_interval(jac[i][j], b, rounding)
            acc = iv.add(acc, iv.mul(jij, offsets[j], rounding), rounding)
        out.append(acc)
    return Box(tuple(out))


def include_batch(sys, p, lo, hi, strat, rounding):
    """Vectorized :func:`include` over (k, n) endpoint arrays; returns (k, n) pairs."""
    mode = sys.modes[p]
    k = lo.shape[0]
    out_lo = np.empty((k, sys.n))
    out_hi = np.empty((k, sys.n))
    if strat is InclusionStrategy.NATURAL or not sys.differentiable(p):
        for i, e in enumerate(mode.update):
            out_lo[:, i], out_hi[:, i] = kernels.eval_interval_batch(e, lo, hi, rounding)
        return out_lo, out_hi
    mid = (lo + hi) / 2.0
    jac = sys.jacobian(p)
    off = (kernels.sub((lo.T, hi.T), (mid.T, mid.T), rounding))  # (n, k) pairs
    for i, e in enumerate(mode.update):
        fm = kernels.eval_real_batch(e, mid)
        acc = (fm, fm.copy())
        for j in range(sys.n):
            jij = kernels.eval_interval_batch(jac[i][j], lo, hi, rounding)
            acc = kernels.add(acc, kernels.mul(jij, (off[0][j], off[1][j]), rounding), rounding)
        out_lo[:, i], out_hi[:, i] = acc
    return out_lo, out_hi


def estimate_rho1(sys: SwitchedSystem, domain) -> LipschitzEstimate:
    """Inf-norm Lipschitz bound: max over modes of the interval-Jacobian
    row-sum magnitude bound on the hull box of the domain."""
    hull_box = domain if isinstance(domain, Box) else domain.hull()
    if hull_box is None:
        raise ValueError("empty domain")
    rho = 0.0
    for p in range(len(sys.modes)):
        jac = sys.jacobian(p)  # raises NonDifferentiable on abs
        for i in range(sys.n):
            row = 0.0
            for j in range(sys.n):
                row += ex.eval_interval(jac[i][j], hull_box).mag()
            rho = max(rho, row)
    return LipschitzEstimate(rho1=rho, domain=hull_box)


def _series_expm(m: np.ndarray, tol: float = 1e-14, max_terms: int = 200) -> np.ndarray:
    """Truncated Taylor series for e^M, terms added until below tol."""
    n = m.shape[0]
    acc = np.eye(n)
    term = np.eye(n)
    for k in range(1, max_terms):
        term = term @ m / k
        acc = acc + term
        if np.max(np.abs(term)) < tol:
            return acc
    raise NotConverging("matrix exponential series did not converge")


def expm(m: np.ndarray) -> np.ndarray:
    """Scaling-and-squaring matrix exponential (squares until |M|/2^s < 0.5)."""
    m = np.asarray(m, dtype=float)
    norm = np.max(np.sum(np.abs(m), axis=1)) if m.size else 0.0
    s = 0
    while norm / (2.0**s) >= 0.5:
        s += 1
    e = _series_expm(m / (2.0**s))
    for _ in range(s):
        e = e @ e
    return e


def _affine_expr(row: np.ndarray, offset: float, n: int) -> Expr:
    """sum_j row[j]*xj + offset as a folded expression tree."""
    e: Expr | None = None
    for j in range(n):
        c = float(row[j])
        if c == 0.0:
            continue
        term = Var(j + 1) if c == 1.0 else Binary("*", Const(c), Var(j + 1))
        e = term if e is None else Binary("+", e, term)
    if offset != 0.0 or e is None:
        term = Const(float(offset))
        e = term if e is None else Binary("+", e, term)
    return e


def discretize_linear_affine(A, b, tau: float, name: str = "mode") -> Mode:
    """Exact discretization of dx/dt = A x + b over a sampling period tau.

    Uses the augmented (n+1)x(n+1) exponential
    exp(tau*[[A, b], [0, 0]]) = [[e^{A tau}, int_0^tau e^{A s} ds b], [0, 1]].
    """
    if tau <= 0:
        raise ValueError(f"sampling time must be positive, got {tau}")
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = A
    aug[:n, n] = b
    e = expm(aug * tau)
    update = tuple(ex.simplify(_affine_expr(e[i, :n], e[i, n], n)) for i in range(n))
    return Mode(name=name, update=update)


def discretize_euler(field: list[Expr] | tuple[Expr, ...], tau: float, name: str = "mode") -> Mode:
    """Forward-Euler step x + tau*field(x) built symbolically."""
    if tau <= 0:
        raise ValueError(f"sampling time must be positive, got {tau}")
    update = tuple(
        Binary("+", Var(i + 1), Binary("*", Const(float(tau)), e)) for i, e in enumerate(field)
    )
    return Mode(name=name, update=update)


def solve_discrete_lyapunov(A: np.ndarray, Q: np.ndarray, tol: float = 1e-12, max_terms: int = 20000) -> np.ndarray:
    """P = sum_k (A^T)^k Q A^k, summed until the term inf-norm drops below tol."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    P = Q.copy()
    term = Q.copy()
    for _ in range(max_terms):
        term = A.T @ term @ A
        norm = np.max(np.sum(np.abs(term), axis=1))
        if norm < tol:
            return P + term
        if norm > 1e14:
            break
        P = P + term
    raise NotConverging("Lyapunov series did not converge (spectral radius >= 1)")


def _inscribed_level(P: np.ndarray, omega: Box) -> float:
    """Largest gamma^2 with {x^T P x <= gamma^2} inside the box omega.

    Per facet x_i = c: the ellipsoid's extent along axis i is
    gamma*sqrt((P^{-1})_{ii}), so gamma^2 = min_i c_i^2 / (P^{-1})_{ii} with
    c_i the tighter of the two facet offsets.
    """
    Pinv = np.linalg.inv(P)
    g2 = math.inf
    for i, d in enumerate(omega.dims):
        if not (d.lo < 0.0 < d.hi):
            raise OriginOutside(f"level-set construction needs the origin inside omega, dim {i + 1} is {d}")
        bound = min(-d.lo, d.hi)
        g2 = min(g2, bound * bound / Pinv[i, i])
    return g2


def _inf_distance_to_level_complement(P: np.ndarray, g2: float, y: np.ndarray) -> float:
    """sup r with the inf-ball B_r(y) inside {x^T P x <= g2}.

    The quadratic over a box peaks at a vertex, so solve per sign pattern s
    in {-1, 1}^n: (s^T P s) r^2 + 2 (s^T P y) r + (y^T P y - g2) = 0 and take
    the smallest positive root.
    """
    c0 = float(y @ P @ y) - g2
    if c0 > 0.0:
        return 0.0
    n = len(y)
    best = math.inf
    for bits in range(2**n):
        s = np.array([1.0 if bits >> i & 1 else -1.0 for i in range(n)])
        a = float(s @ P @ s)
        bq = float(s @ P @ y)
        disc = bq * bq - a * c0
        r = (-bq + math.sqrt(max(disc, 0.0))) / a
        best = min(best, r)
    return max(best, 0.0)


def lyapunov_margin(A, Q, omega: Box, samples: int = 10000) -> tuple[np.ndarray, float, float]:
    """Quadratic-Lyapunov margin estimate for a stable single-mode system.

    Solves A^T P A - P + Q = 0 by series, inscribes the largest level set
    {x^T P x <= gamma^2} in omega, and estimates the robust invariance margin
    r as the minimum over sampled level-set boundary points x of the inf-norm
    distance from A x to the complement of the level set.

    Returns (P, gamma, r).
    """
    A = np.asarray(A, dtype=float)
    P = solve_discrete_lyapunov(A, Q)
    g2 = _inscribed_level(P, omega)
    gamma = math.sqrt(g2)
    n = A.shape[0]
    # boundary points x = gamma * L^{-T} u with P = L L^T and |u|_2 = 1
    L = np.linalg.cholesky(P)
    if n == 2:
        ang = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
        u = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        rng = np.random.default_rng(0)
        u = rng.standard_normal((samples, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
    pts = gamma * np.linalg.solve(L.T, u.T).T
    r = math.inf
    for x in pts:
        r = min(r, _inf_distance_to_level_complement(P, g2, A @ x))
    return P, gamma, r
