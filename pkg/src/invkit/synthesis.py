"""Fixed-point synthesis of controlled invariant set approximations.

``cpre`` classifies a worklist of boxes against a target region: a box is
outside when every mode's interval image misses the target, inside when some
mode's image is contained (recording the full set of such modes, so the
eventual controller is least restrictive), and otherwise bisected until its
width drops below the precision epsilon, at which point it stays
undetermined.

``outer_approx`` repeats whole-worklist sweeps, dropping certainly-outside
boxes from the target until none is found: the result contains the maximal
controlled invariant set and shrinks monotonically with epsilon.
``inner_approx`` keeps only certified-inside boxes each sweep until the set
stabilizes; a nonempty fixed point is re-verified cell by cell and is then a
true controlled invariant set.  ``margin_probe`` shrinks epsilon until the
inner approximation becomes nonempty, a numerical probe of the robust
invariance margin.

Classification within a sweep is pure and order-independent: the worklist is
processed in chunks (LIFO by default, FIFO available for testing), each chunk
evaluated with vectorized interval kernels, optionally sharded across worker
threads.  Outputs are canonically sorted, so results are byte-identical
across worklist orders and worker counts.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IterationBudgetExceeded
from .interval import Box, Interval, RoundingPolicy, widest_dim, width
from .kernels import BatchDomainError
from .paving import ClassifiedPaving, ModeSet, Region
from .system import InclusionStrategy, SwitchedSystem, include_batch

_CHUNK = 4096
_PARALLEL_MIN = 2048


@dataclass(frozen=True, slots=True)
class SynthesisConfig:
    """Knobs for one synthesis run.

    epsilon is the minimum box width: undetermined boxes narrower than it are
    no longer bisected.  max_iterations caps both the number of fixed-point
    sweeps and the boxes processed within one sweep, purely as a guard
    against misconfiguration (termination is guaranteed regardless).
    """

    epsilon: float
    strategy: InclusionStrategy = InclusionStrategy.NATURAL
    rounding: RoundingPolicy = RoundingPolicy.OUTWARD
    max_iterations: int = 10**6
    parallel: int = 1

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.parallel < 1:
            raise ValueError("parallel must be >= 1")


@dataclass
class SynthesisResult:
    """Output of an approximation run.

    For inner runs every box in ``modes`` carries a nonempty ModeSet and
    ``certified`` records that the re-verification pass succeeded; outer runs
    additionally list the final undetermined (boundary) boxes.
    """

    region: Region
    modes: dict[Box, ModeSet]
    iterations: int
    boxes_processed: int
    wall_time: float
    certified: bool = False
    undetermined: list[Box] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return self.region.is_empty

    def mode_names(self, sys: SwitchedSystem, ms: ModeSet) -> list[str]:
        return [sys.modes[i].name for i in ms.indices()]


class _Classified:
    """Array-level cpre output: boxes plus per-box admissible-mode bitmasks."""

    __slots__ = ("in_lo", "in_hi", "in_mask", "un_lo", "un_hi", "out_lo", "out_hi", "processed")

    def __init__(self, n):
        z = np.zeros((0, n))
        self.in_lo, self.in_hi = z, z.copy()
        self.in_mask = np.zeros(0, dtype=np.uint64)
        self.un_lo, self.un_hi = z.copy(), z.copy()
        self.out_lo, self.out_hi = z.copy(), z.copy()
        self.processed = 0


def _classify_block(sys, target, lo, hi, cfg):
    """Mode-image tests for one block: (intersects_any, contains_mask)."""
    k = lo.shape[0]
    inter_any = np.zeros(k, dtype=bool)
    mask = np.zeros(k, dtype=np.uint64)
    for p in range(len(sys.modes)):
        try:
            ilo, ihi = include_batch(sys, p, lo, hi, cfg.strategy, cfg.rounding)
        except BatchDomainError as err:
            j = int(np.flatnonzero(err.mask)[0]) if err.mask.shape else 0
            box = Box(tuple(Interval(lo[j, d], hi[j, d]) for d in range(sys.n)))
            raise DomainError(
                f"mode {sys.modes[p].name!r} on box {box}: {err}"
            ) from err
        inter, cont = target.batch_relation(ilo, ihi)
        inter_any |= inter
        mask |= np.where(cont, np.uint64(1 << p), np.uint64(0))
    return inter_any, mask


def _classify_worklist(sys, target, lo, hi, cfg, discipline="lifo"):
    """Run the branch-and-prune worklist to completion over given boxes."""
    if len(sys.modes) > 64:
        raise ValueError("at most 64 modes supported")
    out = _Classified(sys.n)
    in_parts, un_parts, out_parts = [], [], []
    worklist = [(lo, hi)] if len(lo) else []
    pool = ThreadPoolExecutor(cfg.parallel) if cfg.parallel > 1 else None
    try:
        while worklist:
            clo, chi = worklist.pop() if discipline == "lifo" else worklist.pop(0)
            if len(clo) > _CHUNK:
                if discipline == "lifo":
                    worklist.append((clo[_CHUNK:], chi[_CHUNK:]))
                else:
                    worklist.insert(0, (clo[_CHUNK:], chi[_CHUNK:]))
                clo, chi = clo[:_CHUNK], chi[:_CHUNK]
            out.processed += len(clo)
            if out.processed > cfg.max_iterations:
                raise IterationBudgetExceeded(
                    f"sweep exceeded box budget {cfg.max_iterations}"
                )
            if pool is not None and len(clo) >= _PARALLEL_MIN:
                shards = np.array_split(np.arange(len(clo)), cfg.parallel)
                futs = [
                    pool.submit(_classify_block, sys, target, clo[s], chi[s], cfg)
                    for s in shards
                    if len(s)
                ]
                parts = [f.result() for f in futs]
                inter_any = np.concatenate([p[0] for p in parts])
                mask = np.concatenate([p[1] for p in parts])
            else:
                inter_any, mask = _classify_block(sys, target, clo, chi, cfg)
            inside = mask != 0
            outside = ~inter_any
            rest = ~inside & ~outside
            if inside.any():
                in_parts.append((clo[inside], chi[inside], mask[inside]))
            if outside.any():
                out_parts.append((clo[outside], chi[outside]))
            if rest.any():
                rlo, rhi = clo[rest], chi[rest]
                w = np.max(rhi - rlo, axis=1)
                narrow = w < cfg.epsilon
                if narrow.any():
                    un_parts.append((rlo[narrow], rhi[narrow]))
                split = ~narrow
                if split.any():
                    slo, shi = rlo[split], rhi[split]
                    j = np.argmax(shi - slo, axis=1)
                    rows = np.arange(len(slo))
                    mid = (slo[rows, j] + shi[rows, j]) / 2.0
                    llo, lhi = slo.copy(), shi.copy()
                    lhi[rows, j] = mid
                    rlo2, rhi2 = slo.copy(), shi.copy()
                    rlo2[rows, j] = mid
                    worklist.append((np.concatenate([llo, rlo2]), np.concatenate([lhi, rhi2])))
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    def _merge(parts, with_mask=False):
        if not parts:
            z = np.zeros((0, sys.n))
            return (z, z.copy(), np.zeros(0, dtype=np.uint64)) if with_mask else (z, z.copy())
        los = np.concatenate([p[0] for p in parts])
        his = np.concatenate([p[1] for p in parts])
        order = np.lexsort(tuple(los[:, d] for d in range(sys.n - 1, -1, -1)))
        if with_mask:
            masks = np.concatenate([p[2] for p in parts])
            return los[order], his[order], masks[order]
        return los[order], his[order]

    out.in_lo, out.in_hi, out.in_mask = _merge(in_parts, with_mask=True)
    out.un_lo, out.un_hi = _merge(un_parts)
    out.out_lo, out.out_hi = _merge(out_parts)
    return out


def _boxes_from_arrays(lo, hi):
    return [
        Box(tuple(Interval(lo[i, d], hi[i, d]) for d in range(lo.shape[1])))
        for i in range(len(lo))
    ]


def _arrays_from_boxes(boxes, n):
    if not boxes:
        z = np.zeros((0, n))
        return z, z.copy()
    lo = np.array([b.lo for b in boxes], dtype=float)
    hi = np.array([b.hi for b in boxes], dtype=float)
    return lo, hi


def cpre(
    sys: SwitchedSystem,
    targetY: Region,
    boxesX: list[Box],
    cfg: SynthesisConfig,
    discipline: str = "lifo",
) -> ClassifiedPaving:
    """One branch-and-prune classification pass (the paper's CPre).

    ``discipline`` ("lifo" or "fifo") fixes the worklist order for testing;
    the classified sets do not depend on it.
    """
    for b in boxesX:
        if b.n != sys.n:
            raise ValueError(f"box dimension {b.n} != system dimension {sys.n}")
        if not b.is_finite:
            raise ValueError(f"unbounded box rejected: {b}")
    lo, hi = _arrays_from_boxes(boxesX, sys.n)
    res = _classify_worklist(sys, targetY, lo, hi, cfg, discipline)
    nmodes = len(sys.modes)
    inside = [
        (b, ModeSet(int(m), nmodes))
        for b, m in zip(_boxes_from_arrays(res.in_lo, res.in_hi), res.in_mask)
    ]
    return ClassifiedPaving(
        inside=inside,
        undetermined=_boxes_from_arrays(res.un_lo, res.un_hi),
        outside=_boxes_from_arrays(res.out_lo, res.out_hi),
    )


def depth_schedule(root: Box, epsilon: float) -> tuple[int, ...]:
    """Per-dimension halving counts after canonical bisection stops at epsilon."""
    dims = list(root.dims)
    k = [0] * len(dims)
    b = Box(tuple(dims))
    while width(b) >= epsilon:
        j = widest_dim(b)
        m = b.dims[j].mid
        d = list(b.dims)
        d[j] = Interval(d[j].lo, m)
        k[j] += 1
        b = Box(tuple(d))
    return tuple(k)


def _prepare(omega: Region, cfg: SynthesisConfig) -> Region:
    for r in omega.roots:
        if not r.is_finite:
            raise ValueError(f"unbounded root rejected: {r}")
    depths = None
    for r in omega.roots:
        d = depth_schedule(r, cfg.epsilon)
        depths = d if depths is None else tuple(max(a, b) for a, b in zip(depths, d))
    return omega.with_min_depths(depths)


def _finalize(sys, region, classified, iterations, processed, t0, certified):
    nmodes = len(sys.modes)
    boxes = _boxes_from_arrays(classified.in_lo, classified.in_hi)
    modes = {
        b: ModeSet(int(m), nmodes) for b, m in zip(boxes, classified.in_mask)
    }
    return SynthesisResult(
        region=region,
        modes=modes,
        iterations=iterations,
        boxes_processed=processed,
        wall_time=time.perf_counter() - t0,
        certified=certified,
        undetermined=_boxes_from_arrays(classified.un_lo, classified.un_hi),
    )


def outer_approx(sys: SwitchedSystem, omega: Region, cfg: SynthesisConfig) -> SynthesisResult:
    """Shrink omega by certainly-escaping boxes until a sweep removes nothing.

    The result region contains the maximal controlled invariant set; inside
    boxes are re-classified every sweep because the target shrinks.
    """
    t0 = time.perf_counter()
    y = _prepare(omega, cfg)
    ids, lo, hi = y.leaf_arrays()
    iterations = 0
    processed = 0
    while True:
        iterations += 1
        if iterations > cfg.max_iterations:
            raise IterationBudgetExceeded(
                f"outer_approx exceeded {cfg.max_iterations} sweeps",
                partial=_finalize(sys, y, _Classified(sys.n), iterations - 1, processed, t0, False),
            )
        res = _classify_worklist(sys, y, lo, hi, cfg)
        processed += res.processed
        if len(res.out_lo) == 0:
            return _finalize(sys, y, res, iterations, processed, t0, certified=False)
        y = y.remove_cells(y.locate_roots(res.out_lo, res.out_hi), res.out_lo, res.out_hi)
        if y.is_empty:
            return _finalize(sys, y, _Classified(sys.n), iterations, processed, t0, False)
        ids, lo, hi = y.leaf_arrays()


def inner_approx(sys: SwitchedSystem, omega: Region, cfg: SynthesisConfig) -> SynthesisResult:
    """Keep only certified boxes each sweep until the set stabilizes.

    A nonempty result is re-verified (every cell must have a recorded mode
    whose image stays inside the result) and is then controlled invariant.
    An empty result means no rho1*epsilon-robust invariant subset exists.
    """
    t0 = time.perf_counter()
    y = _prepare(omega, cfg)
    ids, lo, hi = y.leaf_arrays()
    iterations = 0
    processed = 0
    while True:
        iterations += 1
        if iterations > cfg.max_iterations:
            raise IterationBudgetExceeded(
                f"inner_approx exceeded {cfg.max_iterations} sweeps",
                partial=_finalize(sys, y, _Classified(sys.n), iterations - 1, processed, t0, False),
            )
        res = _classify_worklist(sys, y, lo, hi, cfg)
        processed += res.processed
        removed_lo = np.concatenate([res.un_lo, res.out_lo])
        removed_hi = np.concatenate([res.un_hi, res.out_hi])
        if len(removed_lo) == 0:
            result = _finalize(sys, y, res, iterations, processed, t0, certified=False)
            if not result.is_empty:
                _verify_certificate(sys, result, cfg)
                result.certified = True
            return result
        y = y.remove_cells(y.locate_roots(removed_lo, removed_hi), removed_lo, removed_hi)
        if y.is_empty:
            return _finalize(sys, y, _Classified(sys.n), iterations, processed, t0, False)
        ids, lo, hi = y.leaf_arrays()


def _verify_certificate(sys: SwitchedSystem, result: SynthesisResult, cfg: SynthesisConfig) -> None:
    """Mandatory re-verification of a nonempty inner approximation."""
    from .errors import CertificationFailure

    boxes = list(result.modes.keys())
    lo, hi = _arrays_from_boxes(boxes, sys.n)
    ok = np.zeros(len(boxes), dtype=bool)
    for p in range(len(sys.modes)):
        rows = np.array([p in result.modes[b] for b in boxes])
        if not rows.any():
            continue
        ilo, ihi = include_batch(sys, p, lo[rows], hi[rows], cfg.strategy, cfg.rounding)
        _, cont = result.region.batch_relation(ilo, ihi)
        sel = np.flatnonzero(rows)
        ok[sel[cont]] = True
    if not ok.all():
        bad = boxes[int(np.flatnonzero(~ok)[0])]
        raise CertificationFailure(f"uncovered box in certified result: {bad}")


def margin_probe(
    sys: SwitchedSystem,
    omega: Region,
    eps0: float,
    shrink: float,
    eps_min: float,
    base: SynthesisConfig | None = None,
) -> tuple[float | None, SynthesisResult | None]:
    """Shrink epsilon geometrically until the inner approximation is nonempty.

    Returns (epsilon_found, result) on success, (None, None) if epsilon fell
    below eps_min; rho1*epsilon_found then lower-probes the robust invariance
    margin of the found set.
    """
    if not (eps0 > eps_min > 0):
        raise ValueError(f"need eps0 > eps_min > 0, got {eps0}, {eps_min}")
    if not (0 < shrink < 1):
        raise ValueError(f"shrink must be in (0, 1), got {shrink}")
    eps = eps0
    while eps >= eps_min:
        cfg = SynthesisConfig(
            epsilon=eps,
            strategy=base.strategy if base else InclusionStrategy.NATURAL,
            rounding=base.rounding if base else RoundingPolicy.OUTWARD,
            max_iterations=base.max_iterations if base else 10**6,
            parallel=base.parallel if base else 1,
        )
        result = inner_approx(sys, omega, cfg)
        if not result.is_empty:
            return eps, result
        eps *= shrink
    return None, None


def default_workers() -> int:
    """Worker-count default: INVKIT_WORKERS env var, else 1."""
    try:
        return max(1, int(os.environ.get("INVKIT_WORKERS", "1")))
    except ValueError:
        return 1
