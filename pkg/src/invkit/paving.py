"""Regions as finite unions of bisection-aligned boxes.

A region is rooted at one or more disjoint boxes (a forest when the target
set is given as several boxes).  Every box ever produced by the synthesis
loop comes from recursive midpoint bisection of a root, so each root carries
a dyadic coordinate lattice per dimension; the region is stored as a boolean
occupancy grid over the finest lattice cells.  The canonical reduced
subdivision tree (widest dimension first, midpoint split, lowest-index
tie-break, sibling leaves merged) is recovered from the grid on demand, so
equality, leaf enumeration and serialization are order-independent and
byte-stable.

Set semantics are closed: boxes include their faces, shared faces are
covered by either neighbour, and face contact counts as intersection.
Containment of a query box ignores measure-zero contact with OUT cells
except along dimensions where the query itself is degenerate.

Queries never require the query box to be aligned; only boxes that build or
edit a region must sit on the lattice (``MisalignedBox`` otherwise).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import MisalignedBox
from .interval import Box, Interval

_MAX_EXTRA_DEEPEN = 4


@dataclass(frozen=True, slots=True)
class ModeSet:
    """Subset of the system's ordered mode list, stored as a bitmask."""

    mask: int
    size: int

    def __post_init__(self):
        if self.mask < 0 or self.mask >> self.size:
            raise ValueError(f"mask {self.mask:#x} out of range for {self.size} modes")

    @classmethod
    def from_indices(cls, indices, size: int) -> "ModeSet":
        m = 0
        for i in indices:
            if not 0 <= i < size:
                raise ValueError(f"mode index {i} out of range")
            m |= 1 << i
        return cls(m, size)

    @property
    def is_empty(self) -> bool:
        return self.mask == 0

    def __contains__(self, i: int) -> bool:
        return bool(self.mask >> i & 1)

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.size) if self.mask >> i & 1)

    def union(self, other: "ModeSet") -> "ModeSet":
        if self.size != other.size:
            raise ValueError("mode sets over different mode lists")
        return ModeSet(self.mask | other.mask, self.size)

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def __repr__(self):
        return "{" + ",".join(str(i) for i in self.indices()) + "}"


@dataclass(frozen=True, slots=True)
class ClassifiedPaving:
    """CPre output: certified boxes with admissible modes, straddlers, rejects."""

    inside: list[tuple[Box, ModeSet]]
    undetermined: list[Box]
    outside: list[Box]


def _dyadic_coords(lo: float, hi: float, k: int) -> np.ndarray:
    """Lattice coordinates after k rounds of midpoint bisection."""
    c = np.array([lo, hi], dtype=float)
    for _ in range(k):
        out = np.empty(2 * len(c) - 1)
        out[0::2] = c
        out[1::2] = (c[:-1] + c[1:]) / 2.0
        c = out
    return c


class _RootPaving:
    """Occupancy grid over one root box's dyadic lattice."""

    __slots__ = ("root", "depths", "coords", "grid", "_sat")

    def __init__(self, root: Box, depths: tuple[int, ...], grid: np.ndarray | None = None, fill: bool = False):
        self.root = root
        self.depths = tuple(depths)
        self.coords = [_dyadic_coords(d.lo, d.hi, k) for d, k in zip(root.dims, self.depths)]
        shape = tuple(1 << k for k in self.depths)
        if grid is None:
            grid = np.full(shape, fill, dtype=bool)
        assert grid.shape == shape
        self.grid = grid
        self._sat = None

    def copy(self) -> "_RootPaving":
        return _RootPaving(self.root, self.depths, self.grid.copy())

    def deepen_to(self, depths: tuple[int, ...]) -> "_RootPaving":
        grid = self.grid
        for d, (old, new) in enumerate(zip(self.depths, depths)):
            if new > old:
                grid = np.repeat(grid, 1 << (new - old), axis=d)
        return _RootPaving(self.root, depths, grid)

    def sat(self) -> np.ndarray:
        """Summed-area table: sat[i1..in] = #IN cells in [0,i1)x...x[0,in)."""
        if self._sat is None:
            s = self.grid.astype(np.int64)
            for ax in range(s.ndim):
                s = np.cumsum(s, axis=ax)
            self._sat = np.pad(s, [(1, 0)] * s.ndim)
        return self._sat

    def rect_counts(self, lo_idx: np.ndarray, hi_idx: np.ndarray) -> np.ndarray:
        """#IN cells in [lo_idx, hi_idx) per row; empty ranges count zero."""
        sat = self.sat()
        n = self.grid.ndim
        lo_idx = np.maximum(lo_idx, 0)
        hi_idx = np.minimum(hi_idx, np.array(self.grid.shape))
        valid = np.all(hi_idx > lo_idx, axis=1)
        lo_c = np.where(valid[:, None], lo_idx, 0)
        hi_c = np.where(valid[:, None], hi_idx, 0)
        total = np.zeros(len(lo_idx), dtype=np.int64)
        for bits in range(1 << n):
            pick = [(hi_c[:, d] if bits >> d & 1 else lo_c[:, d]) for d in range(n)]
            sign = 1 if (n - bin(bits).count("1")) % 2 == 0 else -1
            total += sign * sat[tuple(pick)]
        return np.where(valid, total, 0)

    # --- index mapping -----------------------------------------------------

    def cell_index(self, d: int, value: float) -> int | None:
        """Exact lattice index of a coordinate, None if off-lattice."""
        c = self.coords[d]
        i = int(np.searchsorted(c, value))
        if i < len(c) and c[i] == value:
            return i
        return None

    def closed_range(self, d: int, a: float, b: float) -> tuple[int, int]:
        """Cells whose closed interval meets [a, b]; half-open index range."""
        c = self.coords[d]
        i0 = int(np.searchsorted(c, a, side="left")) - 1
        i1 = int(np.searchsorted(c, b, side="right")) - 1
        return max(i0, 0), min(i1, len(c) - 2) + 1

    def strict_range(self, d: int, a: float, b: float) -> tuple[int, int]:
        """Cells overlapping (a, b) with positive measure; half-open range."""
        c = self.coords[d]
        i0 = int(np.searchsorted(c, a, side="right")) - 1
        i1 = int(np.searchsorted(c, b, side="left")) - 1
        return max(i0, 0), min(i1, len(c) - 2) + 1


def _canonical_widest(widths: np.ndarray) -> int:
    return int(np.argmax(widths))  # argmax takes the first max: lowest index


class Region:
    """Closed union of bisection-aligned boxes over one or more root boxes."""

    __slots__ = ("_pavings",)

    def __init__(self, pavings: list[_RootPaving]):
        self._pavings = sorted(pavings, key=lambda p: p.root.lo)

    # --- constructors ------------------------------------------------------

    @classmethod
    def full(cls, roots, depths: tuple[int, ...] | None = None) -> "Region":
        roots = list(roots)
        n = roots[0].n
        d = depths if depths is not None else (0,) * n
        return cls([_RootPaving(r, d, fill=True) for r in roots])

    @classmethod
    def empty(cls, roots, depths: tuple[int, ...] | None = None) -> "Region":
        roots = list(roots)
        d = depths if depths is not None else (0,) * roots[0].n
        return cls([_RootPaving(r, d, fill=False) for r in roots])

    def blank_copy(self) -> "Region":
        return Region([_RootPaving(p.root, p.depths, fill=False) for p in self._pavings])

    # --- basic properties --------------------------------------------------

    @property
    def roots(self) -> tuple[Box, ...]:
        return tuple(p.root for p in self._pavings)

    @property
    def n(self) -> int:
        return self._pavings[0].root.n

    @property
    def is_empty(self) -> bool:
        return not any(p.grid.any() for p in self._pavings)

    def hull(self) -> Box | None:
        """Tightest box around the IN set, None when empty."""
        lo = [math.inf] * self.n
        hi = [-math.inf] * self.n
        for p in self._pavings:
            if not p.grid.any():
                continue
            for d in range(self.n):
                axes = tuple(a for a in range(self.n) if a != d)
                occ = p.grid.any(axis=axes) if axes else p.grid
                idx = np.flatnonzero(occ)
                lo[d] = min(lo[d], p.coords[d][idx[0]])
                hi[d] = max(hi[d], p.coords[d][idx[-1] + 1])
        if math.inf in lo:
            return None
        return Box(tuple(Interval(a, b) for a, b in zip(lo, hi)))

    # --- editing (always returns a new Region) ------------------------------

    def _locate(self, b: Box) -> tuple[int, "_RootPaving"]:
        for i, p in enumerate(self._pavings):
            r = p.root
            if all(rd.lo <= bd.lo and bd.hi <= rd.hi for rd, bd in zip(r.dims, b.dims)):
                return i, p
        raise MisalignedBox(f"box {b} lies in no root of the region")

    @staticmethod
    def _map_box(p: _RootPaving, b: Box) -> tuple["_RootPaving", tuple[slice, ...]]:
        """Exact cell-slice of an aligned box, deepening the lattice if needed."""
        for _ in range(_MAX_EXTRA_DEEPEN + 1):
            idx = []
            for d, dim in enumerate(b.dims):
                i0 = p.cell_index(d, dim.lo)
                i1 = p.cell_index(d, dim.hi)
                if i0 is None or i1 is None or i1 <= i0:
                    idx = None
                    break
                idx.append(slice(i0, i1))
            if idx is not None:
                return p, tuple(idx)
            p = p.deepen_to(tuple(k + 1 for k in p.depths))
        raise MisalignedBox(f"box {b} is not bisection-aligned with root {p.root}")

    def _edit(self, boxes, value: bool) -> "Region":
        pavings = [pv.copy() for pv in self._pavings]
        for b in boxes:
            i, _ = self._locate(b)
            pavings[i], sl = self._map_box(pavings[i], b)
            pavings[i].grid[sl] = value
        return Region(pavings)

    def add_boxes(self, boxes) -> "Region":
        return self._edit(boxes, True)

    def remove_boxes(self, boxes) -> "Region":
        return self._edit(boxes, False)

    # --- queries ------------------------------------------------------------

    def contains_point(self, x) -> bool:
        x = tuple(float(v) for v in x)
        q = Box(tuple(Interval(v, v) for v in x))
        return self.intersects_box(q)

    def intersects_box(self, q: Box) -> bool:
        """True iff q meets the closed IN union (face contact counts)."""
        for p in self._pavings:
            ranges = []
            ok = True
            for d, dim in enumerate(q.dims):
                i0, i1 = p.closed_range(d, dim.lo, dim.hi)
                if i1 <= i0:
                    ok = False
                    break
                ranges.append(slice(i0, i1))
            if ok and bool(p.grid[tuple(ranges)].any()):
                return True
        return False

    def contains_box(self, q: Box) -> bool:
        """True iff q is a subset of the closed IN union."""
        pieces = [q]
        for p in self._pavings:
            remaining = []
            for piece in pieces:
                inside, outside = _split_against_root(piece, p.root, q)
                remaining.extend(outside)
                if inside is not None and not _covered_by(p, inside, q):
                    return False
            pieces = remaining
            if not pieces:
                return True
        return not pieces

    def batch_relation(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(intersects, contains) flags for k query boxes given as (k, n) arrays.

        Same semantics as the scalar queries; used by the synthesis sweep.
        """
        k = lo.shape[0]
        inter = np.zeros(k, dtype=bool)
        contained = np.zeros(k, dtype=bool)
        degenerate = np.any(hi <= lo, axis=1)
        for p in self._pavings:
            c0 = np.array([c[0] for c in p.coords])
            c1 = np.array([c[-1] for c in p.coords])
            lo_c = np.empty((k, self.n), dtype=np.int64)
            hi_c = np.empty((k, self.n), dtype=np.int64)
            lo_s = np.empty((k, self.n), dtype=np.int64)
            hi_s = np.empty((k, self.n), dtype=np.int64)
            for d in range(self.n):
                c = p.coords[d]
                lo_c[:, d] = np.searchsorted(c, lo[:, d], side="left") - 1
                hi_c[:, d] = np.searchsorted(c, hi[:, d], side="right")
                lo_s[:, d] = np.searchsorted(c, lo[:, d], side="right") - 1
                hi_s[:, d] = np.searchsorted(c, hi[:, d], side="left")
            inter |= p.rect_counts(lo_c, hi_c) > 0
            if len(self._pavings) == 1:
                in_root = np.all((lo >= c0) & (hi <= c1), axis=1)
                cnt = p.rect_counts(lo_s, hi_s)
                shape = np.array(p.grid.shape)
                sides = np.minimum(hi_s, shape) - np.maximum(lo_s, 0)
                area = np.where(np.all(sides > 0, axis=1), np.prod(np.maximum(sides, 0), axis=1), 0)
                contained = in_root & ~degenerate & (area > 0) & (cnt == area)
        fallback = np.flatnonzero(degenerate) if len(self._pavings) == 1 else np.arange(k)
        for r in fallback:
            qb = Box(tuple(Interval(lo[r, d], hi[r, d]) for d in range(self.n)))
            contained[r] = self.contains_box(qb)
        return inter, contained

    # --- canonical structure -------------------------------------------------

    def leaves_in(self) -> list[Box]:
        """IN leaves of the canonical reduced tree, in lexicographic order."""
        out = []
        for p in self._pavings:
            out.extend(_reduce_leaves(p))
        return out

    def leaf_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Reduced IN leaves as (root_ids, lo, hi) arrays in canonical order."""
        ids, los, his = [], [], []
        for i, p in enumerate(self._pavings):
            lo_idx, size_idx = _reduce_leaf_indices(p)
            k = len(lo_idx)
            if k == 0:
                continue
            lo = np.empty((k, self.n))
            hi = np.empty((k, self.n))
            for d in range(self.n):
                lo[:, d] = p.coords[d][lo_idx[:, d]]
                hi[:, d] = p.coords[d][lo_idx[:, d] + size_idx[:, d]]
            ids.append(np.full(k, i, dtype=np.int64))
            los.append(lo)
            his.append(hi)
        if not ids:
            z = np.zeros((0, self.n))
            return np.zeros(0, dtype=np.int64), z, z.copy()
        return np.concatenate(ids), np.concatenate(los), np.concatenate(his)

    def locate_roots(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Root index per box; every box must sit inside exactly one root."""
        k = lo.shape[0]
        ids = np.full(k, -1, dtype=np.int64)
        for i, p in enumerate(self._pavings):
            c0 = np.array([d.lo for d in p.root.dims])
            c1 = np.array([d.hi for d in p.root.dims])
            hit = np.all((lo >= c0) & (hi <= c1), axis=1) & (ids < 0)
            ids[hit] = i
        if np.any(ids < 0):
            j = int(np.flatnonzero(ids < 0)[0])
            raise MisalignedBox(
                f"box {Box(tuple(Interval(lo[j, d], hi[j, d]) for d in range(self.n)))} lies in no root"
            )
        return ids

    def remove_cells(self, root_ids: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> "Region":
        """Clear aligned boxes given as arrays; returns a new Region."""
        pavings = [p.copy() for p in self._pavings]
        for i in range(len(pavings)):
            rows = np.flatnonzero(root_ids == i)
            if not len(rows):
                continue
            p = pavings[i]
            k = len(rows)
            i0 = np.empty((k, self.n), dtype=np.int64)
            i1 = np.empty((k, self.n), dtype=np.int64)
            aligned = np.ones(k, dtype=bool)
            for d in range(self.n):
                c = p.coords[d]
                a = np.searchsorted(c, lo[rows, d])
                b = np.searchsorted(c, hi[rows, d])
                a_c = np.minimum(a, len(c) - 1)
                b_c = np.minimum(b, len(c) - 1)
                aligned &= (c[a_c] == lo[rows, d]) & (c[b_c] == hi[rows, d]) & (b > a)
                i0[:, d] = a_c
                i1[:, d] = b_c
            single = aligned & np.all(i1 - i0 == 1, axis=1)
            if single.any():
                p.grid[tuple(i0[single, d] for d in range(self.n))] = False
            for r in np.flatnonzero(aligned & ~single):
                p.grid[tuple(slice(i0[r, d], i1[r, d]) for d in range(self.n))] = False
            for r in np.flatnonzero(~aligned):
                b = Box(tuple(Interval(lo[rows[r], d], hi[rows[r], d]) for d in range(self.n)))
                pavings[i], sl = self._map_box(pavings[i], b)
                pavings[i].grid[sl] = False
                p = pavings[i]
            p._sat = None
        return Region(pavings)

    def with_min_depths(self, depths: tuple[int, ...]) -> "Region":
        """Refine every root lattice to at least the given per-dim depths."""
        return Region(
            [
                p.deepen_to(tuple(max(a, b) for a, b in zip(p.depths, depths)))
                if any(b > a for a, b in zip(p.depths, depths))
                else p.copy()
                for p in self._pavings
            ]
        )

    def volume(self) -> float:
        return math.fsum(b.volume() for b in self.leaves_in())

    def equals(self, other: "Region") -> bool:
        if len(self._pavings) != len(other._pavings):
            return False
        for a, b in zip(self._pavings, other._pavings):
            if a.root != b.root:
                return False
            depths = tuple(max(x, y) for x, y in zip(a.depths, b.depths))
            ga = a.deepen_to(depths).grid if a.depths != depths else a.grid
            gb = b.deepen_to(depths).grid if b.depths != depths else b.grid
            if not np.array_equal(ga, gb):
                return False
        return True

    def contains_region(self, other: "Region") -> bool:
        """Exact set containment other ⊆ self (requires identical roots)."""
        if tuple(p.root for p in self._pavings) != tuple(p.root for p in other._pavings):
            raise ValueError("region containment requires identical roots")
        for a, b in zip(self._pavings, other._pavings):
            depths = tuple(max(x, y) for x, y in zip(a.depths, b.depths))
            ga = a.deepen_to(depths).grid if a.depths != depths else a.grid
            gb = b.deepen_to(depths).grid if b.depths != depths else b.grid
            if bool(np.any(gb & ~ga)):
                return False
        return True

    def __repr__(self):
        return f"Region(roots={len(self._pavings)}, volume={self.volume():.6g})"


def _split_against_root(piece: Box, root: Box, q: Box):
    """Clip piece to root; return (inside-or-None, outside pieces).

    Slivers that are degenerate in a dimension where q has positive width are
    dropped (measure-zero face contact with the root's complement).
    """
    inside_dims = []
    outside = []
    current = list(piece.dims)
    for d, (pd, rd, qd) in enumerate(zip(piece.dims, root.dims, q.dims)):
        degenerate = qd.lo == qd.hi
        if degenerate:
            if not (rd.lo <= pd.lo <= rd.hi):
                return None, [piece]
            inside_dims.append(pd)
            continue
        if pd.hi <= rd.lo or pd.lo >= rd.hi:
            return None, [piece]
        if pd.lo < rd.lo:
            left = list(current)
            left[d] = Interval(pd.lo, rd.lo)
            outside.append(Box(tuple(left)))
        if pd.hi > rd.hi:
            right = list(current)
            right[d] = Interval(rd.hi, pd.hi)
            outside.append(Box(tuple(right)))
        clipped = Interval(max(pd.lo, rd.lo), min(pd.hi, rd.hi))
        inside_dims.append(clipped)
        current[d] = clipped
    return Box(tuple(inside_dims)), outside


def _covered_by(p: _RootPaving, piece: Box, q: Box) -> bool:
    """Is a piece (already inside p.root) covered by p's closed IN cells?"""
    slices = []
    any_axes = []
    for d, (pd, qd) in enumerate(zip(piece.dims, q.dims)):
        if qd.lo == qd.hi:
            i0, i1 = p.closed_range(d, pd.lo, pd.hi)
            any_axes.append(d)
        else:
            i0, i1 = p.strict_range(d, pd.lo, pd.hi)
        if i1 <= i0:
            return False
        slices.append(slice(i0, i1))
    sub = p.grid[tuple(slices)]
    for ax in sorted(any_axes, reverse=True):
        sub = sub.any(axis=ax)
    return bool(np.all(sub))


def _reduce_leaf_indices(p: _RootPaving) -> tuple[np.ndarray, np.ndarray]:
    """Reduced-tree IN leaves as (lo_index, cell_count) arrays, sorted."""
    n = p.grid.ndim
    if not p.grid.any():
        z = np.zeros((0, n), dtype=np.int64)
        return z, z.copy()
    lo = np.zeros((1, n), dtype=np.int64)
    size = np.array([p.grid.shape], dtype=np.int64)
    found = []
    while len(lo):
        cnt = p.rect_counts(lo, lo + size)
        area = np.prod(size, axis=1)
        full = cnt == area
        mixed = (cnt > 0) & ~full
        if full.any():
            found.append((lo[full], size[full]))
        if not mixed.any():
            break
        lo_m, size_m = lo[mixed], size[mixed]
        widths = np.empty(lo_m.shape, dtype=float)
        for d in range(n):
            c = p.coords[d]
            widths[:, d] = c[lo_m[:, d] + size_m[:, d]] - c[lo_m[:, d]]
        # a mixed node always has a splittable dimension; mask out size-1 dims
        widths = np.where(size_m >= 2, widths, -np.inf)
        split = np.argmax(widths, axis=1)
        half = size_m.copy()
        rows = np.arange(len(lo_m))
        half[rows, split] //= 2
        lo_right = lo_m.copy()
        lo_right[rows, split] += half[rows, split]
        lo = np.concatenate([lo_m, lo_right])
        size = np.concatenate([half, half])
    if not found:
        z = np.zeros((0, n), dtype=np.int64)
        return z, z.copy()
    lo_all = np.concatenate([f[0] for f in found])
    size_all = np.concatenate([f[1] for f in found])
    order = np.lexsort(tuple(lo_all[:, d] for d in range(n - 1, -1, -1)))
    return lo_all[order], size_all[order]


def _reduce_leaves(p: _RootPaving) -> list[Box]:
    lo_idx, size_idx = _reduce_leaf_indices(p)
    boxes = []
    for i in range(len(lo_idx)):
        dims = tuple(
            Interval(p.coords[d][lo_idx[i, d]], p.coords[d][lo_idx[i, d] + size_idx[i, d]])
            for d in range(p.grid.ndim)
        )
        boxes.append(Box(dims))
    return boxes


def region_from_boxes(root: Box, boxes) -> Region:
    """Minimal canonical region over a single root whose IN set is the union."""
    return Region.empty([root]).add_boxes(boxes)


# --- paving files ------------------------------------------------------------

def paving_entries(result_boxes, undetermined=()):
    """Rows for the paving file: (box, tag, mode-name list)."""
    rows = [(b, "IN", names) for b, names in result_boxes]
    rows.extend((b, "UNDET", []) for b in undetermined)
    rows.sort(key=lambda r: (r[0].lo, r[0].hi))
    return rows


def write_paving_csv(path, rows) -> None:
    with open(path, "w") as f:
        for box, tag, names in rows:
            f.write(f"{box.to_text()},{tag},{'|'.join(names)}\n")


def write_paving_json(path, rows, roots) -> None:
    payload = {
        "roots": [r.to_text() for r in roots],
        "boxes": [
            {"box": box.to_text(), "tag": tag, "modes": list(names)} for box, tag, names in rows
        ],
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def read_paving_csv(path):
    rows = []
    with open(path) as f:
        for line in f:
            parts = line.strip().split(",")
            tag_idx = next(i for i, t in enumerate(parts) if t in ("IN", "UNDET"))
            box = Box.from_text(",".join(parts[:tag_idx]))
            names = parts[tag_idx + 1].split("|") if parts[tag_idx + 1] else []
            rows.append((box, parts[tag_idx], names))
    return rows
