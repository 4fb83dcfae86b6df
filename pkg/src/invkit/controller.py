"""Invariance controller extraction, closed-loop simulation, abstraction export.

The controller is the partition read directly off a certified inner
approximation: each cell is a result box and its recorded admissible modes.
At runtime the admissible set at a state is the union over all cells
containing it, so points on shared faces inherit both neighbours' modes and
any conforming switching signal keeps the loop inside the specification
region.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import expr as ex
from .errors import ConformanceBreach, EmptyResult, InfeasibleStart
from .interval import Box, RoundingPolicy
from .paving import ModeSet, Region
from .synthesis import SynthesisResult, _arrays_from_boxes
from .system import InclusionStrategy, SwitchedSystem, include_batch


class PolicyKind(Enum):
    INERTIAL = "inertial"
    FIRST = "first"
    RANDOM = "random"


@dataclass(frozen=True, slots=True)
class SwitchPolicy:
    """Mode-selection rule among admissible modes; RANDOM carries its seed."""

    kind: PolicyKind
    seed: int = 0

    @classmethod
    def inertial(cls) -> "SwitchPolicy":
        return cls(PolicyKind.INERTIAL)

    @classmethod
    def first(cls) -> "SwitchPolicy":
        return cls(PolicyKind.FIRST)

    @classmethod
    def random(cls, seed: int) -> "SwitchPolicy":
        return cls(PolicyKind.RANDOM, seed)


@dataclass
class SimTrace:
    """Closed-loop run: one more state than modes; in_omega tracks each state."""

    states: list[tuple[float, ...]]
    modes: list[int]
    in_omega: list[bool]


def system_hash(sys: SwitchedSystem) -> str:
    payload = json.dumps(
        {"n": sys.n, "modes": [[m.name, [ex.pretty(e) for e in m.update]] for m in sys.modes]},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


class _SubdivisionIndex:
    """Point-lookup tree built by the canonical bisection rule.

    Interior nodes split at the widest-dimension midpoint; a point equal to a
    split coordinate descends both sides, so closed-face membership is kept.
    Leaves hold the ids of cells meeting the leaf box.
    """

    __slots__ = ("split", "ids")

    def __init__(self, box: Box, ids, cell_lo, cell_hi, leaf_size=8, depth=48):
        from .interval import bisect, widest_dim, width

        if len(ids) <= leaf_size or depth == 0 or width(box) <= 0.0:
            self.split = None
            self.ids = ids
            return
        left, right = bisect(box)
        j = widest_dim(box)
        mid = box.dims[j].mid
        lsel = ids[np.all((cell_lo[ids] <= np.array(left.hi)) & (cell_hi[ids] >= np.array(left.lo)), axis=1)]
        rsel = ids[np.all((cell_lo[ids] <= np.array(right.hi)) & (cell_hi[ids] >= np.array(right.lo)), axis=1)]
        if len(lsel) == len(ids) and len(rsel) == len(ids):
            self.split = None
            self.ids = ids
            return
        self.split = (j, mid)
        self.ids = (
            _SubdivisionIndex(left, lsel, cell_lo, cell_hi, leaf_size, depth - 1),
            _SubdivisionIndex(right, rsel, cell_lo, cell_hi, leaf_size, depth - 1),
        )

    def candidates(self, x) -> set[int]:
        if self.split is None:
            return set(int(i) for i in self.ids)
        j, mid = self.split
        if x[j] < mid:
            return self.ids[0].candidates(x)
        if x[j] > mid:
            return self.ids[1].candidates(x)
        return self.ids[0].candidates(x) | self.ids[1].candidates(x)


class Controller:
    """Partition of a certified invariant region with admissible modes per cell."""

    def __init__(self, cells: list[tuple[Box, ModeSet]], omega: Region, sys_hash: str):
        if not cells:
            raise EmptyResult("controller needs at least one cell")
        self.cells = sorted(cells, key=lambda c: (c[0].lo, c[0].hi))
        self.omega = omega
        self.sys_hash = sys_hash
        self.n = self.cells[0][0].n
        self._cell_lo = np.array([c[0].lo for c in self.cells])
        self._cell_hi = np.array([c[0].hi for c in self.cells])
        self._index = [
            (root, _SubdivisionIndex(root, np.arange(len(self.cells)), self._cell_lo, self._cell_hi))
            for root in omega.roots
        ]

    @property
    def domain_volume(self) -> float:
        import math

        return math.fsum(b.volume() for b, _ in self.cells)

    def cells_containing_scan(self, x) -> list[int]:
        """Brute-force reference: scan every cell's closed box."""
        x = np.asarray([float(v) for v in x])
        hit = np.all((self._cell_lo <= x) & (x <= self._cell_hi), axis=1)
        return [int(i) for i in np.flatnonzero(hit)]

    def cells_containing(self, x) -> list[int]:
        """Indices of all cells whose closed box contains x, via the index tree."""
        x = tuple(float(v) for v in x)
        cand: set[int] = set()
        for root, tree in self._index:
            if all(d.lo <= v <= d.hi for d, v in zip(root.dims, x)):
                cand |= tree.candidates(x)
        return sorted(
            i
            for i in cand
            if all(self._cell_lo[i, d] <= x[d] <= self._cell_hi[i, d] for d in range(self.n))
        )

    def admissible(self, x) -> ModeSet:
        """Union of the mode sets of every cell containing x; empty off-domain."""
        ids = self.cells_containing(x)
        if not ids:
            return ModeSet(0, self.cells[0][1].size)
        ms = self.cells[0][1].__class__(0, self.cells[0][1].size)
        for i in ids:
            ms = ms.union(self.cells[i][1])
        return ms

    def save(self, path) -> None:
        """Cells only; the lookup structure is rebuilt on load."""
        payload = {
            "system_hash": self.sys_hash,
            "omega": {
                "roots": [r.to_text() for r in self.omega.roots],
                "leaves": [b.to_text() for b in self.omega.leaves_in()],
            },
            "cells": [
                {"box": b.to_text(), "modes": list(ms.indices()), "size": ms.size}
                for b, ms in self.cells
            ],
        }
        with open(path, "w") as f:
            json.dump(payload, f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path, sys: SwitchedSystem) -> "Controller":
        with open(path) as f:
            payload = json.load(f)
        if payload["system_hash"] != system_hash(sys):
            raise EmptyResult(
                "controller file was synthesized for a different system "
                f"({payload['system_hash']} != {system_hash(sys)})"
            )
        roots = [Box.from_text(t) for t in payload["omega"]["roots"]]
        leaves = [Box.from_text(t) for t in payload["omega"]["leaves"]]
        omega = Region.empty(roots).add_boxes(leaves)
        cells = [
            (Box.from_text(c["box"]), ModeSet.from_indices(c["modes"], c["size"]))
            for c in payload["cells"]
        ]
        return cls(cells, omega, payload["system_hash"])


def extract(result: SynthesisResult, omega: Region, sys: SwitchedSystem) -> Controller:
    """Controller from a certified inner approximation.

    Outer results and empty inner results are rejected: only certified
    fixed points are invariant, so only they yield controllers.
    """
    if not result.certified or result.is_empty or not result.modes:
        raise EmptyResult("controller extraction needs a nonempty certified inner result")
    cells = list(result.modes.items())
    if any(ms.is_empty for _, ms in cells):
        raise EmptyResult("certified result carries an empty mode set")
    return Controller(cells, omega, system_hash(sys))


def _choose(policy: SwitchPolicy, admissible: ModeSet, prev: int | None, rng) -> int:
    idx = admissible.indices()
    if policy.kind is PolicyKind.INERTIAL:
        if prev is not None and prev in admissible:
            return prev
        return idx[0]
    if policy.kind is PolicyKind.FIRST:
        return idx[0]
    return rng.choice(idx)


def simulate(
    sys: SwitchedSystem,
    ctl: Controller,
    x0,
    steps: int,
    policy: SwitchPolicy = SwitchPolicy.inertial(),
) -> SimTrace:
    """Closed loop under a conforming switching signal.

    INERTIAL keeps the previous mode while it stays admissible (starting from
    the first mode), FIRST always takes the lowest admissible index, RANDOM
    draws uniformly from the admissible set with the policy's seed.
    """
    x = tuple(float(v) for v in x0)
    if ctl.admissible(x).is_empty:
        raise InfeasibleStart(f"initial state {x} is outside the controller domain")
    rng = random.Random(policy.seed)
    states = [x]
    modes: list[int] = []
    in_omega = [ctl.omega.contains_point(x)]
    prev: int | None = 0 if policy.kind is PolicyKind.INERTIAL else None
    for k in range(steps):
        adm = ctl.admissible(x)
        if adm.is_empty:
            raise ConformanceBreach(
                f"admissible set emptied at step {k}, state {x}: certified controller violated"
            )
        p = _choose(policy, adm, prev, rng)
        prev = p
        x = sys.step(p, x)
        states.append(x)
        modes.append(p)
        in_omega.append(ctl.omega.contains_point(x))
    return SimTrace(states=states, modes=modes, in_omega=in_omega)


def export_abstraction(
    sys: SwitchedSystem,
    ctl: Controller,
    strat: InclusionStrategy = InclusionStrategy.NATURAL,
    rounding: RoundingPolicy = RoundingPolicy.OUTWARD,
) -> list[tuple[int, int, int]]:
    """Finite transition system over controller cells.

    Emits (i, p, j) whenever cell j meets the interval image of cell i under
    a recorded mode p; inclusion overapproximation may add spurious
    transitions but never drops a real one.
    """
    boxes = [b for b, _ in ctl.cells]
    lo, hi = _arrays_from_boxes(boxes, sys.n)
    cell_lo, cell_hi = ctl._cell_lo, ctl._cell_hi
    transitions: list[tuple[int, int, int]] = []
    for p in range(len(sys.modes)):
        rows = [i for i, (_, ms) in enumerate(ctl.cells) if p in ms]
        if not rows:
            continue
        ilo, ihi = include_batch(sys, p, lo[rows], hi[rows], strat, rounding)
        for r, i in enumerate(rows):
            touch = np.all((cell_lo <= ihi[r]) & (ilo[r] <= cell_hi), axis=1)
            transitions.extend((i, p, int(j)) for j in np.flatnonzero(touch))
    transitions.sort()
    return transitions


def write_trace_csv(path, trace: SimTrace, sys: SwitchedSystem) -> None:
    n = len(trace.states[0])
    with open(path, "w") as f:
        f.write("k," + ",".join(f"x{i+1}" for i in range(n)) + ",mode,in_omega\n")
        for k, x in enumerate(trace.states):
            mode = sys.modes[trace.modes[k]].name if k < len(trace.modes) else ""
            vals = ",".join(repr(v) for v in x)
            f.write(f"{k},{vals},{mode},{str(trace.in_omega[k]).lower()}\n")


def write_abstraction_csv(path, transitions, sys: SwitchedSystem) -> None:
    with open(path, "w") as f:
        f.write("i,mode,j\n")
        for i, p, j in transitions:
            f.write(f"{i},{sys.modes[p].name},{j}\n")
