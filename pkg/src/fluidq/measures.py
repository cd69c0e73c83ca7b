"""Finite nonnegative measures represented by tail functions on grids.

A TailMeasure stores x -> nu((x, inf)) at grid points.  Fluid profiles are
continuous in x and interpolate linearly; empirical snapshots are
right-continuous steps.  Below the grid the tail is the total mass, above it
the last stored value.  Measures on (0, inf) follow the convention that any
mass at or below 0 is zero, so their tail at x <= 0 equals the total.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

_TOL = 1e-9


@dataclass(frozen=True)
class TailMeasure:
    grid: np.ndarray
    tails: np.ndarray
    total: float
    interpolation: str = "linear"  # "linear" for fluid profiles, "step" for empirical

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        tails = np.asarray(self.tails, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "tails", tails)
        object.__setattr__(self, "total", float(self.total))
        if grid.ndim != 1 or grid.size == 0 or grid.shape != tails.shape:
            raise ValueError("grid and tails must be equal-length 1-d arrays")
        if np.any(np.diff(grid) <= 0.0):
            raise ValueError("grid must be strictly increasing")
        scale = max(abs(self.total), 1.0)
        if np.any(np.diff(tails) > _TOL * scale):
            raise ValueError("tails must be nonincreasing")
        if np.any(tails < -_TOL * scale) or np.any(tails > self.total + _TOL * scale):
            raise ValueError("tails must lie in [0, total]")
        if self.interpolation not in ("linear", "step"):
            raise ValueError("interpolation must be 'linear' or 'step'")

    @classmethod
    def zero(cls, grid=(0.0,), interpolation: str = "linear") -> "TailMeasure":
        g = np.asarray(grid, dtype=float)
        return cls(g, np.zeros_like(g), 0.0, interpolation)

    @classmethod
    def from_samples(cls, values, mass_per_point: float, probes=None) -> "TailMeasure":
        """Empirical measure: tail(x) = mass_per_point * #{i : values[i] > x}."""
        values = np.asarray(values, dtype=float)
        pieces = [np.unique(values)]
        if probes is not None:
            pieces.append(np.asarray(probes, dtype=float))
        grid = np.unique(np.concatenate(pieces)) if any(p.size for p in pieces) else np.array([0.0])
        if grid.size == 0:
            grid = np.array([0.0])
        sorted_vals = np.sort(values)
        counts = values.size - np.searchsorted(sorted_vals, grid, side="right")
        return cls(grid, mass_per_point * counts, mass_per_point * values.size, "step")

    def tail_at(self, x):
        """Evaluate the tail function; below the grid returns total, above returns the last value."""
        x = np.asarray(x, dtype=float)
        if self.interpolation == "linear":
            out = np.interp(x, self.grid, self.tails, left=self.total, right=self.tails[-1])
        else:
            idx = np.searchsorted(self.grid, x, side="right") - 1
            out = np.where(idx < 0, self.total, self.tails[np.clip(idx, 0, self.grid.size - 1)])
        return float(out) if out.ndim == 0 else out

    def inverse_tail(self, q):
        """Smallest x with tail(x) <= q, by interpolation on the stored tails."""
        q = np.asarray(q, dtype=float)
        # tails are nonincreasing; flip for np.interp
        out = np.interp(q, self.tails[::-1], self.grid[::-1])
        out = np.where(q >= self.tails[0], self.grid[0], out)
        out = np.where(q <= self.tails[-1], self.grid[-1], out)
        return float(out) if out.ndim == 0 else out

    def scaled(self, factor: float) -> "TailMeasure":
        return TailMeasure(self.grid, self.tails * factor, self.total * factor, self.interpolation)


def sup_distance(m1: TailMeasure, m2: TailMeasure, probes) -> float:
    """Max tail gap over the probes, maximized with the total-mass gap.

    A computable surrogate for weak-convergence distance: on a dense probe
    grid against a continuous limit, convergence here implies weak
    convergence.
    """
    probes = np.asarray(probes, dtype=float)
    if probes.size == 0:
        raise ValueError("probes must be nonempty")
    gap = np.max(np.abs(np.asarray(m1.tail_at(probes)) - np.asarray(m2.tail_at(probes))))
    return float(max(gap, abs(m1.total - m2.total)))


def uniform_probes(lo: float, hi: float, count: int = 512) -> np.ndarray:
    if not (hi > lo and count >= 2):
        raise ValueError("probe grid needs hi > lo and count >= 2")
    return np.linspace(lo, hi, count)


def write_tail_csv(measure: TailMeasure, fileobj) -> None:
    """Serialize as columns x, tail (full precision)."""
    writer = csv.writer(fileobj, lineterminator="\n")
    writer.writerow(["x", "tail"])
    for x, t in zip(measure.grid, measure.tails):
        writer.writerow([f"{x:.17g}", f"{t:.17g}"])


def read_tail_csv(fileobj, total=None, interpolation: str = "linear") -> TailMeasure:
    reader = csv.reader(fileobj)
    header = next(reader)
    if header != ["x", "tail"]:
        raise ValueError("expected columns x, tail")
    rows = [(float(a), float(b)) for a, b in reader]
    grid = np.array([r[0] for r in rows])
    tails = np.array([r[1] for r in rows])
    if total is None:
        total = float(tails[0]) if tails.size else 0.0
    return TailMeasure(grid, tails, total, interpolation)
