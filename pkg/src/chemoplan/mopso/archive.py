"""External repository of non-dominated solutions with an adaptive hypercube grid."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..objectives import ObjectiveVector, dominates


@dataclass(frozen=True)
class Member:
    position: np.ndarray
    objectives: ObjectiveVector

    def to_dict(self) -> dict:
        return {"position": [float(x) for x in self.position], **self.objectives.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Member":
        return cls(np.asarray(doc["position"], dtype=float), ObjectiveVector.from_dict(doc))


def assign_grid(objectives: Iterable[ObjectiveVector], divisions: int):
    """Map each objective vector to its ``(bin_f1, bin_f2)`` hypercube.

    Each axis is split into ``divisions`` equal bins over the current
    min/max; bin index grows with the raw value. A degenerate axis (or a
    non-finite value) puts everything in bin 0.

    Returns:
        (cells, bounds) where bounds is ``((f1_lo, f1_hi), (f2_lo, f2_hi))``.
    """
    objs = list(objectives)
    if not objs:
        return [], ((math.nan, math.nan), (math.nan, math.nan))
    axes = []
    bounds = []
    for vals in ([o.f1 for o in objs], [o.f2 for o in objs]):
        arr = np.asarray(vals, dtype=float)
        finite = arr[np.isfinite(arr)]
        lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (math.nan, math.nan)
        bounds.append((lo, hi))
        if not finite.size or hi <= lo:
            axes.append([0] * len(arr))
            continue
        idx = []
        for v in arr:
            if not math.isfinite(v):
                idx.append(0)
            else:
                idx.append(min(int((v - lo) / (hi - lo) * divisions), divisions - 1))
        axes.append(idx)
    return list(zip(axes[0], axes[1])), tuple(bounds)


class ParetoArchive:
    """Bounded set of mutually non-dominated solutions.

    ``capacity=None`` disables the bound. The grid is recomputed lazily
    whenever membership changed, so it always reflects the current
    objective bounds.
    """

    def __init__(self, capacity: int | None = 100, divisions: int = 30,
                 fitness_numerator: float = 10.0):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be >= 1 or None")
        if divisions < 2:
            raise ValueError("grid divisions must be >= 2")
        if fitness_numerator <= 1:
            raise ValueError("leader fitness numerator must be > 1")
        self.capacity = capacity
        self.divisions = divisions
        self.fitness_numerator = fitness_numerator
        self.members: list[Member] = []
        self._grid: list[tuple[int, int]] | None = None
        self._bounds = None

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def grid(self) -> list[tuple[int, int]]:
        if self._grid is None:
            self._grid, self._bounds = assign_grid((m.objectives for m in self.members), self.divisions)
        return self._grid

    @property
    def bounds(self):
        _ = self.grid
        return self._bounds

    def add(self, position, objectives: ObjectiveVector, rng: np.random.Generator | None = None) -> bool:
        """Offer a candidate; returns True if it entered the archive.

        A candidate dominated by a member, or equal to a member in both
        objectives and position, is rejected. Otherwise it is inserted and
        every member it dominates is dropped. If that overflows capacity,
        one member is evicted uniformly from the most crowded hypercube
        (ties between equally crowded cells are broken by ``rng`` too).
        """
        position = np.array(position, dtype=float)
        for m in self.members:
            if dominates(m.objectives, objectives):
                return False
            if m.objectives.key == objectives.key and np.array_equal(m.position, position):
                return False
        self.members = [m for m in self.members if not dominates(objectives, m.objectives)]
        self.members.append(Member(position, objectives))
        self._grid = None
        if self.capacity is not None and len(self.members) > self.capacity:
            self._evict(rng if rng is not None else np.random.default_rng())
        return True

    def _evict(self, rng: np.random.Generator) -> None:
        cells = self._cells()
        crowd = max(len(v) for v in cells.values())
        crowded = [c for c in sorted(cells) if len(cells[c]) == crowd]
        cell = crowded[rng.integers(len(crowded))] if len(crowded) > 1 else crowded[0]
        victims = cells[cell]
        victim = victims[rng.integers(len(victims))]
        del self.members[victim]
        self._grid = None

    def _cells(self) -> dict[tuple[int, int], list[int]]:
        cells: dict[tuple[int, int], list[int]] = defaultdict(list)
        for i, c in enumerate(self.grid):
            cells[c].append(i)
        return cells

    def cell_probabilities(self, numerator: float | None = None) -> dict[tuple[int, int], float]:
        """Roulette-wheel probability of each occupied hypercube."""
        x = self.fitness_numerator if numerator is None else numerator
        fit = {c: x / len(ix) for c, ix in self._cells().items()}
        total = sum(fit.values())
        return {c: f / total for c, f in sorted(fit.items())}

    def select_leader(self, rng: np.random.Generator) -> np.ndarray:
        """Pick a leader: roulette over cells with fitness ``x / count``, then uniform within the cell."""
        if not self.members:
            raise ValueError("cannot select a leader from an empty archive")
        cells = self._cells()
        keys = sorted(cells)
        if len(keys) == 1:
            ix = cells[keys[0]]
        else:
            fit = np.array([self.fitness_numerator / len(cells[k]) for k in keys])
            cum = np.cumsum(fit)
            r = rng.random() * cum[-1]
            k = min(int(np.searchsorted(cum, r, side="right")), len(keys) - 1)
            ix = cells[keys[k]]
        pick = ix[0] if len(ix) == 1 else ix[rng.integers(len(ix))]
        return self.members[pick].position

    def sorted_members(self) -> list[Member]:
        """Members along the staircase: f1 ascending, f2 descending."""
        return sorted(self.members, key=lambda m: (m.objectives.f1, -m.objectives.f2,
                                                   tuple(m.position)))

    def snapshot(self) -> list[dict]:
        return [m.to_dict() for m in self.sorted_members()]


def update_archive(archive: ParetoArchive, candidate: tuple, rng: np.random.Generator | None = None) -> ParetoArchive:
    position, objectives = candidate
    archive.add(position, objectives, rng)
    return archive


def select_leader(archive: ParetoArchive, rng: np.random.Generator) -> np.ndarray:
    return archive.select_leader(rng)
