from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ObjectiveVector:
    """Bi-objective evaluation: ``f1`` is minimized, ``f2`` is maximized.

    ``min_circ`` is the constraint quantity (neutrophil nadir for the chemo
    problem). It only matters when comparing two infeasible vectors.
    """

    f1_tumor_cells: float
    f2_circ: float
    feasible: bool = True
    min_circ: float = math.nan

    @property
    def f1(self) -> float:
        return self.f1_tumor_cells

    @property
    def f2(self) -> float:
        return self.f2_circ

    @property
    def key(self) -> tuple[float, float, bool]:
        return (self.f1, self.f2, self.feasible)

    @classmethod
    def failed(cls) -> "ObjectiveVector":
        """Sentinel for a simulation that could not complete; ranks below every other vector."""
        return cls(math.inf, 0.0, False, -math.inf)

    def to_dict(self) -> dict:
        return {"f1": self.f1, "f2": self.f2, "min_circ": self.min_circ, "feasible": self.feasible}

    @classmethod
    def from_dict(cls, doc: dict) -> "ObjectiveVector":
        return cls(float(doc["f1"]), float(doc["f2"]), bool(doc["feasible"]), float(doc["min_circ"]))


def dominates(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    """Constraint-dominance: feasibility first, then Pareto dominance.

    Two infeasible vectors are ordered by their constraint quantity alone
    (larger ``min_circ`` is less violated).
    """
    if a.feasible != b.feasible:
        return a.feasible
    if not a.feasible:
        return a.min_circ > b.min_circ
    return (a.f1 <= b.f1 and a.f2 >= b.f2) and (a.f1 < b.f1 or a.f2 > b.f2)
