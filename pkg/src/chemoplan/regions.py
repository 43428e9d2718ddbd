"""Treatment-intent labelling of a Pareto front.

Low tumor burden (aggressive dosing) is ``cure``, the middle band is
``control`` and the low-toxicity end is ``palliation``.
"""

from __future__ import annotations

from typing import Sequence

CURE, CONTROL, PALLIATION = "cure", "control", "palliation"
REGIONS = (CURE, CONTROL, PALLIATION)


def classify_regions(objectives: Sequence, cuts: tuple[float, float] = (1 / 3, 2 / 3), *,
                     f1_thresholds: tuple[float, float] | None = None,
                     f2_thresholds: tuple[float, float] | None = None) -> list[str]:
    """Label every member, returning labels in the input order.

    By default members are ranked by f1 and the rank fraction ``i / n`` is
    compared with ``cuts``; a lone member is therefore ``cure``. Absolute
    cuts override the ranking: ``f1_thresholds=(a, b)`` labels f1 < a cure,
    f1 < b control; ``f2_thresholds=(lo, hi)`` labels f2 >= hi palliation,
    f2 >= lo control.

    ``objectives`` items need ``f1``/``f2`` attributes (ObjectiveVector) or keys.
    """
    lo, hi = cuts
    if not 0 < lo < hi < 1:
        raise ValueError("region cuts must satisfy 0 < first < second < 1")
    f1 = [_get(o, "f1") for o in objectives]
    f2 = [_get(o, "f2") for o in objectives]
    if f1_thresholds is not None:
        a, b = f1_thresholds
        return [CURE if v < a else CONTROL if v < b else PALLIATION for v in f1]
    if f2_thresholds is not None:
        a, b = f2_thresholds
        return [PALLIATION if v >= b else CONTROL if v >= a else CURE for v in f2]
    n = len(f1)
    order = sorted(range(n), key=lambda i: (f1[i], -f2[i]))
    labels = [""] * n
    for rank, i in enumerate(order):
        frac = rank / n
        labels[i] = CURE if frac < lo else CONTROL if frac < hi else PALLIATION
    return labels


def _get(o, name):
    if isinstance(o, dict):
        return float(o[name])
    return float(getattr(o, name))


def labelled_front(snapshot: list[dict], cuts: tuple[float, float] = (1 / 3, 2 / 3)) -> list[dict]:
    """Archive export documents with a ``region`` key added."""
    labels = classify_regions(snapshot, cuts)
    return [{**doc, "region": lab} for doc, lab in zip(snapshot, labels)]
