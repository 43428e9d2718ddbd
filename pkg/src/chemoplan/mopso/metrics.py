from __future__ import annotations

from typing import Iterable

from ..objectives import ObjectiveVector


def hypervolume(points: Iterable[ObjectiveVector], reference: tuple[float, float]) -> float:
    """Exact 2-D hypervolume with f1 minimized and f2 maximized.

    Sweeps members in ascending f1, keeping the running best f2; dominated
    points contribute nothing, so the input need not be a clean front.

    Raises:
        ValueError: if some point does not weakly dominate ``reference``.
    """
    ref1, ref2 = reference
    pts = []
    for p in points:
        if not (p.f1 <= ref1 and p.f2 >= ref2):
            raise ValueError(f"reference {reference} is not dominated by point ({p.f1}, {p.f2})")
        pts.append((p.f1, p.f2))
    if not pts:
        return 0.0
    pts.sort()
    volume = 0.0
    best = ref2
    for i, (f1, f2) in enumerate(pts):
        best = max(best, f2)
        nxt = pts[i + 1][0] if i + 1 < len(pts) else ref1
        volume += (nxt - f1) * (best - ref2)
    return volume
