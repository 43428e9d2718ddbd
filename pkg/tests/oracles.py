"""Independent reference solutions used to check the integrator and the archive."""

import math

import numpy as np

from chemoplan.objectives import dominates


def pk_bolus_exact(dose, t, pk):
    """Closed-form plasma/peripheral amounts after one bolus at t=0."""
    a = pk.k12 + pk.k10 + pk.k21
    b = pk.k10 * pk.k21
    disc = math.sqrt(a * a - 4 * b)
    l1, l2 = (-a + disc) / 2, (-a - disc) / 2
    e1, e2 = np.exp(l1 * t), np.exp(l2 * t)
    xc = dose * ((l1 + pk.k21) * e1 - (l2 + pk.k21) * e2) / (l1 - l2)
    xp = dose * pk.k12 * (e1 - e2) / (l1 - l2)
    return xc, xp


def expm2(m, t):
    """exp(M t) for a 2x2 matrix with real distinct eigenvalues, closed form."""
    m = np.asarray(m, dtype=float)
    s = 0.5 * np.trace(m)
    q = math.sqrt(s * s - np.linalg.det(m))
    shifted = m - s * np.eye(2)
    return math.exp(s * t) * (math.cosh(q * t) * np.eye(2) + math.sinh(q * t) / q * shifted)


def untreated_tumor_exact(tumor, x0, t):
    m = [[tumor.alpha - tumor.mu - tumor.eta, tumor.beta], [tumor.mu, -tumor.beta]]
    return expm2(m, t) @ np.asarray(x0, dtype=float)


def brute_force_front(candidates):
    """O(n^2) non-dominated subset as a set of (objective key, position tuple)."""
    out = set()
    for i, (pos_i, obj_i) in enumerate(candidates):
        if any(dominates(obj_j, obj_i) for j, (_, obj_j) in enumerate(candidates) if j != i):
            continue
        out.add((obj_i.key, tuple(np.asarray(pos_i, dtype=float))))
    return out


def monte_carlo_hypervolume(points, reference, samples, rng):
    """Rejection-sampled area dominated by ``points`` (f1 minimized, f2 maximized)."""
    pts = np.array([(p.f1, p.f2) for p in points])
    lo1, hi2 = pts[:, 0].min(), pts[:, 1].max()
    ref1, ref2 = reference
    u = rng.uniform(lo1, ref1, samples)
    v = rng.uniform(ref2, hi2, samples)
    hit = np.zeros(samples, dtype=bool)
    for f1, f2 in pts:
        hit |= (u >= f1) & (v <= f2)
    return hit.mean() * (ref1 - lo1) * (hi2 - ref2)
