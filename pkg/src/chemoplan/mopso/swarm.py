"""Multi-objective particle swarm with a grid-based external archive.

Each generation: pick a leader per particle from the archive, update
velocity and position, evaluate the whole swarm, then fold the results into
the archive and the personal bests in particle-index order. All random draws
happen in that serial order, so a run is reproducible from its seed no
matter how the evaluations themselves are distributed.
"""

from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..objectives import ObjectiveVector, dominates
from .archive import ParetoArchive
from .metrics import hypervolume


@dataclass(frozen=True)
class SwarmConfig:
    population: int = 1000
    generations: int = 100
    dimensions: int = 21
    inertia_w: float = 0.4
    c1: float = 1.0
    c2: float = 1.0
    archive_capacity: int | None = 100
    grid_divisions: int = 30
    leader_fitness_numerator: float = 10.0
    bounds: tuple[float, float] = (0.0, 5.0)
    seed: int = 0
    per_dimension_random: bool = False
    mutation_rate: float = 0.0
    hv_reference: tuple[float, float] | None = None

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.dimensions < 1:
            raise ValueError("dimensions must be >= 1")
        if not 0 < self.inertia_w < 1:
            raise ValueError("inertia_w must lie in (0, 1)")
        if self.grid_divisions < 2:
            raise ValueError("grid_divisions must be >= 2")
        if self.leader_fitness_numerator <= 1:
            raise ValueError("leader_fitness_numerator must be > 1")
        if self.archive_capacity is not None and self.archive_capacity < 1:
            raise ValueError("archive_capacity must be >= 1 or null")
        lo, hi = self.bounds
        if not lo < hi:
            raise ValueError("bounds must satisfy min < max")
        if not 0 <= self.mutation_rate <= 1:
            raise ValueError("mutation_rate must lie in [0, 1]")
        object.__setattr__(self, "bounds", (float(lo), float(hi)))
        if self.hv_reference is not None:
            object.__setattr__(self, "hv_reference", tuple(float(v) for v in self.hv_reference))


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    pbest_position: np.ndarray
    pbest_objectives: ObjectiveVector | None = None


@dataclass(frozen=True)
class GenerationStats:
    gen: int
    archive_size: int
    hypervolume: float
    best_f1: float
    best_f2: float


@dataclass
class RunResult:
    archive: ParetoArchive
    stats: list[GenerationStats] = field(default_factory=list)
    swarm: list[Particle] = field(default_factory=list)
    hv_reference: tuple[float, float] | None = None


def update_velocity(p: Particle, leader: np.ndarray, config: SwarmConfig,
                    rng: np.random.Generator, r1=None, r2=None) -> np.ndarray:
    if r1 is None or r2 is None:
        if config.per_dimension_random:
            r1, r2 = rng.random(p.position.size), rng.random(p.position.size)
        else:
            r1, r2 = rng.random(2)
    return (config.inertia_w * p.velocity
            + config.c1 * r1 * (p.pbest_position - p.position)
            + config.c2 * r2 * (leader - p.position))


def update_position(p: Particle, bounds: tuple[float, float] = (0.0, 5.0)) -> np.ndarray:
    """Move the particle; coordinates that leave the box are clamped and their velocity reversed."""
    lo, hi = bounds
    pos = p.position + p.velocity
    out = (pos < lo) | (pos > hi)
    if out.any():
        pos = np.clip(pos, lo, hi)
        vel = p.velocity.copy()
        vel[out] = -vel[out]
        p.velocity = vel
    p.position = pos
    return pos


def update_pbest(p: Particle, new_objectives: ObjectiveVector, rng: np.random.Generator) -> Particle:
    old = p.pbest_objectives
    if old is None or dominates(new_objectives, old):
        replace = True
    elif dominates(old, new_objectives):
        replace = False
    else:
        replace = rng.random() < 0.5
    if replace:
        p.pbest_position = p.position.copy()
        p.pbest_objectives = new_objectives
    return p


def _eval_each(evaluator: Callable, chunk: np.ndarray) -> list[ObjectiveVector]:
    many = getattr(evaluator, "many", None)
    if many is not None:
        try:
            return list(many(chunk))
        except Exception:
            pass
    out = []
    for pos in chunk:
        try:
            out.append(evaluator(pos))
        except Exception:
            out.append(ObjectiveVector.failed())
    return out


def evaluate_positions(evaluator: Callable, positions: np.ndarray,
                       executor: Executor | None = None, chunks: int | None = None) -> list[ObjectiveVector]:
    """Evaluate every row of ``positions``; results come back in row order."""
    if executor is None:
        return _eval_each(evaluator, positions)
    n_chunks = chunks or getattr(executor, "_max_workers", 4)
    parts = [c for c in np.array_split(positions, n_chunks) if len(c)]
    futures = [executor.submit(_eval_each, evaluator, part) for part in parts]
    out: list[ObjectiveVector] = []
    for fut in futures:
        out.extend(fut.result())
    return out


def _stats(gen: int, archive: ParetoArchive, reference) -> GenerationStats:
    objs = [m.objectives for m in archive]
    feas = [o for o in objs if o.feasible and math.isfinite(o.f1)]
    if reference is not None:
        inside = [o for o in feas if o.f1 <= reference[0] and o.f2 >= reference[1]]
        hv = hypervolume(inside, reference)
    else:
        hv = 0.0
    best_f1 = min((o.f1 for o in feas), default=math.inf)
    best_f2 = max((o.f2 for o in feas), default=-math.inf)
    return GenerationStats(gen, len(archive), hv, best_f1, best_f2)


def run(evaluator: Callable, config: SwarmConfig, *, executor: Executor | None = None,
        chunks: int | None = None,
        callback: Callable[[int, ParetoArchive, GenerationStats], None] | None = None) -> RunResult:
    """Run the optimizer and return the final archive with per-generation stats.

    ``evaluator`` maps a position to an ``ObjectiveVector``. If it also has a
    ``many(positions)`` method the swarm is evaluated in batches. Passing an
    ``executor`` spreads those batches over workers; results are identical to
    a serial run with the same seed. Evaluator exceptions become the
    worst-rank sentinel vector instead of aborting the run.

    ``callback(gen, archive, stats)`` fires after initialization (gen 0) and
    after every generation.
    """
    rng = np.random.default_rng(config.seed)
    lo, hi = config.bounds
    n = config.dimensions
    archive = ParetoArchive(config.archive_capacity, config.grid_divisions,
                            config.leader_fitness_numerator)

    positions = rng.uniform(lo, hi, size=(config.population, n))
    swarm = [Particle(positions[i].copy(), np.zeros(n), positions[i].copy())
             for i in range(config.population)]
    objs = evaluate_positions(evaluator, positions, executor, chunks)
    for p, o in zip(swarm, objs):
        archive.add(p.position, o, rng)
        p.pbest_objectives = o

    reference = config.hv_reference
    if reference is None:
        feas = [o for o in objs if o.feasible and math.isfinite(o.f1)]
        if feas:
            reference = (max(o.f1 for o in feas), min(o.f2 for o in feas))
    result = RunResult(archive, [], swarm, reference)
    result.stats.append(_stats(0, archive, reference))
    if callback:
        callback(0, archive, result.stats[-1])

    for gen in range(1, config.generations + 1):
        for p in swarm:
            leader = archive.select_leader(rng)
            p.velocity = update_velocity(p, leader, config, rng)
            update_position(p, config.bounds)
            if config.mutation_rate > 0:
                mask = rng.random(n) < config.mutation_rate
                if mask.any():
                    pos = p.position.copy()
                    pos[mask] = rng.uniform(lo, hi, int(mask.sum()))
                    p.position = pos
        positions = np.stack([p.position for p in swarm])
        objs = evaluate_positions(evaluator, positions, executor, chunks)
        for p, o in zip(swarm, objs):
            archive.add(p.position, o, rng)
        for p, o in zip(swarm, objs):
            update_pbest(p, o, rng)
        result.stats.append(_stats(gen, archive, reference))
        if callback:
            callback(gen, archive, result.stats[-1])
    return result


def hypervolume_of(archive: ParetoArchive, reference: Sequence[float]) -> float:
    return hypervolume((m.objectives for m in archive), tuple(reference))
