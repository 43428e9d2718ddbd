from .archive import Member, ParetoArchive, assign_grid, select_leader, update_archive
from .metrics import hypervolume
from .swarm import (
    GenerationStats,
    Particle,
    RunResult,
    SwarmConfig,
    evaluate_positions,
    run,
    update_pbest,
    update_position,
    update_velocity,
)

__all__ = [
    "GenerationStats",
    "Member",
    "ParetoArchive",
    "Particle",
    "RunResult",
    "SwarmConfig",
    "assign_grid",
    "evaluate_positions",
    "hypervolume",
    "run",
    "select_leader",
    "update_archive",
    "update_pbest",
    "update_position",
    "update_velocity",
]
