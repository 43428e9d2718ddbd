"""Chemotherapy dose scheduling with a multi-objective particle swarm."""

from .models import PatientModel, default_patient
from .objectives import ObjectiveVector, dominates
from .simulator import (
    DoseSchedule,
    PlanReport,
    SimConfig,
    SimulationFailure,
    Trajectory,
    evaluate,
    report,
    simulate,
)

__all__ = [
    "DoseSchedule",
    "ObjectiveVector",
    "PatientModel",
    "PlanReport",
    "SimConfig",
    "SimulationFailure",
    "Trajectory",
    "default_patient",
    "dominates",
    "evaluate",
    "report",
    "simulate",
]

__version__ = "0.1.0"
