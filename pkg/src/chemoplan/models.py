"""Physiological models: two-compartment PK, cell-cycle tumor growth, myelosuppression.

Every function here is pure and works on scalars or numpy arrays alike, so the
simulator can evaluate a whole batch of schedules with the same code path.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Mapping

import numpy as np


class ModelDomainError(ValueError):
    """Raised when a model is evaluated outside its mathematical domain."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


@dataclass(frozen=True)
class PkParams:
    k12: float = 0.14
    k21: float = 0.06
    k10: float = 1.14
    vc: float = 6.0

    def __post_init__(self):
        for f in fields(self):
            _require(getattr(self, f.name) > 0, f"PkParams.{f.name} must be > 0")


@dataclass(frozen=True)
class PkState:
    xc: Any = 0.0
    xp: Any = 0.0


@dataclass(frozen=True)
class TumorParams:
    alpha: float = 0.5
    mu: float = 0.218
    beta: float = 0.05
    eta: float = 0.477
    k1: float = 0.03

    def __post_init__(self):
        for f in fields(self):
            _require(getattr(self, f.name) >= 0, f"TumorParams.{f.name} must be >= 0")


@dataclass(frozen=True)
class TumorState:
    x1: Any = 8e11
    x2: Any = 2e11


@dataclass(frozen=True)
class MyeloParams:
    ktr: float = 0.7680
    kprol: float = 0.7680
    gamma: float = 0.17
    slope: float = 0.126
    circ0: float = 5e9

    def __post_init__(self):
        for f in fields(self):
            _require(getattr(self, f.name) > 0, f"MyeloParams.{f.name} must be > 0")


@dataclass(frozen=True)
class MyeloState:
    prol: Any
    t1: Any
    t2: Any
    t3: Any
    circ: Any

    @classmethod
    def baseline(cls, circ0: float) -> "MyeloState":
        return cls(circ0, circ0, circ0, circ0, circ0)


@dataclass(frozen=True)
class PatientModel:
    pk: PkParams = field(default_factory=PkParams)
    tumor: TumorParams = field(default_factory=TumorParams)
    myelo: MyeloParams = field(default_factory=MyeloParams)
    initial_pk: PkState = field(default_factory=PkState)
    initial_tumor: TumorState = field(default_factory=TumorState)
    initial_myelo: MyeloState | None = None

    def __post_init__(self):
        if self.initial_myelo is None:
            object.__setattr__(self, "initial_myelo", MyeloState.baseline(self.myelo.circ0))
        _require(self.initial_pk.xc >= 0 and self.initial_pk.xp >= 0,
                 "initial drug amounts must be >= 0")
        _require(self.initial_tumor.x1 >= 0 and self.initial_tumor.x2 >= 0,
                 "initial tumor counts must be >= 0")
        m = self.initial_myelo
        _require(min(m.prol, m.t1, m.t2, m.t3, m.circ) > 0,
                 "initial myelo compartments must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "PatientModel":
        """Build a patient from a (possibly partial) nested mapping.

        Missing sections and fields fall back to the defaults. If
        ``initial_myelo`` is absent it is derived from the (possibly
        overridden) ``circ0`` so the patient starts at steady state.
        Unknown keys raise ``ValueError``.
        """
        sections = {f.name: f for f in fields(cls)}
        unknown = set(doc) - set(sections)
        if unknown:
            raise ValueError(f"unknown patient sections: {sorted(unknown)}")
        base = default_patient()
        kwargs: dict[str, Any] = {}
        for name, typ in (("pk", PkParams), ("tumor", TumorParams), ("myelo", MyeloParams),
                          ("initial_pk", PkState), ("initial_tumor", TumorState)):
            kwargs[name] = _merge(getattr(base, name), doc.get(name, {}), typ)
        if "initial_myelo" in doc and doc["initial_myelo"] is not None:
            myelo0 = MyeloState.baseline(kwargs["myelo"].circ0)
            kwargs["initial_myelo"] = _merge(myelo0, doc["initial_myelo"], MyeloState)
        return cls(**kwargs)


def _merge(base, overrides: Mapping[str, Any], typ):
    if not isinstance(overrides, Mapping):
        raise ValueError(f"{typ.__name__} section must be an object")
    names = {f.name for f in fields(typ)}
    unknown = set(overrides) - names
    if unknown:
        raise ValueError(f"unknown {typ.__name__} fields: {sorted(unknown)}")
    values = {k: float(v) for k, v in overrides.items()}
    return replace(base, **values)


def default_patient() -> PatientModel:
    """Reference etoposide (VP-16) patient.

    The tumor starts at 1e12 cells split 8e11 cycling / 2e11 resting, and the
    marrow chain starts at steady state with every compartment at ``circ0``.
    """
    return PatientModel()


def plasma_concentration(pk_state: PkState, params: PkParams):
    return pk_state.xc / params.vc


def pk_rhs(state: PkState, params: PkParams):
    """Free (dose-less) two-compartment dynamics; dosing is applied as a bolus by the caller."""
    dxc = params.k21 * state.xp - (params.k12 + params.k10) * state.xc
    dxp = params.k12 * state.xc - params.k21 * state.xp
    return dxc, dxp


def drug_kill_rate(concentration, params: TumorParams):
    return params.k1 * concentration


def tumor_rhs(state: TumorState, kill_rate, params: TumorParams):
    dx1 = ((params.alpha - params.mu - params.eta) * state.x1
           + params.beta * state.x2 - kill_rate * state.x1)
    dx2 = params.mu * state.x1 - params.beta * state.x2
    return dx1, dx2


def drug_effect(concentration, params: MyeloParams, clamp_at_one: bool = False):
    effect = params.slope * concentration
    if clamp_at_one:
        effect = np.minimum(effect, 1.0)
    return effect


def _myelo_derivatives(state: MyeloState, e_drug, params: MyeloParams):
    ktr = params.ktr
    feedback = (params.circ0 / state.circ) ** params.gamma
    dprol = params.kprol * state.prol * (1.0 - e_drug) * feedback - ktr * state.prol
    dt1 = ktr * state.prol - ktr * state.t1
    dt2 = ktr * state.t1 - ktr * state.t2
    dt3 = ktr * state.t2 - ktr * state.t3
    dcirc = ktr * state.t3 - ktr * state.circ
    return dprol, dt1, dt2, dt3, dcirc


def myelo_rhs(state: MyeloState, e_drug, params: MyeloParams):
    """Derivatives of (prol, t1, t2, t3, circ).

    Raises:
        ModelDomainError: if any ``circ`` is not strictly positive, where the
            feedback term ``(circ0 / circ) ** gamma`` is undefined.
    """
    if np.any(np.asarray(state.circ) <= 0):
        raise ModelDomainError("circulating neutrophil count must be > 0")
    return _myelo_derivatives(state, e_drug, params)
