"""File formats: patient JSON, schedules, trajectory CSV, archive/front JSON, stats CSV."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import fields
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .models import PatientModel, default_patient
from .mopso.archive import Member, ParetoArchive
from .mopso.swarm import GenerationStats, SwarmConfig
from .simulator import TRAJECTORY_COLUMNS, PlanReport, SimConfig, Trajectory

STATS_COLUMNS = ("gen", "archive_size", "hypervolume", "best_f1", "best_f2")


class FormatError(ValueError):
    """Malformed input file or payload."""


def load_patient(path: str | Path | None) -> PatientModel:
    if path is None:
        return default_patient()
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read patient file {path}: {exc}") from exc
    return patient_from_dict(doc)


def patient_from_dict(doc: Any) -> PatientModel:
    if not isinstance(doc, Mapping):
        raise FormatError("patient document must be a JSON object")
    try:
        return PatientModel.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid patient: {exc}") from exc


def _from_dict(cls, doc: Any, what: str, converters: Mapping[str, Any] | None = None):
    if doc is None:
        return cls()
    if not isinstance(doc, Mapping):
        raise FormatError(f"{what} must be a JSON object")
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise FormatError(f"unknown {what} fields: {sorted(unknown)}")
    kwargs = dict(doc)
    for key, conv in (converters or {}).items():
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = conv(kwargs[key])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid {what}: {exc}") from exc


def sim_config_from_dict(doc: Any) -> SimConfig:
    return _from_dict(SimConfig, doc, "sim config", {"dose_times": tuple})


def swarm_config_from_dict(doc: Any) -> SwarmConfig:
    return _from_dict(SwarmConfig, doc, "swarm config", {"bounds": tuple, "hv_reference": tuple})


def parse_schedule_text(text: str) -> list[float]:
    """A JSON array of numbers, or one number per line (CSV, optional header)."""
    stripped = text.strip()
    if stripped.startswith("["):
        try:
            values = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise FormatError(f"schedule is not valid JSON: {exc}") from exc
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
            raise FormatError("schedule JSON must be an array of numbers")
        return [float(v) for v in values]
    rows = [r for r in csv.reader(io.StringIO(stripped)) if r and any(c.strip() for c in r)]
    out = []
    for i, row in enumerate(rows):
        if len(row) != 1:
            raise FormatError(f"schedule CSV line {i + 1} must have exactly one column")
        try:
            out.append(float(row[0]))
        except ValueError:
            if i == 0:
                continue
            raise FormatError(f"schedule CSV line {i + 1} is not a number: {row[0]!r}") from None
    return out


def load_schedule(path: str | Path) -> list[float]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read schedule file {path}: {exc}") from exc
    return parse_schedule_text(text)


def trajectory_columns(traj: Trajectory, max_points: int | None = None) -> dict[str, list[float]]:
    """Column-oriented trajectory; with ``max_points`` a uniform stride is applied, keeping the last sample."""
    k = len(traj)
    idx = np.arange(k)
    if max_points is not None and k > max_points:
        stride = -(-(k - 1) // (max_points - 2))
        idx = np.arange(0, k, stride)
        if idx[-1] != k - 1:
            idx = np.append(idx, k - 1)
    return {name: traj.column(name)[idx].tolist() for name in TRAJECTORY_COLUMNS}


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    cols = [traj.column(name) for name in TRAJECTORY_COLUMNS]
    for i in range(len(traj)):
        w.writerow([repr(float(c[i])) for c in cols])
    return buf.getvalue()


def report_json(rep: PlanReport) -> str:
    return json.dumps(rep.to_dict(), indent=2) + "\n"


def archive_json(members: ParetoArchive | Iterable[Member] | list[dict]) -> str:
    """Serialize members f1-ascending; re-exporting an imported archive reproduces the bytes."""
    if isinstance(members, ParetoArchive):
        docs = members.snapshot()
    else:
        docs = [m.to_dict() if isinstance(m, Member) else dict(m) for m in members]
    return json.dumps(docs, indent=2) + "\n"


def load_archive(text: str) -> list[Member]:
    try:
        docs = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"archive is not valid JSON: {exc}") from exc
    if not isinstance(docs, list):
        raise FormatError("archive must be a JSON list")
    try:
        return [Member.from_dict(d) for d in docs]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed archive entry: {exc}") from exc


def stats_csv(stats: Iterable[GenerationStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_COLUMNS)
    for s in stats:
        w.writerow([s.gen, s.archive_size, repr(s.hypervolume), repr(s.best_f1), repr(s.best_f2)])
    return buf.getvalue()


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
