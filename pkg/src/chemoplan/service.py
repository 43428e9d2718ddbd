"""Local HTTP API over the simulator and the optimizer.

Errors are returned as ``{"error": {"code", "message", "detail"}}``.
Optimization jobs run in-process on a small thread pool; clients poll
``/api/jobs/{id}`` and may read the current front while a job runs.
"""

from __future__ import annotations

import math
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import asdict, dataclass, field, replace
from typing import Any

from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .io import FormatError, patient_from_dict, sim_config_from_dict, swarm_config_from_dict, trajectory_columns
from .models import PatientModel
from .mopso import SwarmConfig, run
from .regions import labelled_front
from .simulator import (
    DoseSchedule,
    ScheduleError,
    ScheduleEvaluator,
    SimConfig,
    SimulationFailure,
    evaluate,
    report,
    simulate,
)

MAX_WIRE_SAMPLES = 2000

QUEUED, RUNNING, DONE, FAILED = "queued", "running", "done", "failed"
_ORDER = {QUEUED: 0, RUNNING: 1, DONE: 2, FAILED: 2}


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: Any = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


@dataclass
class JobRecord:
    id: str
    generations: int
    status: str = QUEUED
    progress: int = -1
    snapshot: tuple = ()
    result: list | None = None
    error: str | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def transition(self, status: str) -> None:
        with self._lock:
            if _ORDER[status] <= _ORDER[self.status]:
                raise RuntimeError(f"job {self.id}: illegal transition {self.status} -> {status}")
            self.status = status

    def publish(self, gen: int, snapshot: list[dict]) -> None:
        with self._lock:
            self.progress = gen
            self.snapshot = tuple(snapshot)

    def view(self) -> dict:
        with self._lock:
            doc = {"id": self.id, "status": self.status, "progress": max(self.progress, 0),
                   "generations": self.generations}
            if self.status == DONE:
                doc["result"] = self.result
            if self.error:
                doc["error"] = self.error
            return doc


class JobStore:
    def __init__(self, workers: int = 1):
        self._jobs: dict[str, JobRecord] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="chemoplan-job")

    def get(self, job_id: str) -> JobRecord | None:
        with self._lock:
            return self._jobs.get(job_id)

    def submit(self, patient: PatientModel, sim: SimConfig, swarm: SwarmConfig) -> JobRecord:
        job = JobRecord(uuid.uuid4().hex, swarm.generations)
        with self._lock:
            self._jobs[job.id] = job
        self._pool.submit(self._run, job, patient, sim, swarm)
        return job

    @staticmethod
    def _run(job: JobRecord, patient: PatientModel, sim: SimConfig, swarm: SwarmConfig) -> None:
        job.transition(RUNNING)
        try:
            if swarm.hv_reference is None:
                untreated = evaluate([0.0] * sim.n_doses, patient, sim)
                swarm = replace(swarm, hv_reference=(untreated.f1, sim.circ_threshold))
            result = run(ScheduleEvaluator(patient, sim), swarm,
                         callback=lambda gen, archive, _stats: job.publish(gen, archive.snapshot()))
            job.result = _json_safe(result.archive.snapshot())
            job.transition(DONE)
        except Exception as exc:  # job failures are reported, never raised into the pool
            job.error = str(exc)
            job.transition(FAILED)

    def shutdown(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)


def _merged(base, overrides: Any, parse):
    if overrides is None:
        return base
    if not isinstance(overrides, dict):
        raise FormatError("configuration sections must be JSON objects")
    doc = asdict(base)
    unknown = set(overrides) - set(doc)
    if unknown:
        raise FormatError(f"unknown fields: {sorted(unknown)}")
    doc.update(overrides)
    return parse(doc)


def create_app(default_patient: PatientModel | None = None, default_sim: SimConfig | None = None,
               default_swarm: SwarmConfig | None = None,
               region_quantiles: tuple[float, float] = (1 / 3, 2 / 3), job_workers: int = 1) -> FastAPI:
    from .models import default_patient as reference_patient

    base_patient = default_patient or reference_patient()
    base_sim = default_sim or SimConfig()
    base_swarm = default_swarm or SwarmConfig()

    jobs = JobStore(job_workers)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        jobs.shutdown()

    app = FastAPI(title="chemoplan", version="0.1.0", lifespan=lifespan)
    app.state.jobs = jobs

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={
            "error": {"code": exc.code, "message": exc.message, "detail": _json_safe(exc.detail)}})

    @app.exception_handler(RequestValidationError)
    async def _bad_body(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={
            "error": {"code": "invalid_request", "message": "request body is not valid JSON",
                      "detail": str(exc.errors())}})

    def parse_common(payload: dict):
        try:
            patient = base_patient if payload.get("patient") is None else patient_from_dict(payload["patient"])
            sim = _merged(base_sim, payload.get("sim"), sim_config_from_dict)
        except FormatError as exc:
            raise ApiError(400, "invalid_config", str(exc)) from exc
        return patient, sim

    def require_object(payload: Any) -> dict:
        if payload is None:
            return {}
        if not isinstance(payload, dict):
            raise ApiError(400, "invalid_request", "request body must be a JSON object")
        return payload

    @app.get("/api/params/default")
    def params_default():
        return reference_patient().to_dict()

    @app.post("/api/simulate")
    def api_simulate(payload: Any = Body(None)):
        payload = require_object(payload)
        doses = payload.get("schedule")
        if not isinstance(doses, list) or not all(
                isinstance(d, (int, float)) and not isinstance(d, bool) for d in doses):
            raise ApiError(400, "invalid_schedule", "schedule must be an array of numbers")
        patient, sim = parse_common(payload)
        if len(doses) != sim.n_doses:
            raise ApiError(400, "schedule_length",
                           f"schedule has {len(doses)} doses, horizon needs {sim.n_doses}",
                           {"expected": sim.n_doses, "got": len(doses)})
        try:
            schedule = DoseSchedule(doses, *base_swarm.bounds)
        except ScheduleError as exc:
            raise ApiError(400, "dose_out_of_range", str(exc),
                           {"index": exc.index, "bound": exc.bound,
                            "value": doses[exc.index] if exc.index is not None else None}) from exc
        try:
            traj = simulate(schedule, patient, sim)
        except SimulationFailure as exc:
            raise ApiError(422, "simulation_failure", str(exc),
                           {"step": exc.step, "time": exc.time}) from exc
        except ValueError as exc:
            raise ApiError(400, "invalid_config", str(exc)) from exc
        fin = traj.final
        objectives = {"f1": float(fin[2] + fin[3]), "f2": float(fin[8]), "min_circ": traj.min_circ,
                      "feasible": traj.min_circ >= sim.circ_threshold}
        return _json_safe({
            "trajectory": trajectory_columns(traj, MAX_WIRE_SAMPLES),
            "report": report(schedule, traj, patient).to_dict(),
            "objectives": objectives,
        })

    @app.post("/api/optimize", status_code=202)
    def api_optimize(payload: Any = Body(None)):
        payload = require_object(payload)
        patient, sim = parse_common(payload)
        try:
            swarm = _merged(base_swarm, payload.get("swarm"), swarm_config_from_dict)
        except FormatError as exc:
            raise ApiError(400, "invalid_config", str(exc)) from exc
        if swarm.dimensions != sim.n_doses:
            swarm = replace(swarm, dimensions=sim.n_doses)
        job = app.state.jobs.submit(patient, sim, swarm)
        return {"job_id": job.id}

    def get_job(job_id: str) -> JobRecord:
        job = app.state.jobs.get(job_id)
        if job is None:
            raise ApiError(404, "unknown_job", f"no job with id {job_id}")
        return job

    @app.get("/api/jobs/{job_id}")
    def api_job(job_id: str):
        return get_job(job_id).view()

    @app.get("/api/jobs/{job_id}/front")
    def api_front(job_id: str):
        job = get_job(job_id)
        with job._lock:
            snapshot, gen, status = job.snapshot, job.progress, job.status
        if gen < 0:
            raise ApiError(409, "front_not_ready", "no generation has completed yet",
                           {"status": status})
        front = labelled_front(list(snapshot), region_quantiles) if snapshot else []
        return _json_safe({"job_id": job_id, "status": status, "generation": gen, "front": front})

    return app
