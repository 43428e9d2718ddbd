"""Command-line entry point: ``chemoplan simulate|optimize|report|serve``.

Exit codes: 0 ok, 2 malformed input or config, 3 simulation failure,
4 port already in use.
"""

from __future__ import annotations

import argparse
import json
import logging
import socket
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from . import __version__
from .io import (
    FormatError,
    archive_json,
    load_archive,
    load_patient,
    load_schedule,
    patient_from_dict,
    report_json,
    sha256_file,
    sim_config_from_dict,
    stats_csv,
    swarm_config_from_dict,
    trajectory_csv,
)
from .models import PatientModel, default_patient
from .mopso import SwarmConfig, run
from .regions import REGIONS, classify_regions, labelled_front
from .simulator import (
    DoseSchedule,
    PlanReport,
    ScheduleEvaluator,
    SimConfig,
    SimulationFailure,
    evaluate,
    report,
    simulate,
)

log = logging.getLogger("chemoplan")

EXIT_OK, EXIT_INPUT, EXIT_SIM, EXIT_PORT = 0, 2, 3, 4


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    patient: PatientModel = field(default_factory=default_patient)
    sim: SimConfig = field(default_factory=SimConfig)
    swarm: SwarmConfig = field(default_factory=SwarmConfig)
    output_dir: Path = Path("chemoplan_out")
    region_quantiles: tuple[float, float] = (1 / 3, 2 / 3)
    workers: int = 1

    def to_dict(self) -> dict:
        return {
            "patient": self.patient.to_dict(),
            "sim": asdict(self.sim),
            "swarm": asdict(self.swarm),
            "output_dir": str(self.output_dir),
            "region_quantiles": list(self.region_quantiles),
            "workers": self.workers,
        }


def load_run_config(args: argparse.Namespace) -> RunConfig:
    doc: dict[str, Any] = {}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise FormatError("config must be a JSON object")
        unknown = set(doc) - {"patient", "sim", "swarm", "output_dir", "region_quantiles", "workers"}
        if unknown:
            raise FormatError(f"unknown config keys: {sorted(unknown)}")

    if getattr(args, "patient", None):
        patient = load_patient(args.patient)
    elif isinstance(doc.get("patient"), str):
        patient = load_patient(doc["patient"])
    elif doc.get("patient") is not None:
        patient = patient_from_dict(doc["patient"])
    else:
        patient = default_patient()

    sim = sim_config_from_dict(doc.get("sim"))
    swarm = swarm_config_from_dict(doc.get("swarm"))
    overrides = {k: getattr(args, k, None) for k in ("seed", "population", "generations")}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        try:
            swarm = replace(swarm, **overrides)
        except ValueError as exc:
            raise FormatError(str(exc)) from exc
    if swarm.dimensions != sim.n_doses:
        swarm = replace(swarm, dimensions=sim.n_doses)

    quantiles = tuple(float(q) for q in doc.get("region_quantiles", (1 / 3, 2 / 3)))
    if len(quantiles) != 2 or not 0 < quantiles[0] < quantiles[1] < 1:
        raise FormatError("region_quantiles must be two increasing fractions in (0, 1)")
    out = getattr(args, "out", None) or doc.get("output_dir") or "chemoplan_out"
    workers = getattr(args, "workers", None) or int(doc.get("workers", 1))
    return RunConfig(patient, sim, swarm, Path(out), quantiles, workers)


def write_manifest(out: Path, command: str, cfg: RunConfig, artifacts: list[str],
                   partial: bool = False, extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.swarm.seed,
        "partial": partial,
        "config": cfg.to_dict(),
        "artifacts": {name: sha256_file(out / name) for name in artifacts},
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _format_pct(rep: PlanReport) -> str:
    if rep.tumor_grew:
        return "0 (grew)"
    text = f"{rep.pct_reduction:.4f}"
    if text == "100.0000" and rep.cells_remaining > 0:
        return "≈100"
    return text


TABLE_HEADER = ("Selected Solutions", "Drug Dose Avg", "Drug Concentration Avg",
                "Neutrophil Count Avg", "Cells Remaining", "% Reduction")


def format_table(rows: list[tuple[str, PlanReport]]) -> str:
    """Plain-text comparison table, one row per selected plan."""
    cells = [TABLE_HEADER]
    for name, rep in rows:
        cells.append((name, f"{rep.avg_dose:.4f}", f"{rep.avg_concentration:.4f}",
                      f"{rep.avg_circ:.4e}", str(rep.cells_remaining), _format_pct(rep)))
    widths = [max(len(r[i]) for r in cells) for i in range(len(TABLE_HEADER))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    cfg = load_run_config(args)
    doses = load_schedule(args.schedule)
    if len(doses) != cfg.sim.n_doses:
        raise UsageError(f"schedule length mismatch: got {len(doses)} doses, "
                         f"horizon of {cfg.sim.horizon_days} days needs {cfg.sim.n_doses}")
    lo, hi = cfg.swarm.bounds
    schedule = DoseSchedule(doses, lo, hi)
    traj = simulate(schedule, cfg.patient, cfg.sim)
    rep = report(schedule, traj, cfg.patient)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.csv").write_text(trajectory_csv(traj))
    (out / "report.json").write_text(report_json(rep))
    write_manifest(out, "simulate", cfg, ["trajectory.csv", "report.json"],
                   extra={"schedule": list(schedule.doses)})
    print(format_table([("plan", rep)]), end="")
    print(f"min circ {traj.min_circ:.4e}  threshold {cfg.sim.circ_threshold:.4e}  "
          f"feasible {traj.min_circ >= cfg.sim.circ_threshold}")
    return EXIT_OK


def _flush_optimize(out: Path, cfg: RunConfig, snapshot: list[dict], stats: list,
                    partial: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "archive.json").write_text(archive_json(snapshot))
    (out / "stats.csv").write_text(stats_csv(stats))
    front = labelled_front(snapshot, cfg.region_quantiles) if snapshot else []
    (out / "front.json").write_text(json.dumps(front, indent=2) + "\n")
    write_manifest(out, "optimize", cfg, ["archive.json", "stats.csv", "front.json"], partial=partial,
                   extra={"generations_completed": stats[-1].gen if stats else None})


def optimize(cfg: RunConfig, callback=None):
    """Run the swarm on the simulator objective; reference point = untreated plan at the toxicity floor."""
    evaluator = ScheduleEvaluator(cfg.patient, cfg.sim)
    swarm = cfg.swarm
    if swarm.hv_reference is None:
        untreated = evaluate([0.0] * cfg.sim.n_doses, cfg.patient, cfg.sim)
        swarm = replace(swarm, hv_reference=(untreated.f1, cfg.sim.circ_threshold))
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return run(evaluator, swarm, executor=pool, chunks=cfg.workers, callback=callback)
    return run(evaluator, swarm, callback=callback)


def cmd_optimize(args) -> int:
    cfg = load_run_config(args)
    state: dict[str, Any] = {"snapshot": [], "stats": []}

    def progress(gen, archive, stats):
        state["snapshot"] = archive.snapshot()
        state["stats"].append(stats)
        log.info("gen %d archive %d hv %.6g", gen, stats.archive_size, stats.hypervolume)

    try:
        optimize(cfg, progress)
    except KeyboardInterrupt:
        _flush_optimize(cfg.output_dir, cfg, state["snapshot"], state["stats"], partial=True)
        print(f"interrupted; partial results in {cfg.output_dir}", file=sys.stderr)
        return 130
    _flush_optimize(cfg.output_dir, cfg, state["snapshot"], state["stats"], partial=False)
    snap = state["snapshot"]
    feasible = sum(1 for d in snap if d["feasible"])
    print(f"{len(snap)} non-dominated plans ({feasible} feasible) written to {cfg.output_dir}")
    return EXIT_OK


def _pick_regions(members) -> list[int]:
    labels = classify_regions([m.objectives for m in members])
    picks = []
    for region in REGIONS:
        ix = [i for i, lab in enumerate(labels) if lab == region]
        if ix:
            picks.append(ix[len(ix) // 2])
    return picks


def cmd_report(args) -> int:
    cfg = load_run_config(args)
    try:
        text = Path(args.archive).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read archive {args.archive}: {exc}") from exc
    members = load_archive(text)
    indices = _pick_regions(members) if args.regions else list(args.indices or [])
    for i in indices:
        if not 0 <= i < len(members):
            raise UsageError(f"index {i} out of range for archive of {len(members)} members")
    rows = []
    for k, i in enumerate(indices, 1):
        schedule = DoseSchedule(members[i].position, *cfg.swarm.bounds)
        traj = simulate(schedule, cfg.patient, cfg.sim)
        rows.append((f"Sol-{k} (#{i})", report(schedule, traj, cfg.patient)))
    table = format_table(rows)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "report_table.txt").write_text(table)
    (out / "reports.json").write_text(json.dumps(
        [{"index": i, **rep.to_dict()} for i, (_, rep) in zip(indices, rows)], indent=2) + "\n")
    write_manifest(out, "report", cfg, ["report_table.txt", "reports.json"],
                   extra={"archive": str(args.archive), "archive_sha256": sha256_file(args.archive),
                          "indices": indices})
    print(table, end="")
    return EXIT_OK


def bind_socket(host: str, port: int) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        sock.bind((host, port))
    except OSError:
        sock.close()
        raise
    return sock


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = load_run_config(args)
    try:
        sock = bind_socket(args.host, args.port)
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_PORT
    host, port = sock.getsockname()[:2]
    print(f"serving on http://{host}:{port}", flush=True)
    app = create_app(default_patient=cfg.patient, default_sim=cfg.sim, default_swarm=cfg.swarm,
                     region_quantiles=cfg.region_quantiles)
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    server.run(sockets=[sock])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--patient", help="patient parameter JSON (default: reference patient)")
    common.add_argument("--config", help="run config JSON")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="chemoplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate one dosing schedule")
    p.add_argument("schedule", help="JSON array or one-column CSV of daily doses")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", parents=[common], help="run the particle swarm")
    p.add_argument("--population", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--workers", type=int, help="evaluation processes (results identical to 1)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("report", parents=[common], help="tabulate selected archive members")
    p.add_argument("archive", help="archive.json from optimize")
    p.add_argument("indices", nargs="*", type=int, help="member indices (f1-ascending order)")
    p.add_argument("--regions", action="store_true", help="pick the median member of each region")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", parents=[common], help="start the HTTP plan service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SimulationFailure as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
