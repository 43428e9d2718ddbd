import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chemoplan.cli import TABLE_HEADER, _format_pct, format_table
from chemoplan.io import (
    STATS_COLUMNS,
    FormatError,
    archive_json,
    load_archive,
    parse_schedule_text,
    sim_config_from_dict,
    stats_csv,
    swarm_config_from_dict,
    trajectory_columns,
    trajectory_csv,
)
from chemoplan.mopso import ParetoArchive, SwarmConfig, run
from chemoplan.objectives import ObjectiveVector
from chemoplan.regions import CONTROL, CURE, PALLIATION, classify_regions, labelled_front
from chemoplan.simulator import TRAJECTORY_COLUMNS, DoseSchedule, PlanReport, SimConfig, simulate


def front(n):
    return [ObjectiveVector(float(i), float(i)) for i in range(n)]


def test_three_members_one_per_region():
    assert classify_regions(front(3)) == [CURE, CONTROL, PALLIATION]


def test_single_member_is_cure():
    assert classify_regions(front(1)) == [CURE]


def test_labels_follow_input_order():
    objs = front(3)[::-1]
    assert classify_regions(objs) == [PALLIATION, CONTROL, CURE]


@given(st.integers(1, 200))
def test_labels_partition_front(n):
    labels = classify_regions(front(n))
    assert len(labels) == n
    assert set(labels) <= {CURE, CONTROL, PALLIATION}
    # cure members all have lower f1 than control members, and so on
    order = [CURE, CONTROL, PALLIATION]
    ranks = [order.index(lab) for lab in labels]
    assert ranks == sorted(ranks)


def test_absolute_thresholds():
    objs = front(6)
    assert classify_regions(objs, f1_thresholds=(2, 4)) == [CURE] * 2 + [CONTROL] * 2 + [PALLIATION] * 2
    assert classify_regions(objs, f2_thresholds=(1, 5)) == [CURE] + [CONTROL] * 4 + [PALLIATION]


def test_bad_cuts_rejected():
    with pytest.raises(ValueError):
        classify_regions(front(3), (0.7, 0.3))


def test_labelled_front_adds_region():
    docs = [{"f1": 1.0, "f2": 2.0}, {"f1": 3.0, "f2": 4.0}]
    assert [d["region"] for d in labelled_front(docs)] == [CURE, CONTROL]


# --- schedules ---------------------------------------------------------------

def test_schedule_json():
    assert parse_schedule_text("[1, 2.5, 0]") == [1.0, 2.5, 0.0]


def test_schedule_csv_with_header():
    assert parse_schedule_text("dose\n1\n2\n\n3\n") == [1.0, 2.0, 3.0]


@pytest.mark.parametrize("text", ["[1, true]", "[1, ", "1\nx\n", "1,2\n3,4\n"])
def test_bad_schedules(text):
    with pytest.raises(FormatError):
        parse_schedule_text(text)


def test_unknown_config_fields_rejected():
    with pytest.raises(FormatError):
        sim_config_from_dict({"horizon": 21})
    with pytest.raises(FormatError):
        swarm_config_from_dict({"population": 1})


def test_config_lists_become_tuples():
    cfg = swarm_config_from_dict({"bounds": [0, 4], "hv_reference": [1, 2]})
    assert cfg.bounds == (0.0, 4.0) and cfg.hv_reference == (1.0, 2.0)


# --- trajectory files ---------------------------------------------------------

@pytest.fixture(scope="module")
def traj():
    from chemoplan.models import default_patient
    return simulate(DoseSchedule.uniform(1.0), default_patient(), SimConfig())


def test_trajectory_csv_header_and_rows(traj):
    rows = list(csv.reader(io.StringIO(trajectory_csv(traj))))
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS
    assert len(rows) == len(traj) + 1
    assert float(rows[-1][0]) == pytest.approx(21.0)


def test_trajectory_downsampling_keeps_last(traj):
    cols = trajectory_columns(traj, 2000)
    assert len(traj) > 2000
    assert len(cols["t_days"]) <= 2000
    assert cols["t_days"][0] == 0.0 and cols["t_days"][-1] == pytest.approx(21.0)
    assert cols["circ"][-1] == traj.column("circ")[-1]
    assert np.all(np.diff(cols["t_days"]) > 0)


def test_trajectory_not_downsampled_when_short(traj):
    assert len(trajectory_columns(traj)["t_days"]) == len(traj)


# --- archive and stats -------------------------------------------------------

def _toy(x):
    return ObjectiveVector(float(np.sum(x ** 2)), float(-np.sum((x - 1.0) ** 2)))


@pytest.fixture(scope="module")
def toy_run():
    return run(_toy, SwarmConfig(population=20, generations=5, dimensions=3, bounds=(-1, 2), seed=1))


def test_archive_round_trip_is_byte_identical(toy_run):
    text = archive_json(toy_run.archive)
    assert archive_json(load_archive(text)) == text


def test_archive_export_sorted_by_f1(toy_run):
    docs = json.loads(archive_json(toy_run.archive))
    f1 = [d["f1"] for d in docs]
    assert f1 == sorted(f1)
    assert set(docs[0]) == {"position", "f1", "f2", "min_circ", "feasible"}


def test_empty_archive_exports_empty_list():
    assert json.loads(archive_json(ParetoArchive())) == []


@pytest.mark.parametrize("text", ["{}", "[{\"f1\": 1}]", "not json"])
def test_bad_archive(text):
    with pytest.raises(FormatError):
        load_archive(text)


def test_stats_csv(toy_run):
    rows = list(csv.reader(io.StringIO(stats_csv(toy_run.stats))))
    assert tuple(rows[0]) == STATS_COLUMNS
    assert [int(r[0]) for r in rows[1:]] == list(range(6))


# --- report formatting -------------------------------------------------------

def test_pct_near_total_kill_shows_approx():
    rep = PlanReport(1.0, 1.0, 1.0, 48, 100 * (1 - 48 / 1e12))
    assert _format_pct(rep) == "≈100"


def test_pct_tumor_growth():
    assert _format_pct(PlanReport(0.0, 0.0, 5e9, 2 * 10**12, 0.0, tumor_grew=True)) == "0 (grew)"


def test_pct_regular():
    assert _format_pct(PlanReport(1.0, 1.0, 1.0, 5 * 10**11, 50.0)) == "50.0000"


def test_table_layout():
    rep = PlanReport(1.0, 0.1, 4e9, 10, 99.0)
    lines = format_table([("Sol-1", rep), ("Sol-2", rep)]).splitlines()
    assert len(lines) == 3
    for name in TABLE_HEADER:
        assert name in lines[0]
    assert lines[1].startswith("Sol-1")


def test_report_json_keys():
    doc = PlanReport(1.0, 0.1, 4e9, 10, 99.0).to_dict()
    assert set(doc) == {"avg_dose", "avg_concentration", "avg_circ", "cells_remaining",
                        "pct_reduction", "tumor_grew"}
