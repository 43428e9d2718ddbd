import time

import pytest
from fastapi.testclient import TestClient

from chemoplan.objectives import dominates, ObjectiveVector
from chemoplan.service import create_app


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


SMALL = {"swarm": {"population": 50, "generations": 10, "seed": 5}}


def wait_done(client, job_id, timeout=120.0):
    seen = []
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        doc = client.get(f"/api/jobs/{job_id}").json()
        seen.append(doc["status"])
        if doc["status"] in ("done", "failed"):
            return doc, seen
        time.sleep(0.05)
    raise AssertionError(f"job {job_id} did not finish")


def test_default_params(client):
    doc = client.get("/api/params/default").json()
    assert doc["pk"]["k10"] == 1.14
    assert doc["myelo"]["circ0"] == 5e9
    assert doc["initial_tumor"]["x1"] + doc["initial_tumor"]["x2"] == pytest.approx(1e12)


def test_simulate_untreated(client):
    r = client.post("/api/simulate", json={"schedule": [0] * 21})
    assert r.status_code == 200
    body = r.json()
    assert body["objectives"]["f2"] == pytest.approx(5e9)
    assert body["objectives"]["feasible"] is True
    assert body["report"]["avg_dose"] == 0


def test_simulate_uniform(client):
    body = client.post("/api/simulate", json={"schedule": [3.0] * 21}).json()
    assert body["report"]["avg_dose"] == pytest.approx(3.0)


def test_trajectory_agrees_with_objectives(client):
    body = client.post("/api/simulate", json={"schedule": [1.0, 2.0, 0.5] * 7}).json()
    traj, obj = body["trajectory"], body["objectives"]
    assert len(traj["t_days"]) <= 2000
    assert traj["x1"][-1] + traj["x2"][-1] == pytest.approx(obj["f1"], rel=1e-12)
    assert traj["circ"][-1] == pytest.approx(obj["f2"], rel=1e-12)
    assert min(traj["circ"]) >= obj["min_circ"]


def test_simulate_is_deterministic(client):
    body = {"schedule": [2.0] * 21}
    assert client.post("/api/simulate", json=body).content == client.post("/api/simulate", json=body).content


def test_dose_out_of_range(client):
    sched = [1.0] * 21
    sched[4] = 6.0
    r = client.post("/api/simulate", json={"schedule": sched})
    assert r.status_code == 400
    err = r.json()["error"]
    assert err["code"] == "dose_out_of_range"
    assert err["detail"]["index"] == 4 and err["detail"]["bound"] == 5.0 and err["detail"]["value"] == 6.0


@pytest.mark.parametrize("body, code", [
    ({"schedule": [1.0] * 20}, "schedule_length"),
    ({"schedule": "abc"}, "invalid_schedule"),
    ({"schedule": [True] * 21}, "invalid_schedule"),
    ({"schedule": [0] * 21, "patient": {"pk": {"k10": -1}}}, "invalid_config"),
    ({"schedule": [0] * 21, "sim": {"bogus": 1}}, "invalid_config"),
    ([1, 2], "invalid_request"),
])
def test_simulate_bad_requests(client, body, code):
    r = client.post("/api/simulate", json=body)
    assert r.status_code == 400
    assert r.json()["error"]["code"] == code


def test_malformed_json(client):
    r = client.post("/api/simulate", content=b"{not json", headers={"content-type": "application/json"})
    assert r.status_code == 400
    assert "error" in r.json()


def test_simulation_failure_is_422(client):
    patient = {"myelo": {"slope": 1e6}}
    r = client.post("/api/simulate", json={"schedule": [5.0] * 21, "patient": patient})
    assert r.status_code == 422
    err = r.json()["error"]
    assert err["code"] == "simulation_failure"
    assert err["detail"]["step"] >= 0


def test_patient_override(client):
    body = client.post("/api/simulate", json={"schedule": [0] * 21,
                                              "patient": {"myelo": {"circ0": 4e9}}}).json()
    assert body["objectives"]["f2"] == pytest.approx(4e9)


def test_unknown_job(client):
    assert client.get("/api/jobs/nope").status_code == 404
    r = client.get("/api/jobs/nope/front")
    assert r.status_code == 404 and r.json()["error"]["code"] == "unknown_job"


def test_optimize_job_lifecycle(client):
    r = client.post("/api/optimize", json=SMALL)
    assert r.status_code == 202
    job_id = r.json()["job_id"]
    doc, seen = wait_done(client, job_id)
    assert doc["status"] == "done", doc
    order = {"queued": 0, "running": 1, "done": 2}
    assert [order[s] for s in seen] == sorted(order[s] for s in seen)
    assert doc["progress"] == doc["generations"] == 10
    result = doc["result"]
    objs = [ObjectiveVector.from_dict(d) for d in result]
    assert not any(dominates(a, b) for a in objs for b in objs)
    front = client.get(f"/api/jobs/{job_id}/front").json()
    assert front["generation"] == 10
    assert [d["f1"] for d in front["front"]] == [d["f1"] for d in result]
    assert {d["region"] for d in front["front"]} <= {"cure", "control", "palliation"}


def test_same_seed_same_front(client):
    fronts = []
    for _ in range(2):
        job_id = client.post("/api/optimize", json=SMALL).json()["job_id"]
        doc, _ = wait_done(client, job_id)
        fronts.append(doc["result"])
    assert fronts[0] == fronts[1]


def test_front_not_ready_while_queued():
    # one worker: the second job waits behind the first
    with TestClient(create_app(job_workers=1)) as c:
        first = c.post("/api/optimize", json={"swarm": {"population": 100, "generations": 15}}).json()["job_id"]
        second = c.post("/api/optimize", json=SMALL).json()["job_id"]
        r = c.get(f"/api/jobs/{second}/front")
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "front_not_ready"
        assert c.get(f"/api/jobs/{second}").json()["status"] == "queued"
        assert wait_done(c, first)[0]["status"] == "done"
        assert wait_done(c, second)[0]["status"] == "done"


def test_optimize_bad_config(client):
    r = client.post("/api/optimize", json={"swarm": {"inertia_w": 2.0}})
    assert r.status_code == 400
    assert r.json()["error"]["code"] == "invalid_config"
