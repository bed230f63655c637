"""HTTP service: registry dumps, program CRUD, sessions and SSE streams."""

import json
import os
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from skillforge import build_engine
from skillforge.config import EngineConfig
from skillforge.service import create_app

GOLDEN = os.path.join(os.path.dirname(__file__), "..", "golden")


@pytest.fixture
def client():
    engine = build_engine(EngineConfig())
    app = create_app(engine)
    with TestClient(app) as c:
        c.engine = engine
        yield c


def sse_events(client, session_id, cursor=None, headers=None):
    params = {"from": cursor} if cursor is not None else {}
    events = []
    with client.stream("GET", f"/v1/sessions/{session_id}/events", params=params,
                       headers=headers or {}) as response:
        buffer = ""
        for chunk in response.iter_text():
            buffer += chunk
        for block in buffer.strip().split("\n\n"):
            lines = dict(line.split(": ", 1) for line in block.splitlines())
            events.append({"id": int(lines["id"]), "kind": lines["event"],
                           "payload": json.loads(lines["data"])})
    return events


def wait_done(client, session_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        state = client.get(f"/v1/sessions/{session_id}").json()["state"]
        if state in ("Done", "Failed"):
            return state
        time.sleep(0.02)
    raise TimeoutError("session did not finish")


def test_hardware_and_palette(client):
    hardware = client.get("/v1/hardware").json()
    assert {h["name"] for h in hardware} >= {"left_arm", "left_hand", "camera"}
    palette = client.get("/v1/behaviours").json()
    assert "sensing" in palette
    assert any(b["id"] == "sliding" for b in palette["sensing"])


def test_skills_listing_and_filter(client):
    all_skills = client.get("/v1/skills").json()
    assert any(s["id"] == "book_grasping" for s in all_skills)
    filtered = client.get("/v1/skills", params={"hardware": "camera"}).json()
    assert {s["id"] for s in filtered} == {
        s.id for s in client.engine.skills.values()
        if s.required_hardware <= {"camera"}}


def test_program_crud_and_validation(client):
    with open(os.path.join(GOLDEN, "simple_grasp.ast.json")) as fh:
        doc = json.load(fh)
    created = client.post("/v1/programs", json=doc)
    assert created.status_code == 201
    program_id = created.json()["id"]
    fetched = client.get(f"/v1/programs/{program_id}")
    assert fetched.json()["document"] == doc

    updated = dict(doc)
    response = client.put(f"/v1/programs/{program_id}", json=updated)
    assert response.status_code == 200

    bad = {"ast_version": 1, "root": {"kind": "sequence", "children": [
        {"kind": "behaviour", "behaviour": "warp", "params": {}}]}}
    response = client.post("/v1/programs", json=bad)
    assert response.status_code == 422
    body = response.json()
    assert body["diagnostics"][0]["path"].startswith("$.root.children[0]")

    assert client.get("/v1/programs/nope").status_code == 404


def test_program_run_session(client):
    with open(os.path.join(GOLDEN, "simple_grasp.ast.json")) as fh:
        doc = json.load(fh)
    program_id = client.post("/v1/programs", json=doc).json()["id"]
    run = client.post(f"/v1/programs/{program_id}/run",
                      json={"scenario": "flat", "seed": 5})
    assert run.status_code == 202
    assert run.json()["seed"] == 5
    session_id = run.json()["session"]
    assert wait_done(client, session_id) == "Done"
    events = sse_events(client, session_id)
    assert events[-1]["kind"] == "execution-finished"
    assert events[-1]["payload"]["success"] is True

    record_id = events[-1]["payload"]["record_id"]
    sensors = client.get(f"/v1/executions/{record_id}/sensors").json()
    assert sensors["ticks"] > 0 and len(sensors["values"]) == len(sensors["channels"])
    profile = client.get(f"/v1/executions/{record_id}/profile").json()
    assert profile["ticks"] == sensors["ticks"]


def test_play_session_event_stream_gapless(client):
    run = client.post("/v1/skills/book_grasping/play",
                      json={"episodes": 40, "seed": 3})
    assert run.status_code == 202
    session_id = run.json()["session"]
    wait_done(client, session_id)
    events = sse_events(client, session_id)
    ids = [e["id"] for e in events]
    assert ids == list(range(len(ids)))
    episode_events = [e for e in events if e["kind"] == "episode-result"]
    assert len(episode_events) == 40
    assert events[-1]["kind"] == "execution-finished"
    assert [e["payload"]["episode"] for e in episode_events] == list(range(40))


def test_event_stream_reconnect_from_cursor(client):
    run = client.post("/v1/skills/book_grasping/play",
                      json={"episodes": 25, "seed": 1})
    session_id = run.json()["session"]
    wait_done(client, session_id)
    full = sse_events(client, session_id)
    head = sse_events(client, session_id, cursor=0)[:10]
    resumed = sse_events(client, session_id, headers={"Last-Event-ID": "9"})
    assert [e["id"] for e in head + resumed] == [e["id"] for e in full]
    assert head + resumed == full


def test_ecm_and_doa_endpoints(client):
    run = client.post("/v1/skills/book_grasping/play",
                      json={"episodes": 150, "seed": 42})
    wait_done(client, run.json()["session"], timeout=60)
    ecm = client.get("/v1/skills/book_grasping/ecm").json()
    assert ecm["ecm_version"] == 1
    assert any(c["layer"] == 4 for c in ecm["clips"])
    assert all(e["h"] >= 1.0 for e in ecm["edges"])

    doa = client.get("/v1/skills/book_grasping/doa").json()
    assert len(doa["probes"]) == 4

    assert client.get("/v1/skills/shelf_placement/ecm").status_code == 404


def test_diagnosis_session_and_blame(client):
    run = client.post("/v1/diagnosis", json={
        "budget": 15, "seed": 7,
        "inject": {"function_id": "set_stiffness", "mode": "fail_hard"}})
    assert run.status_code == 202
    session_id = run.json()["session"]
    assert wait_done(client, session_id, timeout=60) == "Done"
    blame = client.get(f"/v1/diagnosis/{session_id}/blame").json()
    assert blame["argmax"] == "set_stiffness"
    assert blame["tests_executed"] <= 15
    events = sse_events(client, session_id)
    kinds = {e["kind"] for e in events}
    assert "blame-snapshot" in kinds and "execution-finished" in kinds


def test_executions_listing_idempotent(client):
    run = client.post("/v1/skills/book_grasping/play", json={"episodes": 5, "seed": 2})
    wait_done(client, run.json()["session"])
    first = client.get("/v1/executions", params={"skill": "book_grasping"}).json()
    second = client.get("/v1/executions", params={"skill": "book_grasping"}).json()
    assert first == second and len(first) == 5


def test_create_skill_from_program(client):
    with open(os.path.join(GOLDEN, "simple_grasp.ast.json")) as fh:
        doc = json.load(fh)
    program_id = client.post("/v1/programs", json=doc).json()["id"]
    response = client.post("/v1/skills", json={
        "name": "grasp_twin", "program_id": program_id,
        "predicate": "object_held",
        "hardware": ["left_arm", "left_hand", "camera"]})
    assert response.status_code == 201
    listed = client.get("/v1/skills").json()
    assert any(s["id"] == "grasp_twin" for s in listed)


def test_api_engine_equivalence(tmp_path):
    """The same seed through the API and the engine yields identical records."""
    doc = json.load(open(os.path.join(GOLDEN, "simple_grasp.ast.json")))

    api_engine = build_engine(EngineConfig())
    with TestClient(create_app(api_engine)) as client:
        program_id = client.post("/v1/programs", json=doc).json()["id"]
        run = client.post(f"/v1/programs/{program_id}/run",
                          json={"scenario": "flat", "seed": 17})
        wait_done(client, run.json()["session"])
    api_record = api_engine.store.fetch_executions(limit=1)[0]

    direct_engine = build_engine(EngineConfig())
    world = direct_engine.create_world("flat", 17)
    direct_engine.interpret_program(doc, world, np.random.default_rng(17),
                                    program_id=program_id)
    direct_record = direct_engine.store.fetch_executions(limit=1)[0]
    assert api_record.sensor == direct_record.sensor
    assert api_record.profile == direct_record.profile
    assert api_record.success == direct_record.success
