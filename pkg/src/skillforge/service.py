"""HTTP front door: program CRUD and execution, playing and diagnosis
sessions with live server-sent-event streams, and memory queries.

Every session is seeded and echoes its seed, so anything triggered through
the API can be reproduced from the CLI with the same numbers.
"""

import json
import threading
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, StreamingResponse

from . import playing as _playing
from .catalog import diagnosis_candidates
from .diagnosis import diagnose, train_models
from .errors import (
    AstValidationError, DuplicateIdError, SchemaViolationError, SkillForgeError,
    UnknownIdError,
)
from .playing import PlayConfig, ensure_perception, play, serialize_ecm
from .world import FaultSpec


@dataclass
class EventEnvelope:
    session_id: str
    seq: int
    kind: str          # episode-result | walk-path | blame-snapshot | execution-finished
    payload: dict


@dataclass
class ApiSession:
    id: str
    kind: str          # ProgramRun | Playing | Diagnosis
    seed: int
    state: str = "Pending"
    error: str | None = None
    result: dict = field(default_factory=dict)
    events: list = field(default_factory=list)

    def to_dict(self):
        return {"id": self.id, "kind": self.kind, "seed": self.seed,
                "state": self.state, "error": self.error, "result": self.result,
                "events": len(self.events)}


class SessionManager:
    def __init__(self):
        self._sessions = {}
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._counter = 0

    def create(self, kind, seed):
        with self._lock:
            self._counter += 1
            session = ApiSession(id=f"s{self._counter}", kind=kind, seed=seed)
            self._sessions[session.id] = session
            return session

    def get(self, session_id):
        with self._lock:
            if session_id not in self._sessions:
                raise UnknownIdError("session", session_id)
            return self._sessions[session_id]

    def set_state(self, session, state, error=None, result=None):
        with self._cond:
            session.state = state
            session.error = error
            if result is not None:
                session.result = result
            self._cond.notify_all()

    def emit(self, session, kind, payload):
        with self._cond:
            envelope = EventEnvelope(session.id, len(session.events), kind, payload)
            session.events.append(envelope)
            self._cond.notify_all()
            return envelope

    def events_since(self, session, cursor):
        with self._lock:
            return list(session.events[cursor:])

    def wait_for_more(self, session, cursor, timeout=0.5):
        with self._cond:
            if len(session.events) > cursor:
                return True
            self._cond.wait(timeout)
            return len(session.events) > cursor


def _spawn(target):
    thread = threading.Thread(target=target, daemon=True)
    thread.start()
    return thread


def create_app(engine):
    app = FastAPI(title="skillforge", version="1")
    sessions = SessionManager()
    app.state.engine = engine
    app.state.sessions = sessions

    @app.exception_handler(SkillForgeError)
    def _domain_error(request, exc):
        if isinstance(exc, AstValidationError):
            return JSONResponse(status_code=422, content={
                "error": "validation",
                "diagnostics": [{"path": p, "message": m} for p, m in exc.diagnostics]})
        if isinstance(exc, UnknownIdError):
            return JSONResponse(status_code=404, content={"error": str(exc)})
        if isinstance(exc, DuplicateIdError):
            return JSONResponse(status_code=409, content={"error": str(exc)})
        if isinstance(exc, SchemaViolationError):
            return JSONResponse(status_code=422, content={"error": str(exc)})
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(ValueError)
    def _value_error(request, exc):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    # ------------------------------------------------------------- registry

    @app.get("/v1/hardware")
    def get_hardware():
        handles = [engine.acquire_hardware(n) for n in engine.hardware.names()]
        return [{"name": h.name, "kind": h.kind, "channels": list(h.channels)}
                for h in handles]

    @app.get("/v1/behaviours")
    def get_behaviours():
        return engine.palette()

    @app.get("/v1/skills")
    def get_skills(hardware: str | None = None):
        ids = (engine.list_skills_for_hardware(hardware.split(","))
               if hardware is not None else sorted(engine.skills))
        out = []
        for skill_id in ids:
            skill = engine.skill(skill_id)
            out.append({
                "id": skill.id, "basic_behaviour": skill.basic_behaviour,
                "predicate": skill.success_predicate,
                "required_hardware": sorted(skill.required_hardware),
                "trained": skill.ecm is not None, "promoted": skill.promoted})
        return out

    @app.post("/v1/skills", status_code=201)
    async def post_skill(request: Request):
        body = await request.json()
        name = body["name"]
        behaviour = body.get("behaviour")
        if body.get("program_id"):
            doc = engine.get_program(body["program_id"])
            behaviour = f"{name}_basic"
            engine.register_program_behaviour(behaviour, _prog_root(doc))
        skill = engine.create_skill(name, behaviour, body["predicate"],
                                    tuple(body.get("hardware", ())))
        return {"id": skill.id}

    # ------------------------------------------------------------- programs

    @app.post("/v1/programs", status_code=201)
    async def post_program(request: Request):
        doc = await request.json()
        program_id = engine.save_program(doc)
        return {"id": program_id}

    @app.get("/v1/programs/{program_id}")
    def get_program(program_id: str):
        return {"id": program_id, "document": engine.get_program(program_id)}

    @app.put("/v1/programs/{program_id}")
    def put_program(program_id: str, doc: dict):
        engine.get_program(program_id)
        engine.save_program(doc, program_id=program_id)
        return {"id": program_id}

    @app.post("/v1/programs/{program_id}/run", status_code=202)
    async def run_program(program_id: str, request: Request):
        body = await request.json()
        doc = engine.get_program(program_id)
        scenario = body.get("scenario", "flat")
        seed = int(body.get("seed", int(time.time()) % 2 ** 31))
        session = sessions.create("ProgramRun", seed)

        def task():
            sessions.set_state(session, "Running")
            try:
                world = engine.create_world(scenario, seed)
                final, record = engine.interpret_program(
                    doc, world, np.random.default_rng(seed), program_id=program_id)
                payload = {"record_id": record.id, "success": record.success,
                           "failure_reason": record.failure_reason,
                           "world": final.to_dict()}
                sessions.emit(session, "execution-finished", payload)
                sessions.set_state(session, "Done", result=payload)
            except SkillForgeError as exc:
                sessions.emit(session, "execution-finished", {"error": str(exc)})
                sessions.set_state(session, "Failed", error=str(exc))

        _spawn(task)
        return {"session": session.id, "seed": seed}

    # --------------------------------------------------------------- skills

    @app.post("/v1/skills/{skill_id}/play", status_code=202)
    async def play_skill(skill_id: str, request: Request):
        body = await request.json()
        skill = engine.skill(skill_id)
        episodes = int(body.get("episodes", 100))
        seed = int(body.get("seed", 0))
        config = PlayConfig(
            episodes=episodes, seed=seed,
            reward=float(body.get("reward", engine.config.play.reward)),
            damping=float(body.get("damping", engine.config.play.damping)))
        config.validate()
        session = sessions.create("Playing", seed)

        def task():
            sessions.set_state(session, "Running")
            try:
                ensure_perception(engine, skill)

                def on_episode(event):
                    sessions.emit(session, "episode-result", event)

                ecm, curve = play(engine, skill, config, on_episode=on_episode)
                summary = {"episodes": episodes,
                           "final_running_mean": curve[-1][2] if curve else None,
                           "promoted": skill.promoted}
                sessions.emit(session, "execution-finished", summary)
                sessions.set_state(session, "Done", result=summary)
            except SkillForgeError as exc:
                sessions.emit(session, "execution-finished", {"error": str(exc)})
                sessions.set_state(session, "Failed", error=str(exc))

        _spawn(task)
        return {"session": session.id, "seed": seed}

    @app.get("/v1/skills/{skill_id}/ecm")
    def get_ecm(skill_id: str):
        skill = engine.skill(skill_id)
        if skill.ecm is None:
            raise UnknownIdError("trained ecm for skill", skill_id)
        return serialize_ecm(skill.ecm)

    @app.get("/v1/skills/{skill_id}/doa")
    def get_doa(skill_id: str, scenario: str | None = None, seed: int = 0):
        skill = engine.skill(skill_id)
        setup = engine.skill_setups.get(skill_id)
        scenario = scenario or (setup.scenario if setup else None)
        if scenario is None:
            raise SkillForgeError(f"skill {skill_id!r} has no probe scenario")
        situations = _playing.situations_for_scenario(engine, scenario)
        for situation in situations:
            situation["seed"] = seed
            seed += 1
        record = engine.probe_doa(skill, situations)
        return {"skill": skill_id, "probes": [
            {"situation": descriptor, "success": success}
            for descriptor, success in record.probed_situations]}

    # ------------------------------------------------------------ diagnosis

    @app.post("/v1/diagnosis", status_code=202)
    async def post_diagnosis(request: Request):
        body = await request.json()
        budget = int(body.get("budget", 15))
        seed = int(body.get("seed", 0))
        inject = body.get("inject")
        training_runs = int(body.get("training_runs", 15))
        session = sessions.create("Diagnosis", seed)

        def task():
            sessions.set_state(session, "Running")
            try:
                candidates = diagnosis_candidates(engine)
                models = train_models(engine, candidates, runs=training_runs,
                                      rng=np.random.default_rng(seed + 1))
                engine.clear_faults()
                if inject:
                    engine.inject_fault(FaultSpec(
                        inject["function_id"], inject.get("mode", "fail_hard"),
                        float(inject.get("trigger_probability", 1.0)),
                        float(inject.get("sensor_bias", 0.0))))
                try:
                    def on_step(event):
                        sessions.emit(session, "blame-snapshot", event)

                    blame, diag = diagnose(engine, candidates, models, budget,
                                           np.random.default_rng(seed), on_step=on_step)
                finally:
                    engine.clear_faults()
                result = {"argmax": blame.argmax(), "top": blame.top(10),
                          "tests_executed": diag.executed, "steps": diag.rows()}
                session.result = result
                sessions.emit(session, "execution-finished",
                              {"argmax": result["argmax"],
                               "tests_executed": result["tests_executed"]})
                sessions.set_state(session, "Done", result=result)
            except SkillForgeError as exc:
                sessions.emit(session, "execution-finished", {"error": str(exc)})
                sessions.set_state(session, "Failed", error=str(exc))

        _spawn(task)
        return {"session": session.id, "seed": seed}

    @app.get("/v1/diagnosis/{session_id}/blame")
    def get_blame(session_id: str):
        session = sessions.get(session_id)
        if session.kind != "Diagnosis":
            raise UnknownIdError("diagnosis session", session_id)
        deadline = time.time() + 30.0
        while session.state in ("Pending", "Running") and time.time() < deadline:
            time.sleep(0.02)
        if session.state != "Done":
            raise SkillForgeError(f"diagnosis session is {session.state}: {session.error}")
        return session.result

    # ------------------------------------------------------------ executions

    @app.get("/v1/executions")
    def get_executions(skill: str | None = None, success: bool | None = None,
                       limit: int = Query(default=50, le=500)):
        records = engine.store.fetch_executions(ref_id=skill, success=success, limit=limit)
        return [{"id": r.id, "ref_id": r.ref_id, "kind": r.kind,
                 "start_tick": r.start_tick, "end_tick": r.end_tick,
                 "success": r.success, "hardware": list(r.hardware),
                 "situation": r.situation} for r in records]

    @app.get("/v1/executions/{record_id}/sensors")
    def get_sensors(record_id: int):
        record = engine.store.fetch_execution(record_id)
        return {"channels": list(record.sensor.channels),
                "ticks": record.sensor.ticks,
                "values": record.sensor.values.tolist()}

    @app.get("/v1/executions/{record_id}/profile")
    def get_profile(record_id: int):
        record = engine.store.fetch_execution(record_id)
        return {"functions": list(record.profile.functions),
                "ticks": record.profile.ticks,
                "counts": record.profile.counts.tolist()}

    # -------------------------------------------------------------- sessions

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        return sessions.get(session_id).to_dict()

    @app.get("/v1/sessions/{session_id}/events")
    def get_events(session_id: str, request: Request,
                   cursor: int = Query(default=None, alias="from")):
        session = sessions.get(session_id)
        last_event_id = request.headers.get("last-event-id")
        start = 0
        if cursor is not None:
            start = cursor
        elif last_event_id is not None:
            start = int(last_event_id) + 1

        def stream():
            position = start
            while True:
                for envelope in sessions.events_since(session, position):
                    position = envelope.seq + 1
                    data = json.dumps(envelope.payload)
                    yield f"id: {envelope.seq}\nevent: {envelope.kind}\ndata: {data}\n\n"
                    if envelope.kind == "execution-finished":
                        return
                if not sessions.wait_for_more(session, position) \
                        and session.state in ("Done", "Failed") \
                        and position >= len(session.events):
                    return

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def _prog_root(doc):
    from .program import parse_program

    return parse_program(doc)


def serve(config, engine=None):
    """Run the HTTP service until interrupted."""
    import uvicorn

    from .catalog import build_engine

    engine = engine or build_engine(config)
    app = create_app(engine)
    uvicorn.run(app, host="127.0.0.1", port=config.port, log_level="warning")
