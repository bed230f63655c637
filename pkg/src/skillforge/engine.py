"""Execution engine: registries, instrumented behaviour execution, skills and
program interpretation.

All state changes run through one code path (`_execute_behaviour`) which
drives the tick loop: function enter/exit instrumentation, per-tick sensor
snapshots into every open recording session, fault triggering, and domain
failures. Skills and programs wrap that path with a recording session and
persist the resulting execution record.
"""

import itertools
import json
import threading
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np

from . import behaviours as _beh
from . import program as _prog
from . import world as _world
from .config import EngineConfig
from .errors import (
    AstValidationError, BehaviourFailure, DuplicateIdError, SchemaViolationError,
    UnknownIdError,
)
from .memory import ExecutionRecord, ExperienceStore, FaultEvent, RecordingSession
from .world import (
    FaultRegistry, HardwareRegistry, RIGHT_HOME_POSE, ScenarioCatalog,
    create_world, read_success_ground_truth,
)


@dataclass
class RegisteredBehaviour:
    descriptor: _beh.BehaviourDescriptor
    executor: object = None          # plan-based primitive
    program: object = None           # composite interpreted from an AST node


@dataclass
class Skill:
    id: str
    basic_behaviour: str | None      # None = empty basic behaviour (identity)
    success_predicate: str
    required_hardware: frozenset
    ecm: object = None
    perceptual_model: object = None
    promoted: bool = False
    recent_outcomes: deque = field(default_factory=lambda: deque(maxlen=200))


@dataclass
class SkillSetup:
    """Playing wiring for a skill: where it trains and with what options."""

    scenario: str
    sensing_actions: list
    preparatory_options: list        # playing.PrepOption


@dataclass
class DoaRecord:
    skill_id: str
    probed_situations: list          # (situation descriptor, success) pairs


@dataclass
class BehaviourResult:
    world: object
    sensor: object
    trace: object
    completed: bool
    failure_reason: str | None
    profile: object = None

    def __iter__(self):
        return iter((self.world, self.sensor, self.trace))


class _ExecutionContext:
    def __init__(self, world, rng, session):
        self.world = world
        self.rng = rng
        self.sessions = [session]
        self.channels = session.channels
        self.channel_index = {ch: i for i, ch in enumerate(session.channels)}
        self.bias = 0.0


def situation_of(world):
    """Compact, JSON-stable description of the scenario attributes of a world."""
    attrs = {}
    for obj in world.objects:
        entry = {"kind": obj.kind, "orientation": obj.orientation}
        if obj.kind == _world.KIND_BOX_STACK:
            entry["height"] = obj.height
        if obj.kind == _world.KIND_LID_BOX:
            entry["open_lid"] = obj.open_lid
        attrs[obj.id] = entry
    return {"scenario": world.scenario_id, "objects": attrs}


class Engine:
    """One workbench instance: registries plus the experience store."""

    def __init__(self, config=None):
        self.config = config or EngineConfig()
        self.hardware = HardwareRegistry()
        self.faults = FaultRegistry()
        self.functions = set(_beh.FUNCTION_IDS)
        self.scenarios = (ScenarioCatalog.from_file(self.config.scenario_catalog)
                          if self.config.scenario_catalog else ScenarioCatalog())
        self.store = ExperienceStore(self.config.store_path)
        self.behaviours = {}
        self.skills = {}
        self.skill_setups = {}
        self.programs = {}
        self._program_ids = itertools.count(1)
        self._exec_lock = threading.RLock()
        self._registry_lock = threading.RLock()

    # ------------------------------------------------------------------ world

    def create_world(self, scenario_id, seed, overrides=None):
        return create_world(scenario_id, seed, self.scenarios, overrides)

    def evaluate_success(self, predicate_id, world):
        return read_success_ground_truth(world, predicate_id)

    def acquire_hardware(self, name):
        return self.hardware.acquire(name)

    def inject_fault(self, spec):
        self.faults.inject(spec, self.functions)

    def clear_faults(self):
        self.faults.clear()

    # -------------------------------------------------------------- registries

    def register_behaviour(self, descriptor, executor=None, program=None):
        with self._registry_lock:
            if descriptor.id in self.behaviours:
                raise DuplicateIdError(f"behaviour {descriptor.id!r} already registered")
            unknown_hw = descriptor.required_hardware - set(self.hardware.names())
            if unknown_hw:
                raise UnknownIdError("hardware", sorted(unknown_hw)[0])
            unknown_fn = set(descriptor.functions()) - self.functions
            if unknown_fn:
                raise UnknownIdError("function", sorted(unknown_fn)[0])
            if not descriptor.call_tree:
                raise ValueError("call tree must not be empty")
            if executor is not None \
                    and _beh.min_duration(descriptor.call_tree) > descriptor.duration_ticks:
                raise ValueError(
                    f"behaviour {descriptor.id}: call tree does not fit in"
                    f" {descriptor.duration_ticks} ticks")
            for spec in descriptor.parameter_schema:
                if spec.default is not None:
                    spec.coerce(spec.default)
            self.behaviours[descriptor.id] = RegisteredBehaviour(descriptor, executor, program)

    def behaviour(self, behaviour_id):
        try:
            return self.behaviours[behaviour_id]
        except KeyError:
            raise UnknownIdError("behaviour", behaviour_id) from None

    def register_program_behaviour(self, behaviour_id, root, category="composite"):
        """Turn a visual program into a reusable behaviour (a basic-behaviour seed)."""
        diagnostics = self.ast_validator().validate(root)
        if diagnostics:
            raise AstValidationError(diagnostics)
        duration = self._static_duration(root)
        forest = tuple(self._static_call_tree(root))
        hardware = self._static_hardware(root)
        if not forest:
            raise ValueError("program contains no behaviour calls")
        descriptor = _beh.BehaviourDescriptor(
            id=behaviour_id, required_hardware=frozenset(hardware), parameter_schema=(),
            call_tree=forest, duration_ticks=duration, category=category, palette=True)
        self.register_behaviour(descriptor, program=root)
        return descriptor

    def _static_duration(self, node):
        if isinstance(node, _prog.Sequence):
            return sum(self._static_duration(c) for c in node.children)
        if isinstance(node, _prog.Loop):
            return (node.count or 1) * self._static_duration(node.body)
        if isinstance(node, _prog.BehaviourCall):
            return self.behaviour(node.behaviour).descriptor.duration_ticks
        if isinstance(node, _prog.SkillCall):
            skill = self.skill(node.skill)
            basic = skill.basic_behaviour or "b_void"
            return self.behaviour(basic).descriptor.duration_ticks
        if isinstance(node, _prog.WaypointMotion):
            return 5 * len(node.waypoints)
        return 0

    def _static_call_tree(self, node):
        if isinstance(node, _prog.Sequence):
            return [n for c in node.children for n in self._static_call_tree(c)]
        if isinstance(node, _prog.Loop):
            return self._static_call_tree(node.body)
        if isinstance(node, _prog.BehaviourCall):
            return list(self.behaviour(node.behaviour).descriptor.call_tree)
        if isinstance(node, _prog.SkillCall):
            skill = self.skill(node.skill)
            basic = skill.basic_behaviour or "b_void"
            return list(self.behaviour(basic).descriptor.call_tree)
        if isinstance(node, _prog.WaypointMotion):
            return list(self.behaviour("waypoint_motion").descriptor.call_tree)
        return []

    def _static_hardware(self, node):
        if isinstance(node, _prog.Sequence):
            out = set()
            for child in node.children:
                out |= self._static_hardware(child)
            return out
        if isinstance(node, _prog.Loop):
            return self._static_hardware(node.body)
        if isinstance(node, _prog.BehaviourCall):
            return set(self.behaviour(node.behaviour).descriptor.required_hardware)
        if isinstance(node, _prog.SkillCall):
            return set(self.skill(node.skill).required_hardware)
        if isinstance(node, _prog.WaypointMotion):
            return {"left_arm"}
        return set()

    def create_skill(self, name, basic_behaviour, predicate, hardware):
        """Persist an untrained skill around a basic behaviour (or around nothing)."""
        with self._registry_lock:
            if name in self.skills:
                raise DuplicateIdError(f"skill {name!r} already exists")
            if basic_behaviour is not None:
                basic = self.behaviour(basic_behaviour).descriptor
                if not basic.required_hardware <= set(hardware):
                    raise SchemaViolationError(
                        f"skill hardware {sorted(hardware)} does not cover the basic"
                        f" behaviour's set {sorted(basic.required_hardware)}")
            if predicate not in _world.PREDICATES:
                raise UnknownIdError("predicate", predicate)
            unknown_hw = set(hardware) - set(self.hardware.names())
            if unknown_hw:
                raise UnknownIdError("hardware", sorted(unknown_hw)[0])
            skill = Skill(id=name, basic_behaviour=basic_behaviour,
                          success_predicate=predicate,
                          required_hardware=frozenset(hardware))
            self.skills[name] = skill
            self.store.save_skill(name, basic_behaviour, predicate, sorted(hardware))
            return skill

    def skill(self, skill_id):
        try:
            return self.skills[skill_id]
        except KeyError:
            raise UnknownIdError("skill", skill_id) from None

    def list_skills_for_hardware(self, config):
        config = set(config)
        return sorted(s.id for s in self.skills.values() if s.required_hardware <= config)

    def palette(self):
        """Behaviour palette grouped by category, with parameter schemas."""
        groups = defaultdict(list)
        for rb in self.behaviours.values():
            d = rb.descriptor
            if not d.palette:
                continue
            groups[d.category].append({
                "id": d.id,
                "required_hardware": sorted(d.required_hardware),
                "duration_ticks": d.duration_ticks,
                "parameters": [
                    {"name": p.name, "type": p.type, "required": p.required,
                     "default": p.default,
                     "choices": list(p.choices) if p.choices else None}
                    for p in d.parameter_schema],
            })
        return {cat: sorted(entries, key=lambda e: e["id"])
                for cat, entries in sorted(groups.items())}

    # ------------------------------------------------------- programs (CRUD)

    def ast_validator(self):
        return _prog.Validator(
            behaviour_ids=[b for b, rb in self.behaviours.items() if rb.descriptor.palette],
            skill_ids=list(self.skills),
            hardware_names=self.hardware.names(),
            predicate_ids=list(_world.PREDICATES),
            behaviour_hardware=lambda b: set(self.behaviour(b).descriptor.required_hardware),
            skill_hardware=lambda s: set(self.skill(s).required_hardware),
        )

    def save_program(self, doc, program_id=None):
        root = _prog.parse_program(doc)
        diagnostics = self.ast_validator().validate(root)
        if diagnostics:
            raise AstValidationError(diagnostics)
        program_id = program_id or f"program-{next(self._program_ids)}"
        self.programs[program_id] = doc
        return program_id

    def get_program(self, program_id):
        try:
            return self.programs[program_id]
        except KeyError:
            raise UnknownIdError("program", program_id) from None

    # ------------------------------------------------- instrumented execution

    def _channel_bases(self, ctx, plan, world, tick_offset):
        """Noise-free channel values for one tick, in ctx channel order."""
        pose = plan.poses[tick_offset]
        target = None
        if plan.target_id is not None:
            try:
                target = world.object(plan.target_id)
            except UnknownIdError:
                target = None
        if target is None:
            target = world.nearest_object()
        values = np.empty(len(ctx.channels))
        for i, channel in enumerate(ctx.channels):
            if channel == "left_arm.x":
                values[i] = pose[0]
            elif channel == "left_arm.y":
                values[i] = pose[1]
            elif channel == "left_arm.z":
                values[i] = pose[2]
            elif channel == "right_arm.x":
                values[i] = RIGHT_HOME_POSE[0]
            elif channel == "right_arm.y":
                values[i] = RIGHT_HOME_POSE[1]
            elif channel == "right_arm.z":
                values[i] = RIGHT_HOME_POSE[2]
            elif channel == "left_hand.aperture":
                values[i] = 1.0 if world.hand_open else 0.0
            elif channel == "left_hand.touch":
                values[i] = plan.touch_base
            elif channel == "right_hand.aperture":
                values[i] = 1.0
            elif channel == "right_hand.touch":
                values[i] = plan.touch_base if plan.touch_right else 0.0
            elif channel == "camera.obj_x":
                values[i] = target.position[0] if target else 0.0
            elif channel == "camera.obj_y":
                values[i] = target.position[1] if target else 0.0
            else:
                values[i] = 0.0
        return values

    def _record_column(self, ctx, values, tick):
        for session in ctx.sessions:
            session.mark_tick(tick)
            for handle in session.handles:
                block = [values[ctx.channel_index[ch]] for ch in handle.channels]
                session.record_snapshot(handle, block, tick)

    def _execute_behaviour(self, ctx, behaviour_id, params):
        """Run one behaviour inside an open execution context.

        Mutates ctx.world; raises BehaviourFailure on a domain failure or a
        triggered fail-hard fault, after updating ctx.world to the partial
        state the failure left behind.
        """
        rb = self.behaviour(behaviour_id)
        bound = _beh.bind_params(rb.descriptor.parameter_schema, params)
        if rb.program is not None:
            self._interpret_node(ctx, rb.program)
            return
        world = ctx.world
        t0 = world.clock
        plan = rb.executor(world, bound, self)
        spans = _beh.layout_calls(rb.descriptor.call_tree, plan.duration)
        enters_at = defaultdict(list)
        exits_at = defaultdict(list)
        for fid, a, b in spans:
            enters_at[a].append(fid)
            exits_at[b].append(fid)
        noise = ctx.rng.normal(0.0, self.config.sensor.sigma_noise,
                               size=(len(ctx.channels), plan.duration))
        # LIFO stack of open instances: (function, [(session, token), ...])
        open_instances = []

        def abort(tick, reason, new_world):
            while open_instances:
                _fid, tokens = open_instances.pop()
                for session, token in tokens:
                    session.profile_exit(token, tick)
            new_world.clock = tick + 1
            new_world.validate()
            ctx.world = new_world
            raise BehaviourFailure(reason, new_world)

        for t_off in range(plan.duration):
            tick = t0 + t_off
            for fid in enters_at[t_off]:
                tokens = [(s, s.profile_enter(fid, tick)) for s in ctx.sessions]
                open_instances.append((fid, tokens))
                fault = self.faults.check(fid)
                if fault is not None:
                    for session in ctx.sessions:
                        session.profiler.trace.fault_events.append(
                            FaultEvent(fid, fault.mode, tick))
                    if fault.mode == _world.FAULT_DEGRADE_SENSORS:
                        ctx.bias += fault.sensor_bias
                    else:
                        column = (self._channel_bases(ctx, plan, world, t_off)
                                  + noise[:, t_off] + ctx.bias)
                        self._record_column(ctx, column, tick)
                        failed = world.copy()
                        failed.arm_pose = tuple(plan.poses[t_off])
                        abort(tick, f"fault injected in {fid}", failed)
            column = self._channel_bases(ctx, plan, world, t_off) + noise[:, t_off] + ctx.bias
            self._record_column(ctx, column, tick)
            if plan.fail_at == t_off and plan.failed_world is not None:
                abort(tick, plan.failure_reason or "behaviour failed", plan.failed_world)
            for _fid in exits_at[t_off]:
                fid, tokens = open_instances.pop()
                for session, token in tokens:
                    session.profile_exit(token, tick)
        result = plan.result_world
        result.clock = t0 + plan.duration
        result.validate()
        ctx.world = result

    def apply_behaviour(self, world, behaviour_id, params, rng):
        """Run a single behaviour standalone and return its observations."""
        rb = self.behaviour(behaviour_id)
        names = self._hardware_order(rb.descriptor.required_hardware)
        handles = [self.hardware.acquire(n) for n in names]
        with self._exec_lock:
            self.hardware.mark_busy(names)
            try:
                session = RecordingSession(handles, world.clock)
                ctx = _ExecutionContext(world.copy(), rng, session)
                completed, reason = True, None
                try:
                    self._execute_behaviour(ctx, behaviour_id, params)
                except BehaviourFailure as failure:
                    completed, reason = False, failure.reason
            finally:
                self.hardware.release(names)
        sensor, profile, trace, _end = session.close()
        return BehaviourResult(ctx.world, sensor, trace, completed, reason, profile)

    def _hardware_order(self, names):
        order = {name: i for i, name in enumerate(self.hardware.names())}
        return sorted(set(names), key=lambda n: order[n])

    def _execute_and_record(self, kind, ref_id, world, hardware_names, rng, runner,
                            predicate_id=None, situation=None, outer_ctx=None):
        """Run `runner(ctx)` under a recording session and persist the record.

        With `outer_ctx` set, the session nests inside a live execution (skill
        hierarchies): snapshots land in both records and failures re-raise so
        the outer execution aborts too.
        """
        names = self._hardware_order(hardware_names)
        handles = [self.hardware.acquire(n) for n in names]
        completed, reason = True, None
        if outer_ctx is not None:
            ctx = outer_ctx
            session = RecordingSession(handles, ctx.world.clock)
            situation = situation or situation_of(ctx.world)
            ctx.sessions.append(session)
            try:
                runner(ctx)
            except BehaviourFailure as failure:
                completed, reason = False, failure.reason
            finally:
                ctx.sessions.pop()
        else:
            situation = situation or situation_of(world)
            self.hardware.mark_busy(names)
            try:
                session = RecordingSession(handles, world.clock)
                ctx = _ExecutionContext(world.copy(), rng, session)
                try:
                    runner(ctx)
                except BehaviourFailure as failure:
                    completed, reason = False, failure.reason
            finally:
                self.hardware.release(names)
        sensor, profile, trace, end_tick = session.close()
        success = completed and (
            self.evaluate_success(predicate_id, ctx.world) if predicate_id else True)
        record = ExecutionRecord(
            ref_id=ref_id, kind=kind, start_tick=session.start_tick, end_tick=end_tick,
            success=success, sensor=sensor, profile=profile,
            hardware=tuple(names), situation=situation)
        self.store.persist_execution(record)
        record.trace = trace
        record.failure_reason = reason
        if outer_ctx is not None and not completed:
            raise BehaviourFailure(reason, ctx.world)
        return ctx.world, record

    # -------------------------------------------------------------- programs

    def _interpret_node(self, ctx, node):
        if isinstance(node, _prog.Sequence):
            for child in node.children:
                self._interpret_node(ctx, child)
        elif isinstance(node, _prog.Loop):
            if node.count is not None:
                for _ in range(node.count):
                    self._interpret_node(ctx, node.body)
            else:
                iterations = 0
                while self.evaluate_success(node.while_predicate, ctx.world):
                    self._interpret_node(ctx, node.body)
                    iterations += 1
                    if iterations >= _prog.WHILE_MAX_ITERATIONS:
                        raise BehaviourFailure("while loop exceeded iteration cap", ctx.world)
        elif isinstance(node, _prog.BehaviourCall):
            self._execute_behaviour(ctx, node.behaviour, node.params)
        elif isinstance(node, _prog.SkillCall):
            self._execute_skill_core(self.skill(node.skill), ctx)
        elif isinstance(node, _prog.HardwareDecl):
            for name in node.names:
                self.hardware.acquire(name)
        elif isinstance(node, _prog.WaypointMotion):
            self._execute_behaviour(
                ctx, "waypoint_motion", {"waypoints": [list(w) for w in node.waypoints]})
        else:
            raise ValueError(f"cannot interpret node {node!r}")

    def interpret_program(self, root_or_doc, world, rng, program_id="adhoc",
                          predicate_id=None):
        """Validate and execute a program; failures surface as a failed record."""
        root = (_prog.parse_program(root_or_doc) if isinstance(root_or_doc, dict)
                else root_or_doc)
        diagnostics = self.ast_validator().validate(root)
        if diagnostics:
            raise AstValidationError(diagnostics)
        hardware = self._static_hardware(root)
        with self._exec_lock:
            return self._execute_and_record(
                "program", program_id, world, hardware, rng,
                lambda ctx: self._interpret_node(ctx, root), predicate_id=predicate_id)

    # ---------------------------------------------------------------- skills

    def _execute_skill_core(self, skill, outer_ctx):
        """Skill execution inside an existing context (skill hierarchies)."""
        self._execute_and_record(
            "skill", skill.id, outer_ctx.world, skill.required_hardware, outer_ctx.rng,
            self._skill_runner(skill), predicate_id=skill.success_predicate,
            outer_ctx=outer_ctx)

    def _skill_runner(self, skill):
        if skill.ecm is not None:
            from .playing import trained_runner
            return trained_runner(self, skill)

        def run_basic(ctx):
            self._execute_behaviour(ctx, skill.basic_behaviour or "b_void", {})

        return run_basic

    def execute_skill(self, skill_or_id, world, rng):
        """Execute a skill: basic behaviour alone when untrained, greedy ECM
        policy (sensing, classification, preparation, basic) when trained.
        The full observation is persisted either way."""
        skill = skill_or_id if isinstance(skill_or_id, Skill) else self.skill(skill_or_id)
        with self._exec_lock:
            return self._execute_and_record(
                "skill", skill.id, world, skill.required_hardware, rng,
                self._skill_runner(skill), predicate_id=skill.success_predicate)

    def probe_doa(self, skill_or_id, situations, seed=0):
        """Execute the skill once per situation from a fresh world; no learning."""
        skill = skill_or_id if isinstance(skill_or_id, Skill) else self.skill(skill_or_id)
        seen = set()
        for descriptor in situations:
            key = json.dumps(descriptor, sort_keys=True)
            if key in seen:
                raise ValueError(f"duplicate situation in probe batch: {descriptor}")
            seen.add(key)
        results = []
        for i, descriptor in enumerate(situations):
            world = self.create_world(descriptor["scenario"],
                                      descriptor.get("seed", seed + i),
                                      overrides=descriptor.get("overrides"))
            rng = np.random.default_rng(descriptor.get("seed", seed + i))
            _, record = self.execute_skill(skill, world, rng)
            results.append((descriptor, record.success))
        return DoaRecord(skill.id, results)

    def note_play_outcomes(self, skill, outcomes, ecm):
        """Attach a trained ECM and refresh the promotion flag."""
        skill.recent_outcomes.extend(bool(o) for o in outcomes)
        skill.ecm = ecm
        window = self.config.play.promotion_window
        recent = list(skill.recent_outcomes)[-window:]
        rate = sum(recent) / len(recent) if recent else 0.0
        skill.promoted = (ecm is not None and len(recent) >= window
                          and rate >= self.config.play.promotion_threshold)
        from .playing import serialize_ecm
        self.store.save_skill(skill.id, skill.basic_behaviour, skill.success_predicate,
                              sorted(skill.required_hardware),
                              ecm_json=json.dumps(serialize_ecm(ecm)),
                              promoted=skill.promoted)
