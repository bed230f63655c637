"""Behaviour catalog: descriptors, parameter schemas, call trees and executors.

An executor is a pure planner: given the current world and bound parameters it
returns a BehaviourPlan describing duration, the arm path, the completed
world, an optional mid-run domain failure, and the touch-channel base emitted
while the behaviour runs. The engine drives the tick loop, instrumentation
and fault injection around the plan.
"""

from dataclasses import dataclass

from . import world as _world
from .errors import SchemaViolationError
from .world import (
    BIN_POSITION, BUTTON_POSITION, FRONT_POSITION, HOME_POSE, HOVER_Z,
    KIND_BOOK, KIND_BOX_STACK, KIND_LID_BOX,
    clamp_position, graspable,
)

# ---------------------------------------------------------------------------
# Instrumented function registry

FUNCTION_IDS = (
    "capture_image",
    "check_grasp",
    "check_limits",
    "close_gripper",
    "compute_ik",
    "compute_push",
    "compute_rotation",
    "estimate_pose",
    "home_position",
    "idle",
    "interpolate_waypoints",
    "move_cartesian",
    "move_joint",
    "open_gripper",
    "plan_cartesian",
    "plan_joint",
    "poke_contact",
    "press_contact",
    "push_contact",
    "segment_scene",
    "sense_touch",
    "set_stiffness",
    "slide_contact",
)


@dataclass(frozen=True)
class CallNode:
    function: str
    children: tuple = ()


def call_tree(spec):
    """Shorthand: a call forest from nested (fid, [children]) tuples/strings."""
    out = []
    for item in spec:
        if isinstance(item, str):
            out.append(CallNode(item))
        else:
            fid, children = item
            out.append(CallNode(fid, tuple(call_tree(children))))
    return tuple(out)


def tree_functions(forest):
    seen = []

    def rec(nodes):
        for node in nodes:
            if node.function not in seen:
                seen.append(node.function)
            rec(node.children)

    rec(forest)
    return seen


def _split_sizes(span, k):
    base, rem = divmod(span, k)
    return [base + (1 if i < rem else 0) for i in range(k)]


def layout_calls(forest, duration):
    """Assign each call-tree node a closed [enter, exit] tick-offset span.

    Siblings split their parent's span into contiguous chunks; children are
    co-extensive with their parent. Returns depth-first (function, enter,
    exit) triples in enter order, which is also the runtime event order.
    """
    spans = []

    def rec(nodes, a, b):
        sizes = _split_sizes(b - a + 1, len(nodes))
        if min(sizes) < 1:
            raise ValueError("call tree breadth exceeds behaviour duration")
        cursor = a
        for node, size in zip(nodes, sizes):
            enter, exit_ = cursor, cursor + size - 1
            spans.append((node.function, enter, exit_))
            if node.children:
                rec(node.children, enter, exit_)
            cursor += size

    if not forest:
        raise ValueError("call tree must not be empty")
    rec(forest, 0, duration - 1)
    return spans


def min_duration(forest):
    def rec(nodes):
        return sum(max(1, rec(n.children)) if n.children else 1 for n in nodes)

    return rec(forest)


# ---------------------------------------------------------------------------
# Parameter schemas

PARAM_TYPES = ("int", "real", "vec2", "enum", "vec3_list")


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str
    required: bool = False
    default: object = None
    choices: tuple | None = None

    def coerce(self, value):
        if self.type == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise SchemaViolationError(f"parameter {self.name!r} must be an integer")
            return value
        if self.type == "real":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise SchemaViolationError(f"parameter {self.name!r} must be a number")
            return float(value)
        if self.type == "vec2":
            try:
                x, y = value
                return (float(x), float(y))
            except (TypeError, ValueError):
                raise SchemaViolationError(f"parameter {self.name!r} must be [x, y]") from None
        if self.type == "enum":
            if value not in (self.choices or ()):
                raise SchemaViolationError(
                    f"parameter {self.name!r} must be one of {self.choices}")
            return value
        if self.type == "vec3_list":
            try:
                return [tuple(float(v) for v in w) for w in value] if all(
                    len(w) == 3 for w in value) else None
            except (TypeError, ValueError):
                pass
            raise SchemaViolationError(f"parameter {self.name!r} must be a list of [x, y, z]")
        raise SchemaViolationError(f"unknown parameter type {self.type!r}")


def bind_params(schema, params):
    params = dict(params or {})
    bound = {}
    for spec in schema:
        if spec.name in params:
            bound[spec.name] = spec.coerce(params.pop(spec.name))
        elif spec.required:
            raise SchemaViolationError(f"missing required parameter {spec.name!r}")
        elif spec.default is not None:
            bound[spec.name] = spec.default
    if params:
        raise SchemaViolationError(f"unknown parameters: {sorted(params)}")
    return bound


# ---------------------------------------------------------------------------
# Plans and descriptors


@dataclass
class BehaviourPlan:
    duration: int
    poses: list                       # arm pose per tick, length == duration
    result_world: object              # world on clean completion (clock unset)
    failed_world: object = None       # world if the domain failure fires
    fail_at: int | None = None        # tick offset of the domain failure
    failure_reason: str | None = None
    touch_base: float = 0.0           # left_hand.touch base while running
    touch_right: bool = False         # mirror the base on right_hand.touch
    target_id: str | None = None      # what the camera is looking at


@dataclass(frozen=True)
class BehaviourDescriptor:
    id: str
    required_hardware: frozenset
    parameter_schema: tuple
    call_tree: tuple
    duration_ticks: int               # nominal; executors may scale it (waypoints)
    category: str = "motion"
    palette: bool = True              # internal pseudo-behaviours stay off the palette

    def functions(self):
        return tree_functions(self.call_tree)


def _interp(start, goal, steps):
    """Linear path from start to goal over `steps` ticks, ending exactly at goal."""
    out = []
    for t in range(steps):
        frac = (t + 1) / steps
        out.append(tuple(s + frac * (g - s) for s, g in zip(start, goal)))
    return out


def _hover(world, obj, steps):
    if obj is None:
        return [tuple(world.arm_pose)] * steps
    goal = (obj.position[0], obj.position[1], HOVER_Z)
    return _interp(world.arm_pose, goal, steps)


def _move_held(world, pose):
    """Carry the held object along with the hand."""
    if world.held_object is not None:
        world.object(world.held_object).position = clamp_position(pose[:2])


def _completed(world, pose=None):
    result = world.copy()
    if pose is not None:
        result.arm_pose = tuple(pose)
        _move_held(result, pose)
    return result


# -- executors ---------------------------------------------------------------


def exec_void(world, params, engine):
    return BehaviourPlan(1, [tuple(world.arm_pose)], world.copy())


def exec_move_home(world, params, engine):
    poses = _interp(world.arm_pose, HOME_POSE, 5)
    return BehaviourPlan(5, poses, _completed(world, HOME_POSE))


def exec_joint_ptp(world, params, engine):
    goal = (params["x"], params["y"], params["z"])
    poses = _interp(world.arm_pose, goal, 5)
    return BehaviourPlan(5, poses, _completed(world, goal))


def exec_cartesian_ptp(world, params, engine):
    goal2 = params.get("goal")
    if goal2 is None:
        target = world.target_object()
        if target is None:
            return BehaviourPlan(5, [tuple(world.arm_pose)] * 5, world.copy(),
                                 failed_world=world.copy(), fail_at=0,
                                 failure_reason="no target for cartesian motion")
        goal2 = target.position
    goal = (goal2[0], goal2[1], HOVER_Z)
    poses = _interp(world.arm_pose, goal, 5)
    return BehaviourPlan(5, poses, _completed(world, goal))


def exec_localise(world, params, engine):
    kind = params.get("kind", "any")
    target = world.nearest_object(kind)
    poses = [tuple(world.arm_pose)] * 5
    if target is None:
        return BehaviourPlan(5, poses, world.copy(), failed_world=world.copy(),
                             fail_at=2, failure_reason=f"no {kind} object found")
    result = world.copy()
    result.localised_object = target.id
    return BehaviourPlan(5, poses, result, target_id=target.id)


def exec_close_hand(world, params, engine):
    result = world.copy()
    result.hand_open = False
    target = world.nearest_object()
    if (target is not None and world.held_object is None and graspable(target)
            and _dist2(world.arm_pose, target.position) <= _world.GRASP_RADIUS ** 2
            and target.kind != KIND_BOX_STACK):
        result.held_object = target.id
    return BehaviourPlan(5, [tuple(world.arm_pose)] * 5, result)


def exec_open_hand(world, params, engine):
    result = world.copy()
    result.hand_open = True
    if result.held_object is not None:
        result.object(result.held_object).position = clamp_position(world.arm_pose[:2])
        result.held_object = None
    return BehaviourPlan(5, [tuple(world.arm_pose)] * 5, result)


def exec_change_stiffness(world, params, engine):
    result = world.copy()
    result.stiffness = params["level"]
    return BehaviourPlan(5, [tuple(world.arm_pose)] * 5, result)


def _dist2(pose, position):
    return (pose[0] - position[0]) ** 2 + (pose[1] - position[1]) ** 2


def _push(world, delta_y):
    target = world.target_object()
    poses = _hover(world, target, 5)
    if target is None:
        return BehaviourPlan(5, poses, world.copy(), failed_world=world.copy(),
                             fail_at=0, failure_reason="nothing to push")
    result = world.copy()
    moved = result.object(target.id)
    moved.position = clamp_position((moved.position[0], moved.position[1] + delta_y))
    result.arm_pose = (moved.position[0], moved.position[1], HOVER_Z)
    return BehaviourPlan(5, poses, result, target_id=target.id)


def exec_push_to_body(world, params, engine):
    return _push(world, -2.0)


def exec_push_from_body(world, params, engine):
    return _push(world, 2.0)


def exec_push_to_position(world, params, engine):
    goal = params["goal"]
    target = world.target_object()
    if target is None:
        return BehaviourPlan(10, [tuple(world.arm_pose)] * 10, world.copy(),
                             failed_world=world.copy(), fail_at=0,
                             failure_reason="nothing to push")
    # Two milestone legs: approach the object, then push it to the goal.
    leg1 = _hover(world, target, 5)
    leg2 = _interp(leg1[-1], (goal[0], goal[1], HOVER_Z), 5)
    result = world.copy()
    result.object(target.id).position = clamp_position(goal)
    result.arm_pose = (goal[0], goal[1], HOVER_Z)
    return BehaviourPlan(10, leg1 + leg2, result, target_id=target.id)


def _rotate(world, new_orientation):
    target = world.target_object()
    poses = _hover(world, target, 5)
    if target is None:
        return BehaviourPlan(5, poses, world.copy(), failed_world=world.copy(),
                             fail_at=0, failure_reason="nothing to rotate")
    result = world.copy()
    result.object(target.id).orientation = new_orientation(result.object(target.id))
    result.arm_pose = poses[-1]
    return BehaviourPlan(5, poses, result, target_id=target.id)


def exec_push_to_orientation(world, params, engine):
    goal = int(params["orientation"])
    return _rotate(world, lambda obj: goal)


def exec_rotate_object(world, params, engine):
    degrees = params["degrees"]
    if degrees % 90 != 0:
        raise SchemaViolationError("rotation must be a multiple of 90 degrees")
    return _rotate(world, lambda obj: (obj.orientation + degrees) % 360)


def exec_press_button(world, params, engine):
    goal = (BUTTON_POSITION[0], BUTTON_POSITION[1], HOVER_Z)
    poses = _interp(world.arm_pose, goal, 5)
    result = _completed(world, goal)
    result.button_pressed = True
    return BehaviourPlan(5, poses, result)


def exec_pick_and_place(world, params, engine):
    dest = params.get("dest", BIN_POSITION)
    target = world.target_object()
    if target is None:
        return BehaviourPlan(15, [tuple(world.arm_pose)] * 15, world.copy(),
                             failed_world=world.copy(), fail_at=0,
                             failure_reason="nothing to pick")
    approach = _hover(world, target, 8)
    transfer = _interp(approach[-1], (dest[0], dest[1], HOVER_Z), 7)
    poses = approach + transfer
    grasp_ok = graspable(target)
    if not grasp_ok:
        failed = world.copy()
        failed.arm_pose = approach[-1]
        failed.hand_open = False
        return BehaviourPlan(15, poses, world.copy(), failed_world=failed, fail_at=10,
                             failure_reason=f"grasp check failed on {target.id}",
                             target_id=target.id)
    result = world.copy()
    moved = result.object(target.id)
    if moved.kind == KIND_BOX_STACK:
        moved.height -= 1            # top box goes to the bin
    else:
        moved.position = clamp_position(dest)
    result.arm_pose = poses[-1]
    result.hand_open = True
    result.held_object = None
    return BehaviourPlan(15, poses, result, target_id=target.id)


def exec_book_grasp(world, params, engine):
    target = world.nearest_object(KIND_BOOK)
    if target is None:
        return BehaviourPlan(20, [tuple(world.arm_pose)] * 20, world.copy(),
                             failed_world=world.copy(), fail_at=2,
                             failure_reason="no book on the table")
    approach = _hover(world, target, 5)
    push = _interp(approach[-1], (FRONT_POSITION[0], FRONT_POSITION[1], HOVER_Z), 10)
    squeeze = [push[-1]] * 5
    poses = approach + push + squeeze
    moved_world = world.copy()
    moved_world.object(target.id).position = FRONT_POSITION
    moved_world.arm_pose = push[-1]
    if target.orientation != 0:
        failed = moved_world.copy()
        failed.hand_open = False
        return BehaviourPlan(20, poses, moved_world, failed_world=failed, fail_at=18,
                             failure_reason="book not aligned at the spine",
                             target_id=target.id)
    result = moved_world
    result.hand_open = False
    result.held_object = target.id
    return BehaviourPlan(20, poses, result, target_id=target.id)


def _touch_poke(obj, sensor):
    if obj is None:
        return 0.0
    if obj.kind == KIND_BOX_STACK:
        return sensor.poke_height_step * obj.height
    if obj.kind == KIND_LID_BOX:
        return sensor.poke_lid_open if obj.open_lid else sensor.poke_lid_closed
    return 0.0


def _sensing_plan(world, engine, base, right=False, target=None):
    poses = _hover(world, target, 10)
    result = world.copy()
    result.arm_pose = poses[-1]
    return BehaviourPlan(10, poses, result, touch_base=base, touch_right=right,
                         target_id=target.id if target else None)


def exec_sliding(world, params, engine):
    target = world.target_object()
    base = 0.0
    if target is not None:
        base = engine.config.sensor.slide_orientation_base[target.orientation]
    return _sensing_plan(world, engine, base, target=target)


def exec_poking(world, params, engine):
    target = world.target_object()
    return _sensing_plan(world, engine, _touch_poke(target, engine.config.sensor),
                         target=target)


def exec_pressing(world, params, engine):
    target = world.target_object()
    base = 0.0
    if target is not None:
        base = engine.config.sensor.press_width.get(target.kind, 0.0)
    return _sensing_plan(world, engine, base, right=True, target=target)


def exec_waypoint_motion(world, params, engine):
    waypoints = params["waypoints"]
    poses = []
    start = tuple(world.arm_pose)
    for wp in waypoints:
        poses += _interp(start, wp, 5)
        start = tuple(wp)
    return BehaviourPlan(len(poses), poses, _completed(world, waypoints[-1]))


# ---------------------------------------------------------------------------
# Default catalog

_ARM = frozenset({"left_arm"})
_ARM_HAND = frozenset({"left_arm", "left_hand"})
_GRASP_SET = frozenset({"left_arm", "left_hand", "camera"})
_BOTH_HANDS = frozenset({"left_arm", "left_hand", "right_arm", "right_hand"})


def default_behaviours():
    """(descriptor, executor) pairs for the built-in behaviour palette."""
    d = BehaviourDescriptor
    entries = [
        (d("b_void", frozenset(), (), call_tree(["idle"]), 1, "utility"), exec_void),
        (d("move_home", _ARM, (),
           call_tree([("home_position", ["plan_joint", "check_limits", "move_joint"])]),
           5, "motion"), exec_move_home),
        (d("joint_ptp", _ARM,
           (ParamSpec("x", "real", True), ParamSpec("y", "real", True),
            ParamSpec("z", "real", True)),
           call_tree(["plan_joint", "check_limits", "move_joint"]), 5, "motion"),
         exec_joint_ptp),
        (d("cartesian_ptp", _ARM, (ParamSpec("goal", "vec2"),),
           call_tree([("plan_cartesian", ["compute_ik"]), "move_cartesian"]), 5, "motion"),
         exec_cartesian_ptp),
        (d("localise_object", frozenset({"camera"}),
           (ParamSpec("kind", "enum", default="any",
                      choices=("any", "book", "box_stack", "lid_box", "cube")),),
           call_tree(["capture_image", "segment_scene", "estimate_pose"]), 5, "perception"),
         exec_localise),
        (d("close_hand", frozenset({"left_hand"}), (),
           call_tree(["close_gripper"]), 5, "hand"), exec_close_hand),
        (d("open_hand", frozenset({"left_hand"}), (),
           call_tree(["open_gripper"]), 5, "hand"), exec_open_hand),
        (d("change_stiffness", _ARM, (ParamSpec("level", "real", True),),
           call_tree(["set_stiffness"]), 5, "utility"), exec_change_stiffness),
        (d("push_to_body", _ARM, (),
           call_tree(["compute_push", "plan_cartesian", "move_cartesian", "push_contact"]),
           5, "motion"), exec_push_to_body),
        (d("push_from_body", _ARM, (),
           call_tree(["compute_push", "plan_cartesian", "move_cartesian", "push_contact"]),
           5, "motion"), exec_push_from_body),
        (d("push_to_position", _ARM, (ParamSpec("goal", "vec2", True),),
           call_tree(["compute_push", "plan_cartesian", "move_cartesian",
                      "plan_cartesian", "move_cartesian", "push_contact"]), 10, "motion"),
         exec_push_to_position),
        (d("push_to_orientation", _ARM,
           (ParamSpec("orientation", "enum", True, choices=(0, 90, 180, 270)),),
           call_tree(["compute_rotation", "plan_cartesian", "move_cartesian",
                      "push_contact"]), 5, "motion"), exec_push_to_orientation),
        (d("rotate_object", _ARM, (ParamSpec("degrees", "int", True),),
           call_tree(["compute_rotation", "plan_cartesian", "move_cartesian",
                      "push_contact"]), 5, "motion"), exec_rotate_object),
        (d("press_button", _ARM, (),
           call_tree(["plan_cartesian", "move_cartesian", "press_contact"]), 5, "motion"),
         exec_press_button),
        (d("pick_and_place", _GRASP_SET, (ParamSpec("dest", "vec2"),),
           call_tree(["capture_image", "estimate_pose", ("plan_cartesian", ["compute_ik"]),
                      "move_cartesian", "close_gripper", "check_grasp",
                      "plan_cartesian", "move_cartesian", "open_gripper"]), 15, "composite"),
         exec_pick_and_place),
        (d("book_grasp_basic", _GRASP_SET, (),
           call_tree(["capture_image", "estimate_pose", "compute_push",
                      ("plan_cartesian", ["compute_ik"]), "move_cartesian", "push_contact",
                      "close_gripper", "check_grasp"]), 20, "composite"), exec_book_grasp),
        (d("sliding", _ARM_HAND, (),
           call_tree(["plan_cartesian", "move_cartesian", ("slide_contact", ["sense_touch"])]),
           10, "sensing"), exec_sliding),
        (d("poking", _ARM_HAND, (),
           call_tree(["plan_cartesian", "move_cartesian", ("poke_contact", ["sense_touch"])]),
           10, "sensing"), exec_poking),
        (d("pressing", _BOTH_HANDS, (),
           call_tree(["plan_cartesian", "move_cartesian", ("press_contact", ["sense_touch"])]),
           10, "sensing"), exec_pressing),
        (d("waypoint_motion", _ARM, (ParamSpec("waypoints", "vec3_list", True),),
           call_tree(["interpolate_waypoints", "plan_cartesian", "move_cartesian"]),
           5, "motion", palette=False), exec_waypoint_motion),
    ]
    return entries
