"""Seeded tabletop world: scenarios, objects, hardware handles and fault injection.

The world is a small discrete-time model. Positions live on a continuous
10 x 10 grid, orientations are one of four right angles, and one abstract arm
with a two-finger hand acts on the objects. Everything that draws randomness
takes an explicit seed or generator, so identical inputs reproduce identical
states bit for bit.
"""

import copy
import zlib
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .errors import DuplicateIdError, UnknownIdError

WORKSPACE = (0.0, 10.0)
ORIENTATIONS = (0, 90, 180, 270)

KIND_BOOK = "book"
KIND_BOX_STACK = "box_stack"
KIND_LID_BOX = "lid_box"
KIND_CUBE = "cube"
OBJECT_KINDS = (KIND_BOOK, KIND_BOX_STACK, KIND_LID_BOX, KIND_CUBE)

# Fixed workspace landmarks (unitless grid coordinates).
HOME_POSE = (5.0, 1.0, 2.0)
RIGHT_HOME_POSE = (7.0, 1.0, 2.0)
HOVER_Z = 1.0
BIN_POSITION = (9.0, 9.0)
SHELF_POSITION = (1.0, 9.0)
BUTTON_POSITION = (8.0, 2.0)
FRONT_POSITION = (5.0, 3.0)
GRASP_RADIUS = 0.75

FAULT_FAIL_HARD = "fail_hard"
FAULT_DEGRADE_SENSORS = "degrade_sensors"


def clamp_position(pos):
    lo, hi = WORKSPACE
    return (float(min(max(pos[0], lo), hi)), float(min(max(pos[1], lo), hi)))


@dataclass
class SimObject:
    id: str
    kind: str
    position: tuple
    orientation: int = 0
    height: int = 0          # box_stack only
    open_lid: bool = False   # lid_box only

    def validate(self):
        if self.kind not in OBJECT_KINDS:
            raise ValueError(f"unknown object kind {self.kind!r}")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")
        if not (0 <= self.height <= 5):
            raise ValueError("box stack height must be in [0, 5]")
        lo, hi = WORKSPACE
        if not (lo <= self.position[0] <= hi and lo <= self.position[1] <= hi):
            raise ValueError(f"position {self.position} outside workspace")

    def copy(self):
        return replace(self, position=tuple(self.position))


@dataclass
class WorldState:
    """Environment plus robot-internal state.

    The clock counts ticks and only moves forward; behaviour execution is the
    only thing that advances it.
    """

    scenario_id: str
    objects: list
    arm_pose: tuple = HOME_POSE
    hand_open: bool = True
    held_object: str | None = None
    clock: int = 0
    localised_object: str | None = None
    stiffness: float = 1.0
    button_pressed: bool = False

    def validate(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        for obj in self.objects:
            obj.validate()
        if self.held_object is not None:
            if self.hand_open:
                raise ValueError("cannot hold an object with an open hand")
            if self.held_object not in ids:
                raise ValueError(f"held object {self.held_object!r} does not exist")
        if self.clock < 0:
            raise ValueError("clock must be non-negative")

    def copy(self):
        return replace(self, objects=[o.copy() for o in self.objects],
                       arm_pose=tuple(self.arm_pose))

    def object(self, object_id):
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise UnknownIdError("object", object_id)

    def nearest_object(self, kind=None):
        """Closest object to the arm's (x, y); ties broken by id."""
        candidates = [o for o in self.objects if kind in (None, "any", o.kind)]
        if not candidates:
            return None
        ax, ay = self.arm_pose[0], self.arm_pose[1]
        return min(candidates,
                   key=lambda o: ((o.position[0] - ax) ** 2 + (o.position[1] - ay) ** 2, o.id))

    def target_object(self, object_id=None, kind=None):
        """Behaviour target resolution: explicit id, else localised, else nearest."""
        if object_id:
            return self.object(object_id)
        if self.localised_object is not None:
            try:
                return self.object(self.localised_object)
            except UnknownIdError:
                pass
        return self.nearest_object(kind)

    def same_situation(self, other):
        """Equality ignoring the clock; used for identity-behaviour checks."""
        a = self.to_dict()
        b = other.to_dict()
        a.pop("clock")
        b.pop("clock")
        return a == b

    def to_dict(self):
        return {
            "scenario_id": self.scenario_id,
            "objects": [
                {
                    "id": o.id,
                    "kind": o.kind,
                    "position": list(o.position),
                    "orientation": o.orientation,
                    "height": o.height,
                    "open_lid": o.open_lid,
                }
                for o in self.objects
            ],
            "arm_pose": list(self.arm_pose),
            "hand_open": self.hand_open,
            "held_object": self.held_object,
            "clock": self.clock,
            "localised_object": self.localised_object,
            "stiffness": self.stiffness,
            "button_pressed": self.button_pressed,
        }


def graspable(obj):
    """Whether closing the hand on top of the object can lift it.

    Books expose their spine only at orientation 0; stacks are pinched box by
    box (handled by pick-and-place); a lid box is too wide for the hand.
    """
    if obj.kind == KIND_BOOK:
        return obj.orientation == 0
    if obj.kind == KIND_CUBE:
        return True
    if obj.kind == KIND_BOX_STACK:
        return obj.height >= 1
    return False


# ---------------------------------------------------------------------------
# Scenario catalog


DEFAULT_SCENARIOS = {
    "book": {
        "description": "One book on the table; its orientation is drawn uniformly.",
        "objects": [
            {"id": "book", "kind": KIND_BOOK, "position": [5.0, 4.0], "orientation": "random"},
        ],
        "attribute": {"object": "book", "name": "orientation", "values": [0, 90, 180, 270]},
        "predicates": ["book_grasped", "object_held", "scan_complete"],
    },
    "tower": {
        "description": "A stack of boxes of height 1 to 3.",
        "objects": [
            {"id": "tower", "kind": KIND_BOX_STACK, "position": [5.0, 4.0], "height": "random"},
        ],
        "attribute": {"object": "tower", "name": "height", "values": [1, 2, 3]},
        "predicates": ["tower_cleared", "scan_complete"],
    },
    "box": {
        "description": "A lidded box that is open or closed.",
        "objects": [
            {"id": "box", "kind": KIND_LID_BOX, "position": [5.0, 4.0], "open_lid": "random"},
        ],
        "attribute": {"object": "box", "name": "open_lid", "values": [False, True]},
        "predicates": ["box_is_open", "scan_complete"],
    },
    "flat": {
        "description": "A single cube somewhere on the table plus a fixed button.",
        "objects": [
            {"id": "cube", "kind": KIND_CUBE, "position": "random"},
        ],
        "attribute": {"object": "cube", "name": "orientation", "values": [0, 90, 180, 270]},
        "predicates": ["object_held", "object_in_bin", "button_pressed", "scan_complete"],
    },
}


class ScenarioCatalog:
    """Declarative scenario definitions, loadable from a YAML file."""

    def __init__(self, scenarios=None):
        self.scenarios = scenarios or copy.deepcopy(DEFAULT_SCENARIOS)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            doc = yaml.safe_load(fh)
        if not isinstance(doc, dict) or "scenarios" not in doc:
            raise ValueError(f"scenario catalog {path} must map 'scenarios' to definitions")
        return cls(doc["scenarios"])

    def get(self, scenario_id):
        try:
            return self.scenarios[scenario_id]
        except KeyError:
            raise UnknownIdError("scenario", scenario_id) from None

    def ids(self):
        return sorted(self.scenarios)

    def attribute(self, scenario_id):
        spec = self.get(scenario_id).get("attribute")
        if spec is None:
            raise UnknownIdError("scenario attribute", scenario_id)
        return spec["object"], spec["name"], list(spec["values"])


def create_world(scenario_id, seed, catalog=None, overrides=None):
    """Build the reproducible initial world for a scenario.

    Randomised attributes ('random' in the catalog) are drawn from a generator
    seeded with `seed`, in object order, so the same (scenario, seed) pair
    always produces the same state. `overrides` maps object id to attribute
    overrides applied after drawing.
    """
    catalog = catalog or ScenarioCatalog()
    spec = catalog.get(scenario_id)
    rng = np.random.default_rng(seed)
    objects = []
    for entry in spec["objects"]:
        position = entry.get("position", [5.0, 5.0])
        if position == "random":
            position = [float(rng.uniform(3.0, 7.0)), float(rng.uniform(3.0, 7.0))]
        orientation = entry.get("orientation", 0)
        if orientation == "random":
            orientation = ORIENTATIONS[rng.integers(len(ORIENTATIONS))]
        height = entry.get("height", 0)
        if height == "random":
            height = int(rng.integers(1, 4))
        open_lid = entry.get("open_lid", False)
        if open_lid == "random":
            open_lid = bool(rng.integers(2))
        objects.append(SimObject(
            id=entry["id"], kind=entry["kind"], position=tuple(position),
            orientation=int(orientation), height=int(height), open_lid=bool(open_lid),
        ))
    world = WorldState(scenario_id=scenario_id, objects=objects)
    for object_id, attrs in (overrides or {}).items():
        obj = world.object(object_id)
        for name, value in attrs.items():
            if name == "position":
                obj.position = tuple(value)
            elif name == "orientation":
                obj.orientation = int(value)
            elif name == "height":
                obj.height = int(value)
            elif name == "open_lid":
                obj.open_lid = bool(value)
            else:
                raise ValueError(f"unknown object attribute {name!r}")
    world.validate()
    return world


# ---------------------------------------------------------------------------
# Hardware


@dataclass(frozen=True)
class HardwareHandle:
    name: str
    kind: str                 # arm | hand | camera
    channels: tuple           # channel names, in recording order


HARDWARE_DEFINITIONS = (
    HardwareHandle("left_arm", "arm", ("left_arm.x", "left_arm.y", "left_arm.z")),
    HardwareHandle("left_hand", "hand", ("left_hand.aperture", "left_hand.touch")),
    HardwareHandle("right_arm", "arm", ("right_arm.x", "right_arm.y", "right_arm.z")),
    HardwareHandle("right_hand", "hand", ("right_hand.aperture", "right_hand.touch")),
    HardwareHandle("camera", "camera", ("camera.obj_x", "camera.obj_y")),
)


class HardwareRegistry:
    """Factory guaranteeing a single live handle per hardware name."""

    def __init__(self, definitions=HARDWARE_DEFINITIONS):
        self._definitions = {h.name: h for h in definitions}
        self._live = {}
        self._busy = set()

    def names(self):
        return list(self._definitions)

    def acquire(self, name):
        if name not in self._definitions:
            raise UnknownIdError("hardware", name)
        if name not in self._live:
            self._live[name] = self._definitions[name]
        return self._live[name]

    def mark_busy(self, names):
        clash = self._busy & set(names)
        if clash:
            from .errors import HardwareBusyError
            raise HardwareBusyError(f"hardware busy: {sorted(clash)}")
        self._busy |= set(names)

    def release(self, names):
        self._busy -= set(names)


# ---------------------------------------------------------------------------
# Fault injection


@dataclass(frozen=True)
class FaultSpec:
    function_id: str
    mode: str                       # fail_hard | degrade_sensors
    trigger_probability: float = 1.0
    sensor_bias: float = 0.0        # degrade_sensors only

    def validate(self):
        if self.mode not in (FAULT_FAIL_HARD, FAULT_DEGRADE_SENSORS):
            raise ValueError(f"unknown fault mode {self.mode!r}")
        if not (0.0 <= self.trigger_probability <= 1.0):
            raise ValueError("trigger_probability must be in [0, 1]")


class FaultRegistry:
    """Active software faults keyed by function id.

    Trigger draws come from a dedicated stream seeded from the function id, so
    injecting a fault never perturbs the behaviour's own noise stream; a
    zero-probability fault therefore reproduces the fault-free run bit for bit.
    """

    def __init__(self):
        self._faults = {}
        self._streams = {}

    def inject(self, spec, known_functions):
        spec.validate()
        if spec.function_id not in known_functions:
            raise UnknownIdError("function", spec.function_id)
        if spec.function_id in self._faults:
            raise DuplicateIdError(f"fault already injected on {spec.function_id!r}")
        self._faults[spec.function_id] = spec
        self._streams[spec.function_id] = np.random.default_rng(
            zlib.crc32(spec.function_id.encode()))

    def clear(self):
        self._faults.clear()
        self._streams.clear()

    def active(self):
        return dict(self._faults)

    def check(self, function_id):
        """Return the triggered FaultSpec for this function entry, if any."""
        spec = self._faults.get(function_id)
        if spec is None:
            return None
        if spec.trigger_probability >= 1.0:
            return spec
        if spec.trigger_probability <= 0.0:
            return None
        if self._streams[function_id].random() < spec.trigger_probability:
            return spec
        return None


# ---------------------------------------------------------------------------
# Success predicates


def _near(a, b, radius=1.0):
    return (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 <= radius ** 2


def _held_kind(world, kind):
    if world.held_object is None:
        return False
    return world.object(world.held_object).kind == kind


PREDICATES = {
    "object_held": lambda w: w.held_object is not None,
    "book_grasped": lambda w: _held_kind(w, KIND_BOOK),
    "tower_cleared": lambda w: all(o.height == 0 for o in w.objects if o.kind == KIND_BOX_STACK),
    "box_is_open": lambda w: any(o.open_lid for o in w.objects if o.kind == KIND_LID_BOX),
    "arm_at_home": lambda w: all(abs(a - b) < 0.1 for a, b in zip(w.arm_pose, HOME_POSE)),
    "arm_at_probe": lambda w: all(abs(a - b) < 0.1 for a, b in zip(w.arm_pose, (3.0, 7.0, 2.0))),
    "arm_at_patrol_end": lambda w: all(abs(a - b) < 0.1 for a, b in zip(w.arm_pose, (8.0, 2.0, 2.0))),
    "target_localised": lambda w: w.localised_object is not None,
    "object_in_bin": lambda w: any(
        _near(o.position, BIN_POSITION) and w.held_object != o.id for o in w.objects),
    "object_on_shelf": lambda w: any(
        _near(o.position, SHELF_POSITION) and w.held_object != o.id for o in w.objects),
    "button_pressed": lambda w: w.button_pressed,
    "hand_is_open": lambda w: w.hand_open,
    "scan_complete": lambda w: True,
}


def read_success_ground_truth(world, predicate_id):
    """Evaluate a registered success predicate on the world; pure."""
    try:
        predicate = PREDICATES[predicate_id]
    except KeyError:
        raise UnknownIdError("predicate", predicate_id) from None
    return bool(predicate(world))
