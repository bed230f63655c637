"""Default workbench catalog: behaviours, skills, playing setups and the
test-skill suite used for self-diagnosis.

The two trainable skills mirror the demo tasks: grasping a book whose
orientation varies (sliding tells the orientations apart, a push rotates the
book into the graspable pose) and disassembling a box tower whose height
varies (poking reads the height, n pick-and-place repetitions clear it).
"""

from . import program as _prog
from .behaviours import default_behaviours
from .config import EngineConfig
from .engine import Engine, SkillSetup
from .playing import PrepOption

SIMPLE_GRASP_AST = {
    "ast_version": 1,
    "root": {
        "kind": "sequence",
        "children": [
            {"kind": "hardware", "names": ["left_arm", "left_hand", "camera"]},
            {"kind": "behaviour", "behaviour": "move_home", "params": {}},
            {"kind": "behaviour", "behaviour": "localise_object", "params": {}},
            {"kind": "behaviour", "behaviour": "cartesian_ptp", "params": {}},
            {"kind": "behaviour", "behaviour": "close_hand", "params": {}},
        ],
    },
}

PICK_AND_PLACE_AST = {
    "ast_version": 1,
    "root": {
        "kind": "sequence",
        "children": [
            {"kind": "hardware", "names": ["left_arm", "left_hand", "camera"]},
            {"kind": "skill", "skill": "simple_grasp"},
            {"kind": "behaviour", "behaviour": "cartesian_ptp", "params": {"goal": [9.0, 9.0]}},
            {"kind": "behaviour", "behaviour": "open_hand", "params": {}},
        ],
    },
}

SHELF_PLACEMENT_AST = {
    "ast_version": 1,
    "root": {
        "kind": "sequence",
        "children": [
            {"kind": "hardware", "names": ["left_arm", "left_hand", "camera"]},
            {"kind": "skill", "skill": "simple_grasp"},
            {"kind": "waypoints", "waypoints": [[5.0, 6.0, 2.0], [1.0, 9.0, 1.0]]},
            {"kind": "behaviour", "behaviour": "open_hand", "params": {}},
        ],
    },
}

GRASP_SET = ("left_arm", "left_hand", "camera")

# Preparatory options for the book task: relative pushes plus doing nothing.
BOOK_PREP_OPTIONS = [
    PrepOption.behaviour("rotate_object", {"degrees": 90}, label="rotate_90"),
    PrepOption.behaviour("rotate_object", {"degrees": 180}, label="rotate_180"),
    PrepOption.behaviour("rotate_object", {"degrees": -90}, label="rotate_-90"),
]

# Preparatory options for the tower task: n consecutive pick-and-place runs.
TOWER_PREP_OPTIONS = [
    PrepOption.repeat("pick_and_place", n) for n in (1, 2, 3)
]

# The analytically optimal preparation per book orientation.
BOOK_OPTIMAL_POLICY = {"0": "b_void", "90": "rotate_-90",
                       "180": "rotate_180", "270": "rotate_90"}
TOWER_OPTIMAL_POLICY = {"1": "repeat_pick_and_place_1",
                        "2": "repeat_pick_and_place_2",
                        "3": "repeat_pick_and_place_3"}


def _parse(doc):
    return _prog.parse_program(doc)


def install_default_catalog(engine):
    """Register the built-in palette, skills and diagnosis test suite."""
    for descriptor, executor in default_behaviours():
        engine.register_behaviour(descriptor, executor)

    # Controller-owned schema extensions are installed on startup; re-installs
    # of the same version are no-ops.
    from .memory import SchemaExtension

    engine.store.install_schema(SchemaExtension(
        "left_arm", 1, {"arm_calibration": [("joint", "TEXT"), ("offset", "REAL")]}))
    engine.store.install_schema(SchemaExtension(
        "camera", 1, {"camera_frames": [("execution_id", "INTEGER"),
                                        ("tick", "INTEGER"), ("blob_path", "TEXT")]}))

    # User-facing skills. simple_grasp is the canonical visual program turned
    # into a basic behaviour; the others wrap primitives or programs likewise.
    engine.register_program_behaviour("simple_grasp_basic", _parse(SIMPLE_GRASP_AST))
    engine.create_skill("simple_grasp", "simple_grasp_basic", "object_held", GRASP_SET)
    engine.create_skill("book_grasping", "book_grasp_basic", "book_grasped", GRASP_SET)
    engine.create_skill("tower_disassembly", None, "tower_cleared", GRASP_SET)
    engine.register_program_behaviour("shelf_placement_basic", _parse(SHELF_PLACEMENT_AST))
    engine.create_skill("shelf_placement", "shelf_placement_basic", "object_on_shelf",
                        GRASP_SET)

    engine.skill_setups["book_grasping"] = SkillSetup(
        scenario="book", sensing_actions=["sliding", "poking"],
        preparatory_options=list(BOOK_PREP_OPTIONS))
    engine.skill_setups["tower_disassembly"] = SkillSetup(
        scenario="tower", sensing_actions=["poking"],
        preparatory_options=list(TOWER_PREP_OPTIONS))

    _install_test_suite(engine)
    return engine


def _program_skill(engine, name, children, predicate, hardware, declare=None):
    decl = {"kind": "hardware", "names": sorted(declare or hardware)}
    doc = {"ast_version": 1, "root": {"kind": "sequence", "children": [decl] + children}}
    engine.register_program_behaviour(f"{name}_basic", _parse(doc), category="test")
    engine.create_skill(name, f"{name}_basic", predicate, hardware)


def _call(behaviour, params=None):
    return {"kind": "behaviour", "behaviour": behaviour, "params": params or {}}


# (skill, basic behaviour or program, scenario, overrides, predicate)
def _install_test_suite(engine):
    """Skills used as diagnosis test cases; each succeeds on a fault-free run."""
    engine.create_skill("home_check", "move_home", "arm_at_home", ("left_arm",))
    _program_skill(engine, "joint_reach",
                   [_call("joint_ptp", {"x": 3.0, "y": 7.0, "z": 2.0})],
                   "arm_at_probe", ("left_arm",))
    engine.create_skill("camera_check", "localise_object", "target_localised", ("camera",))
    _program_skill(engine, "push_to_bin",
                   [_call("localise_object"), _call("push_to_position", {"goal": [9.0, 9.0]})],
                   "object_in_bin", ("left_arm", "camera"))
    _program_skill(engine, "rotate_probe", [_call("rotate_object", {"degrees": 90})],
                   "scan_complete", ("left_arm",))
    engine.create_skill("button_press", "press_button", "button_pressed", ("left_arm",))
    engine.create_skill("surface_slide", "sliding", "scan_complete",
                        ("left_arm", "left_hand"))
    engine.create_skill("top_poke", "poking", "scan_complete", ("left_arm", "left_hand"))
    engine.create_skill("side_press", "pressing", "scan_complete",
                        ("left_arm", "left_hand", "right_arm", "right_hand"))
    engine.create_skill("tower_pick", "pick_and_place", "scan_complete", GRASP_SET)
    _program_skill(engine, "stiffness_set", [_call("change_stiffness", {"level": 0.5})],
                   "scan_complete", ("left_arm",))
    _program_skill(engine, "hand_cycle", [_call("close_hand"), _call("open_hand")],
                   "hand_is_open", ("left_hand",))
    _program_skill(engine, "waypoint_patrol",
                   [{"kind": "waypoints", "waypoints": [[2.0, 2.0, 2.0], [8.0, 2.0, 2.0]]}],
                   "arm_at_patrol_end", ("left_arm",))
    engine.create_skill("idle_check", "b_void", "scan_complete", ("left_arm",))
    engine.create_skill("book_check", "book_grasp_basic", "book_grasped", GRASP_SET)


TEST_SCENARIOS = {
    "home_check": ("flat", None),
    "joint_reach": ("flat", None),
    "camera_check": ("flat", None),
    "push_to_bin": ("flat", None),
    "rotate_probe": ("book", None),
    "button_press": ("flat", None),
    "surface_slide": ("book", None),
    "top_poke": ("tower", None),
    "side_press": ("box", None),
    "tower_pick": ("tower", None),
    "stiffness_set": ("flat", None),
    "hand_cycle": ("flat", None),
    "waypoint_patrol": ("flat", None),
    "idle_check": ("flat", None),
    # the book check only succeeds when the spine faces the robot
    "book_check": ("book", {"book": {"orientation": 0}}),
}


def diagnosis_candidates(engine, skills=None):
    """TestCandidate set for the diagnosis loop, with static function coverage."""
    from .diagnosis import TestCandidate

    out = {}
    for skill_id, (scenario, overrides) in TEST_SCENARIOS.items():
        if skills is not None and skill_id not in skills:
            continue
        skill = engine.skill(skill_id)
        basic = engine.behaviour(skill.basic_behaviour or "b_void").descriptor
        out[skill_id] = TestCandidate(
            skill_id=skill_id, scenario=scenario, overrides=overrides,
            coverage=frozenset(basic.functions()))
    return out


def build_engine(config=None):
    engine = Engine(config or EngineConfig())
    return install_default_catalog(engine)
