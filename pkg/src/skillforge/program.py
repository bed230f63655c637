"""Visual-program AST: node model, JSON wire format and validation.

The JSON document is the contract between the engine and the block editor.
It is versioned ("ast_version": 1) and intentionally small: six node kinds,
no expressions. Programs are interpreted directly by the engine.
"""

from dataclasses import dataclass, field

from .errors import AstValidationError

AST_VERSION = 1

LOOP_MAX_COUNT = 1000
WHILE_MAX_ITERATIONS = 1000


@dataclass
class Sequence:
    children: list

    kind = "sequence"


@dataclass
class Loop:
    body: object
    count: int | None = None
    while_predicate: str | None = None

    kind = "loop"


@dataclass
class BehaviourCall:
    behaviour: str
    params: dict = field(default_factory=dict)

    kind = "behaviour"


@dataclass
class SkillCall:
    skill: str

    kind = "skill"


@dataclass
class HardwareDecl:
    names: list

    kind = "hardware"


@dataclass
class WaypointMotion:
    waypoints: list        # list of [x, y, z]

    kind = "waypoints"


NODE_KINDS = ("sequence", "loop", "behaviour", "skill", "hardware", "waypoints")


def serialize(node):
    """AST node -> plain JSON-compatible node object."""
    if isinstance(node, Sequence):
        return {"kind": "sequence", "children": [serialize(c) for c in node.children]}
    if isinstance(node, Loop):
        doc = {"kind": "loop", "body": serialize(node.body)}
        if node.count is not None:
            doc["count"] = node.count
        if node.while_predicate is not None:
            doc["while"] = node.while_predicate
        return doc
    if isinstance(node, BehaviourCall):
        return {"kind": "behaviour", "behaviour": node.behaviour, "params": dict(node.params)}
    if isinstance(node, SkillCall):
        return {"kind": "skill", "skill": node.skill}
    if isinstance(node, HardwareDecl):
        return {"kind": "hardware", "names": list(node.names)}
    if isinstance(node, WaypointMotion):
        return {"kind": "waypoints", "waypoints": [list(w) for w in node.waypoints]}
    raise TypeError(f"not an AST node: {node!r}")


def serialize_program(root):
    return {"ast_version": AST_VERSION, "root": serialize(root)}


def _parse_node(doc, path, diagnostics):
    if not isinstance(doc, dict) or "kind" not in doc:
        diagnostics.append((path, "node must be an object with a 'kind'"))
        return None
    kind = doc["kind"]
    if kind == "sequence":
        children = doc.get("children")
        if not isinstance(children, list):
            diagnostics.append((path, "sequence requires a 'children' list"))
            return None
        return Sequence([_parse_node(c, f"{path}.children[{i}]", diagnostics)
                         for i, c in enumerate(children)])
    if kind == "loop":
        if "body" not in doc:
            diagnostics.append((path, "loop requires a 'body'"))
            return None
        body = _parse_node(doc["body"], f"{path}.body", diagnostics)
        count = doc.get("count")
        while_predicate = doc.get("while")
        if count is None and while_predicate is None:
            diagnostics.append((path, "loop requires 'count' or 'while'"))
        if count is not None and not (isinstance(count, int) and 1 <= count <= LOOP_MAX_COUNT):
            diagnostics.append((path, f"loop count must be an integer in [1, {LOOP_MAX_COUNT}]"))
        return Loop(body=body, count=count, while_predicate=while_predicate)
    if kind == "behaviour":
        if not isinstance(doc.get("behaviour"), str):
            diagnostics.append((path, "behaviour call requires a 'behaviour' id"))
            return None
        params = doc.get("params", {})
        if not isinstance(params, dict):
            diagnostics.append((path, "'params' must be an object"))
            params = {}
        return BehaviourCall(doc["behaviour"], params)
    if kind == "skill":
        if not isinstance(doc.get("skill"), str):
            diagnostics.append((path, "skill call requires a 'skill' id"))
            return None
        return SkillCall(doc["skill"])
    if kind == "hardware":
        names = doc.get("names")
        if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
            diagnostics.append((path, "hardware declaration requires a list of names"))
            return None
        return HardwareDecl(names)
    if kind == "waypoints":
        waypoints = doc.get("waypoints")
        ok = (isinstance(waypoints, list) and waypoints
              and all(isinstance(w, list) and len(w) == 3 for w in waypoints))
        if not ok:
            diagnostics.append((path, "waypoint motion requires a non-empty list of [x, y, z]"))
            return None
        return WaypointMotion([tuple(float(v) for v in w) for w in waypoints])
    diagnostics.append((path, f"unknown node kind {kind!r}"))
    return None


def parse_program(doc):
    """JSON document -> AST root; raises AstValidationError on shape errors."""
    diagnostics = []
    if not isinstance(doc, dict):
        raise AstValidationError([("$", "program document must be an object")])
    if doc.get("ast_version") != AST_VERSION:
        diagnostics.append(("$.ast_version", f"expected ast_version {AST_VERSION}"))
    root = _parse_node(doc.get("root"), "$.root", diagnostics)
    if diagnostics:
        raise AstValidationError(diagnostics)
    return root


class Validator:
    """Referential and hardware-scope validation against engine registries."""

    def __init__(self, behaviour_ids, skill_ids, hardware_names, predicate_ids,
                 behaviour_hardware, skill_hardware):
        self.behaviour_ids = set(behaviour_ids)
        self.skill_ids = set(skill_ids)
        self.hardware_names = set(hardware_names)
        self.predicate_ids = set(predicate_ids)
        self.behaviour_hardware = behaviour_hardware
        self.skill_hardware = skill_hardware

    def validate(self, root):
        diagnostics = []
        self._walk(root, "$.root", frozenset(), diagnostics)
        return diagnostics

    def _declared(self, node):
        if isinstance(node, Sequence):
            names = set()
            for child in node.children:
                if isinstance(child, HardwareDecl):
                    names |= set(child.names)
            return names
        return set()

    def _walk(self, node, path, scope, diagnostics):
        if node is None:
            return
        if isinstance(node, Sequence):
            scope = scope | self._declared(node)
            for i, child in enumerate(node.children):
                self._walk(child, f"{path}.children[{i}]", scope, diagnostics)
        elif isinstance(node, Loop):
            if node.count is not None and not (1 <= node.count <= LOOP_MAX_COUNT):
                diagnostics.append((path, f"loop count {node.count} out of [1, {LOOP_MAX_COUNT}]"))
            if node.while_predicate is not None and node.while_predicate not in self.predicate_ids:
                diagnostics.append((path, f"unknown predicate {node.while_predicate!r}"))
            self._walk(node.body, f"{path}.body", scope, diagnostics)
        elif isinstance(node, BehaviourCall):
            if node.behaviour not in self.behaviour_ids:
                diagnostics.append((path, f"unknown behaviour {node.behaviour!r}"))
            else:
                required = self.behaviour_hardware(node.behaviour)
                missing = required - scope
                if missing:
                    diagnostics.append(
                        (path, f"hardware {sorted(missing)} not declared for"
                               f" behaviour {node.behaviour!r}"))
        elif isinstance(node, SkillCall):
            if node.skill not in self.skill_ids:
                diagnostics.append((path, f"unknown skill {node.skill!r}"))
            else:
                missing = self.skill_hardware(node.skill) - scope
                if missing:
                    diagnostics.append(
                        (path, f"hardware {sorted(missing)} not declared for"
                               f" skill {node.skill!r}"))
        elif isinstance(node, HardwareDecl):
            for name in node.names:
                if name not in self.hardware_names:
                    diagnostics.append((path, f"unknown hardware {name!r}"))
        elif isinstance(node, WaypointMotion):
            if "left_arm" not in scope:
                diagnostics.append((path, "waypoint motion requires 'left_arm' declared"))
        else:
            diagnostics.append((path, f"unknown node type {type(node).__name__}"))


def iter_behaviour_calls(node):
    """Yield (behaviour_id, params) for every call in the tree, loops unrolled once."""
    if isinstance(node, Sequence):
        for child in node.children:
            yield from iter_behaviour_calls(child)
    elif isinstance(node, Loop):
        yield from iter_behaviour_calls(node.body)
    elif isinstance(node, BehaviourCall):
        yield node.behaviour, node.params
