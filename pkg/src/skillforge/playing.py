"""Autonomous playing: perceptual-state training plus projective simulation.

Stage 1 collects a labelled haptic database by executing sensing actions in
prepared situations and trains one classifier per sensing action. Stage 2
builds a five-layer clip network (skill root, sensing actions, perceptual
states, preparatory behaviours, basic behaviour) and learns transition
weights by rewarded random walks: every stochastic edge on a successful
walk's path gets its h-value increased, and probabilities follow from
normalizing h-values per clip.
"""

from dataclasses import dataclass, field

import numpy as np

from . import program as _prog
from .errors import InsufficientDataError, UnknownIdError
from .memory import RecordingSession

H_MIN_DEFAULT = 1.0


# ---------------------------------------------------------------------------
# Stage 1: haptic database and perceptual model


@dataclass
class HapticEntry:
    action: str
    label: str
    matrix: object           # SensorMatrix


@dataclass
class HapticDatabase:
    skill_id: str
    entries: list = field(default_factory=list)

    def for_action(self, action):
        return [e for e in self.entries if e.action == action]

    def labels(self, action):
        return sorted({e.label for e in self.for_action(action)})


def situations_for_scenario(engine, scenario_id):
    """One situation per value of the scenario's varied attribute."""
    object_id, attr, values = engine.scenarios.attribute(scenario_id)
    return [{"scenario": scenario_id, "overrides": {object_id: {attr: value}},
             "label": str(value)} for value in values]


def collect_haptic_database(engine, skill_id, sensing_actions, situations,
                            repetitions, rng):
    """Execute every sensing action on every situation `repetitions` times.

    Entries are labelled with the generating situation's ground-truth
    attribute value, which is what the classifier has to recover from touch.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    for action in sensing_actions:
        engine.behaviour(action)
    db = HapticDatabase(skill_id)
    for situation in situations:
        for action in sensing_actions:
            for _ in range(repetitions):
                seed = int(rng.integers(2 ** 32))
                world = engine.create_world(situation["scenario"], seed,
                                            overrides=situation.get("overrides"))
                result = engine.apply_behaviour(world, action, {},
                                                np.random.default_rng(seed))
                db.entries.append(HapticEntry(action, situation["label"], result.sensor))
    return db


def features_of(matrix, channels):
    """Per-channel mean and standard deviation over the sensing window."""
    rows = [matrix.channels.index(ch) for ch in channels]
    window = matrix.values[rows]
    return np.concatenate([window.mean(axis=1), window.std(axis=1)])


@dataclass
class CentroidClassifier:
    channels: tuple
    labels: tuple
    centroids: np.ndarray     # len(labels) x 2*len(channels)

    def classify(self, matrix):
        feats = features_of(matrix, self.channels)
        distances = np.linalg.norm(self.centroids - feats, axis=1)
        return self.labels[int(np.argmin(distances))]


@dataclass
class PerceptualModel:
    classifiers: dict         # sensing action -> CentroidClassifier
    accuracy: dict            # sensing action -> held-out accuracy

    def label_set(self, action):
        return list(self.classifiers[action].labels)

    def classify(self, action, matrix):
        return self.classifiers[action].classify(matrix)


def train_perceptual_model(db, holdout_fraction=0.25):
    """Nearest-centroid classifier per sensing action with a held-out accuracy.

    Features are the per-channel (mean, std) of the sensing window; the
    sensor model's class separation makes this sufficient. The holdout split
    is deterministic: the last ceil(fraction * n) entries of each label.
    """
    if not (0.0 < holdout_fraction <= 0.5):
        raise ValueError("holdout_fraction must be in (0, 0.5]")
    actions = sorted({e.action for e in db.entries})
    classifiers, accuracy = {}, {}
    for action in actions:
        entries = db.for_action(action)
        labels = db.labels(action)
        if len(labels) < 2:
            raise InsufficientDataError(
                f"sensing action {action!r} has {len(labels)} label(s); need at least 2")
        channels = entries[0].matrix.channels
        train, test = [], []
        for label in labels:
            group = [e for e in entries if e.label == label]
            n_hold = max(1, int(round(holdout_fraction * len(group))))
            if len(group) - n_hold < 1:
                raise InsufficientDataError(
                    f"not enough entries for label {label!r} of {action!r}")
            train += group[:-n_hold]
            test += group[-n_hold:]
        centroids = np.stack([
            np.mean([features_of(e.matrix, channels) for e in train if e.label == label],
                    axis=0)
            for label in labels])
        clf = CentroidClassifier(tuple(channels), tuple(labels), centroids)
        hits = sum(1 for e in test if clf.classify(e.matrix) == e.label)
        classifiers[action] = clf
        accuracy[action] = hits / len(test)
    return PerceptualModel(classifiers, accuracy)


# ---------------------------------------------------------------------------
# Stage 2: the clip network


@dataclass(frozen=True)
class PrepOption:
    """A candidate preparatory behaviour: a label plus the program node to run."""

    label: str
    node: object

    @classmethod
    def behaviour(cls, behaviour_id, params=None, label=None):
        return cls(label or behaviour_id, _prog.BehaviourCall(behaviour_id, params or {}))

    @classmethod
    def repeat(cls, behaviour_id, count, label=None):
        return cls(label or f"repeat_{behaviour_id}_{count}",
                   _prog.Loop(body=_prog.BehaviourCall(behaviour_id, {}), count=count))

    @classmethod
    def skill(cls, skill_id, label=None):
        return cls(label or f"skill_{skill_id}", _prog.SkillCall(skill_id))


B_VOID_OPTION = PrepOption("b_void", _prog.BehaviourCall("b_void", {}))


@dataclass
class Clip:
    cid: str
    layer: int
    kind: str                # root | sensing | state | option | basic
    label: str
    payload: object = None   # sensing action id, state label, or PrepOption


class Ecm:
    """Layered clip graph with h-valued directed edges.

    Edge probabilities are h-values normalized over each clip's out-edges.
    Layer 2 -> 3 transitions are taken deterministically by classification and
    layer 4 -> 5 has a single target, so only the root and the state clips are
    stochastic; those are the edges the reward update touches.
    """

    def __init__(self, skill_id, h_min=H_MIN_DEFAULT):
        self.skill_id = skill_id
        self.h_min = h_min
        self.clips = {}
        self.layers = {1: [], 2: [], 3: [], 4: [], 5: []}
        self._out = {}           # cid -> [cid, ...] in insertion order
        self.h = {}              # (src, dst) -> h-value

    def add_clip(self, clip):
        if clip.cid in self.clips:
            raise ValueError(f"duplicate clip {clip.cid}")
        self.clips[clip.cid] = clip
        self.layers[clip.layer].append(clip.cid)
        self._out[clip.cid] = []

    def add_edge(self, src, dst, h=None):
        if src not in self.clips or dst not in self.clips:
            raise UnknownIdError("clip", src if src not in self.clips else dst)
        self._out[src].append(dst)
        self.h[(src, dst)] = self.h_min if h is None else float(h)

    def out_edges(self, src):
        return list(self._out[src])

    def probabilities(self, src):
        targets = self._out[src]
        weights = np.array([self.h[(src, dst)] for dst in targets])
        return targets, weights / weights.sum()

    def choose(self, src, rng=None, greedy=False):
        targets, probs = self.probabilities(src)
        if greedy or rng is None:
            return targets[int(np.argmax(probs))]
        return targets[int(rng.choice(len(targets), p=probs))]

    def option_of(self, cid):
        return self.clips[cid].payload

    def state_clip(self, action, label):
        cid = f"e:{action}:{label}"
        if cid not in self.clips:
            raise UnknownIdError("clip", cid)
        return cid

    def greedy_option(self, action, label):
        """The argmax preparatory option for one perceptual state."""
        return self.clips[self.choose(self.state_clip(action, label), greedy=True)].label


def build_ecm(skill_id, sensing_actions, perceptual_model, preparatory_options,
              h_min=H_MIN_DEFAULT, basic_label="basic"):
    """Five-layer ECM with uniform initial policy (all h-values at h_min)."""
    if not sensing_actions:
        raise ValueError("at least one sensing action required")
    options = list(preparatory_options)
    if not options:
        raise ValueError("preparatory behaviour set must not be empty")
    if not any(o.label == "b_void" for o in options):
        options.append(B_VOID_OPTION)
    ecm = Ecm(skill_id, h_min=h_min)
    ecm.add_clip(Clip("root", 1, "root", skill_id))
    for action in sensing_actions:
        ecm.add_clip(Clip(f"se:{action}", 2, "sensing", action, action))
        ecm.add_edge("root", f"se:{action}")
    for option in options:
        ecm.add_clip(Clip(f"b:{option.label}", 4, "option", option.label, option))
    ecm.add_clip(Clip("basic", 5, "basic", basic_label))
    for action in sensing_actions:
        for label in perceptual_model.label_set(action):
            cid = f"e:{action}:{label}"
            ecm.add_clip(Clip(cid, 3, "state", label, (action, label)))
            ecm.add_edge(f"se:{action}", cid)
            for option in options:
                ecm.add_edge(cid, f"b:{option.label}")
    for option in options:
        ecm.add_edge(f"b:{option.label}", "basic")
    return ecm


@dataclass
class PlayConfig:
    episodes: int
    reward: float = 1.0           # lambda
    damping: float = 0.0          # gamma
    h_min: float = H_MIN_DEFAULT
    seed: int = 0
    sampler: str = "uniform"

    def validate(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.reward <= 0:
            raise ValueError("reward must be positive")
        if not (0.0 <= self.damping < 1.0):
            raise ValueError("damping must be in [0, 1)")
        if self.sampler != "uniform":
            raise UnknownIdError("situation sampler", self.sampler)


def _skill_walk_runner(engine, skill, ecm, greedy, rng, path_out):
    """Runner performing sensing -> classification -> preparation -> basic."""

    model = skill.perceptual_model

    def runner(ctx):
        path_out.clear()
        path_out.append("root")
        se_cid = ecm.choose("root", rng=None if greedy else rng, greedy=greedy)
        action = ecm.clips[se_cid].payload
        path_out.append(se_cid)
        # Observe the sensing window through a transient session so the
        # classifier sees exactly the sensing action's matrix.
        handles = [engine.hardware.acquire(n) for n in engine._hardware_order(
            engine.behaviour(action).descriptor.required_hardware)]
        probe = RecordingSession(handles, ctx.world.clock)
        ctx.sessions.append(probe)
        try:
            engine._execute_behaviour(ctx, action, {})
        finally:
            ctx.sessions.pop()
        sensing_matrix, _, _, _ = probe.close()
        label = model.classify(action, sensing_matrix)
        e_cid = ecm.state_clip(action, label)
        path_out.append(e_cid)
        option_cid = ecm.choose(e_cid, rng=None if greedy else rng, greedy=greedy)
        path_out.append(option_cid)
        option = ecm.option_of(option_cid)
        engine._interpret_node(ctx, option.node)
        path_out.append("basic")
        engine._execute_behaviour(ctx, skill.basic_behaviour or "b_void", {})

    return runner


def trained_runner(engine, skill):
    """Greedy execution of a trained skill (used by execute_skill / probe_doa)."""
    dummy_path = []
    return _skill_walk_runner(engine, skill, skill.ecm, True, None, dummy_path)


def walk(engine, skill, ecm, world, rng):
    """One exploratory random walk through the ECM; the episode of playing.

    Returns (path of clip ids, outcome, execution record). Behaviour failures
    yield outcome False, not an error.
    """
    path = []
    runner = _skill_walk_runner(engine, skill, ecm, False, rng, path)
    with engine._exec_lock:
        _, record = engine._execute_and_record(
            "skill", skill.id, world, skill.required_hardware, rng, runner,
            predicate_id=skill.success_predicate)
    return path, record.success, record


def stochastic_edges(path):
    """The rewarded edges of a walk path: root -> sensing and state -> option."""
    edges = []
    if len(path) >= 2:
        edges.append((path[0], path[1]))
    if len(path) >= 4:
        edges.append((path[2], path[3]))
    return edges


def update(ecm, path, outcome, config):
    """Projective-simulation update: reward path edges, then damp everything."""
    edges = stochastic_edges(path)
    for edge in edges:
        if edge not in ecm.h:
            raise UnknownIdError("ecm edge", edge)
    if outcome:
        for edge in edges:
            ecm.h[edge] += config.reward
    if config.damping > 0.0:
        for edge, value in ecm.h.items():
            ecm.h[edge] = max(ecm.h_min, value - config.damping * (value - ecm.h_min))
    return ecm


def ensure_perception(engine, skill_or_id, repetitions=10, holdout=0.25, seed=7):
    """Train the skill's perceptual model from a fresh haptic database if absent.

    Stage 1 of playing: prepared situations cover the scenario's attribute
    values, each sensing action runs `repetitions` times per situation.
    """
    skill = skill_or_id if not isinstance(skill_or_id, str) else engine.skill(skill_or_id)
    if skill.perceptual_model is not None:
        return skill.perceptual_model
    setup = engine.skill_setups.get(skill.id)
    if setup is None:
        raise UnknownIdError("skill setup", skill.id)
    situations = situations_for_scenario(engine, setup.scenario)
    db = collect_haptic_database(engine, skill.id, setup.sensing_actions, situations,
                                 repetitions, np.random.default_rng(seed))
    skill.perceptual_model = train_perceptual_model(db, holdout)
    return skill.perceptual_model


def play(engine, skill_or_id, config, on_episode=None):
    """Run the playing loop: sample situation, walk, update; returns the curve.

    The per-episode curve rows are (episode, outcome, running success mean).
    The trained ECM is stored with the skill and the promotion flag refreshed.
    """
    config.validate()
    skill = skill_or_id if not isinstance(skill_or_id, str) else engine.skill(skill_or_id)
    if skill.perceptual_model is None:
        raise InsufficientDataError(f"skill {skill.id!r} has no trained perceptual model")
    setup = engine.skill_setups.get(skill.id)
    if setup is None:
        raise UnknownIdError("skill setup", skill.id)
    options = list(setup.preparatory_options)
    for other in sorted(engine.skills):
        candidate = engine.skills[other]
        if candidate.promoted and other != skill.id:
            option = PrepOption.skill(other)
            if not any(o.label == option.label for o in options):
                options.append(option)
    ecm = skill.ecm or build_ecm(skill.id, setup.sensing_actions, skill.perceptual_model,
                                 options, h_min=config.h_min)
    object_id, attr, values = engine.scenarios.attribute(setup.scenario)
    rng = np.random.default_rng(config.seed)
    curve = []
    successes = 0
    for episode in range(config.episodes):
        value = values[int(rng.integers(len(values)))]
        world_seed = int(rng.integers(2 ** 32))
        world = engine.create_world(setup.scenario, world_seed,
                                    overrides={object_id: {attr: value}})
        path, outcome, record = walk(engine, skill, ecm, world, rng)
        update(ecm, path, outcome, config)
        successes += bool(outcome)
        row = (episode, bool(outcome), successes / (episode + 1))
        curve.append(row)
        if on_episode is not None:
            on_episode({"episode": episode, "outcome": bool(outcome),
                        "running_mean": row[2], "path": list(path),
                        "situation": {attr: value}, "record_id": record.id})
    engine.note_play_outcomes(skill, [o for _, o, _ in curve], ecm)
    return ecm, curve


# ---------------------------------------------------------------------------
# Serialization


ECM_VERSION = 1


def serialize_ecm(ecm):
    """Versioned ECM document; edges carry both h-values and the normalized
    transition probabilities so clients never recompute them."""
    if ecm is None:
        return None
    edges = []
    for src in ecm.clips:
        if not ecm.out_edges(src):
            continue
        targets, probs = ecm.probabilities(src)
        for dst, p in zip(targets, probs):
            edges.append({"src": src, "dst": dst, "h": ecm.h[(src, dst)],
                          "p": float(p)})
    return {
        "ecm_version": ECM_VERSION,
        "skill": ecm.skill_id,
        "h_min": ecm.h_min,
        "clips": [
            {"id": c.cid, "layer": c.layer, "kind": c.kind, "label": c.label}
            for layer in range(1, 6) for cid in ecm.layers[layer]
            for c in [ecm.clips[cid]]],
        "edges": edges,
    }


def curve_rows(curve):
    """CSV-ready rows for a success curve."""
    return [{"episode": ep, "outcome": int(outcome), "running_mean": mean}
            for ep, outcome, mean in curve]
