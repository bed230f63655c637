"""Skill-centric self-diagnosis.

Success-conditioned models are trained per skill from stored executions: a
per-tick Gaussian sensor model scores how normal an observation looks and
locates the failure tick, and a per-function Gaussian over active-instance
counts fingerprints normal call profiles. Failed and successful test
executions then drive a Bayesian update of the blame distribution over
instrumented functions, and the next test skill is picked by expected
information gain.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .config import DiagnosisConstants
from .errors import InsufficientDataError, SchemaViolationError

NO_FAULT = "no-fault"


def _padded(matrix, ticks):
    """Extend a matrix to `ticks` columns by repeating its final column."""
    values = matrix
    if values.shape[1] >= ticks:
        return values[:, :ticks]
    pad = np.repeat(values[:, -1:], ticks - values.shape[1], axis=1)
    return np.concatenate([values, pad], axis=1)


# ---------------------------------------------------------------------------
# Models


@dataclass
class Mom:
    """Per-tick, per-channel Gaussian over successful executions."""

    skill_id: str
    channels: tuple
    means: np.ndarray         # M x T
    variances: np.ndarray     # M x T
    tau: float                # squared-deviation threshold (chi-square quantile)
    smoothing_window: int = 3

    @property
    def ticks(self):
        return self.means.shape[1]


@dataclass
class Fpf:
    """Per-tick Gaussian over each function's active-instance count."""

    skill_id: str
    functions: tuple
    means: np.ndarray         # F x T
    variances: np.ndarray     # F x T

    @property
    def ticks(self):
        return self.means.shape[1]


def _successful(records):
    return [r for r in records if r.success]


def train_mom(skill_id, records, consts=DiagnosisConstants()):
    """Train the sensor observation model from successful executions."""
    records = _successful(records)
    if len(records) < consts.n_min:
        raise InsufficientDataError(
            f"{len(records)} successful records for {skill_id!r}; need {consts.n_min}")
    channels = records[0].sensor.channels
    for r in records:
        if r.sensor.channels != channels:
            raise SchemaViolationError("records disagree on sensor channels")
    ticks = max(r.sensor.ticks for r in records)
    stack = np.stack([_padded(r.sensor.values, ticks) for r in records])
    means = stack.mean(axis=0)
    variances = np.maximum(stack.var(axis=0), consts.variance_floor)
    tau = float(stats.chi2.ppf(consts.mom_quantile, df=len(channels)))
    return Mom(skill_id, channels, means, variances, tau,
               smoothing_window=consts.smoothing_window)


def train_fpf(skill_id, records, consts=DiagnosisConstants()):
    """Train the call-profile fingerprint from successful executions."""
    records = _successful(records)
    if len(records) < consts.n_min:
        raise InsufficientDataError(
            f"{len(records)} successful records for {skill_id!r}; need {consts.n_min}")
    functions = []
    for r in records:
        for fid in r.profile.functions:
            if fid not in functions:
                functions.append(fid)
    ticks = max(r.profile.ticks for r in records)
    stack = np.zeros((len(records), len(functions), ticks))
    for k, r in enumerate(records):
        padded = _padded(r.profile.counts.astype(float), ticks)
        for i, fid in enumerate(functions):
            if fid in r.profile.functions:
                stack[k, i] = padded[r.profile.functions.index(fid)]
    means = stack.mean(axis=0)
    variances = np.maximum(stack.var(axis=0), consts.variance_floor)
    return Fpf(skill_id, tuple(functions), means, variances)


def deviation_scores(mom, sensor):
    """Per-tick standardized squared deviation, smoothed by a trailing mean."""
    if sensor.channels != mom.channels:
        raise SchemaViolationError(
            f"sensor channels {sensor.channels} do not match model {mom.channels}")
    ticks = sensor.ticks
    means = _padded(mom.means, ticks)
    variances = _padded(mom.variances, ticks)
    dev = (((sensor.values - means) ** 2) / variances).sum(axis=0)
    window = max(1, mom.smoothing_window)
    smoothed = np.empty(ticks)
    for t in range(ticks):
        smoothed[t] = dev[max(0, t - window + 1):t + 1].mean()
    return dev, smoothed


def estimate_fail_time(mom, sensor):
    """Earliest tick whose smoothed deviation crosses the threshold.

    Returns (t_fail, confident). Without a crossing the final tick is
    returned with confident=False; for executions truncated by a hard abort
    that final tick is the abort tick itself, which is the right anchor for
    the blame timing term.
    """
    _, smoothed = deviation_scores(mom, sensor)
    above = np.nonzero(smoothed > mom.tau)[0]
    if len(above):
        return int(above[0]), True
    return sensor.ticks - 1, False


# ---------------------------------------------------------------------------
# Blame distribution


@dataclass
class BlameDistribution:
    hypotheses: tuple          # function ids plus the no-fault hypothesis
    probs: np.ndarray

    @classmethod
    def uniform(cls, function_ids):
        hypotheses = tuple(sorted(function_ids)) + (NO_FAULT,)
        return cls(hypotheses, np.full(len(hypotheses), 1.0 / len(hypotheses)))

    def validate(self):
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("blame distribution must be a probability vector")

    def probability(self, hypothesis):
        return float(self.probs[self.hypotheses.index(hypothesis)])

    def argmax(self):
        return self.hypotheses[int(np.argmax(self.probs))]

    def entropy(self):
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())

    def top(self, n=None):
        order = np.argsort(-self.probs, kind="stable")
        rows = [(self.hypotheses[i], float(self.probs[i])) for i in order]
        return rows[:n] if n else rows


def last_active_tick(profile, function_id):
    if function_id not in profile.functions:
        return None
    active = np.nonzero(profile.row(function_id) > 0)[0]
    return int(active[-1]) if len(active) else None


def fpf_deviation(fpf, profile, function_id, t_fail):
    """Mean absolute z-score of the function's count row up to t_fail."""
    if function_id not in fpf.functions or function_id not in profile.functions:
        return 0.0
    upto = t_fail + 1
    observed = _padded(profile.counts.astype(float), upto)[
        profile.functions.index(function_id)]
    i = fpf.functions.index(function_id)
    means = _padded(fpf.means, upto)[i]
    sigma = np.sqrt(_padded(fpf.variances, upto)[i])
    return float(np.mean(np.abs(observed - means) / sigma))


def likelihood(record, function_id, mom, fpf, consts=DiagnosisConstants(), t_fail=None):
    """p(observation | the given function is the faulty one).

    Failed observation: functions never active get the background likelihood;
    active ones score by closeness of their last activity to the estimated
    failure tick, boosted by how abnormal their call profile looked. A
    successful observation makes active functions less likely than inactive
    ones. The no-fault hypothesis treats every failure as background noise.
    """
    if function_id == NO_FAULT:
        return consts.beta_high if record.success else consts.epsilon_bg
    if record.success:
        active = last_active_tick(record.profile, function_id) is not None
        return consts.beta_low if active else consts.beta_high
    if t_fail is None:
        t_fail, _ = estimate_fail_time(mom, record.sensor)
    t_last = last_active_tick(record.profile, function_id)
    if t_last is None:
        return consts.epsilon_bg
    closeness = np.exp(-abs(t_last - t_fail) / consts.lambda_t)
    dev = fpf_deviation(fpf, record.profile, function_id, t_fail)
    return float(closeness * (1.0 + consts.kappa * dev))


def likelihood_vector(record, hypotheses, mom, fpf, consts=DiagnosisConstants()):
    t_fail = None
    if not record.success:
        t_fail, _ = estimate_fail_time(mom, record.sensor)
    return np.array([likelihood(record, h, mom, fpf, consts, t_fail=t_fail)
                     for h in hypotheses]), t_fail


def posterior(prior_probs, likelihoods):
    """Bayes step: elementwise product, renormalized."""
    unnormalized = prior_probs * likelihoods
    total = unnormalized.sum()
    assert total > 0, "all-zero posterior; background likelihood should prevent this"
    return unnormalized / total


def blame_update(prior, record, mom, fpf, consts=DiagnosisConstants()):
    """One Bayesian belief update from a test observation; pure."""
    prior.validate()
    lik, _ = likelihood_vector(record, prior.hypotheses, mom, fpf, consts)
    return BlameDistribution(prior.hypotheses, posterior(prior.probs, lik))


# ---------------------------------------------------------------------------
# Test selection by expected information gain


def _entropy(probs):
    p = probs[probs > 0]
    return float(-(p * np.log(p)).sum())


def expected_information_gain(blame, coverage, consts=DiagnosisConstants()):
    """H(blame) minus the expected posterior entropy under the outcome model.

    The outcome model is coverage-based: a test fails with probability rho if
    it covers the faulty function, rho_0 otherwise (and rho_0 under no-fault).
    """
    lik_fail = np.array([
        consts.rho if h != NO_FAULT and h in coverage else consts.rho_0
        for h in blame.hypotheses])
    p_fail = float((blame.probs * lik_fail).sum())
    h_now = _entropy(blame.probs)
    expected = 0.0
    if p_fail > 0:
        expected += p_fail * _entropy(posterior(blame.probs, lik_fail))
    if p_fail < 1:
        expected += (1 - p_fail) * _entropy(posterior(blame.probs, 1.0 - lik_fail))
    return h_now - expected


def select_next_skill(blame, candidates, consts=DiagnosisConstants()):
    """Argmax of expected information gain; ties broken by lexicographic id."""
    if not candidates:
        raise ValueError("no candidate test skills")
    best_id, best_gain = None, None
    for skill_id in sorted(candidates):
        gain = expected_information_gain(blame, set(candidates[skill_id]), consts)
        if best_gain is None or gain > best_gain + 1e-15:
            best_id, best_gain = skill_id, gain
    return best_id


# ---------------------------------------------------------------------------
# The diagnosis loop


@dataclass
class TestCandidate:
    """A skill used as a test case, bound to the scenario it runs on."""

    skill_id: str
    scenario: str
    overrides: dict | None = None
    coverage: frozenset = frozenset()


@dataclass
class DiagnosisStep:
    skill_id: str
    success: bool
    t_fail: int | None
    record_id: int
    posterior: BlameDistribution


@dataclass
class DiagnosisSession:
    prior: BlameDistribution
    budget: int
    steps: list = field(default_factory=list)

    @property
    def executed(self):
        return len(self.steps)

    @property
    def posterior(self):
        return self.steps[-1].posterior if self.steps else self.prior

    def rows(self):
        out = []
        for i, step in enumerate(self.steps):
            top_id, top_p = step.posterior.top(1)[0]
            out.append({"step": i + 1, "skill": step.skill_id,
                        "outcome": "success" if step.success else "failure",
                        "t_fail": step.t_fail if step.t_fail is not None else "",
                        "top_hypothesis": top_id, "top_posterior": top_p})
        return out


def train_models(engine, candidates, runs, rng, consts=None):
    """Collect fault-free executions per candidate and fit its MOM and FPF."""
    consts = consts or engine.config.diagnosis
    models = {}
    for skill_id in sorted(candidates):
        cand = candidates[skill_id]
        for _ in range(runs):
            seed = int(rng.integers(2 ** 32))
            world = engine.create_world(cand.scenario, seed, overrides=cand.overrides)
            engine.execute_skill(skill_id, world, np.random.default_rng(seed))
        records = engine.store.fetch_executions(ref_id=skill_id, success=True, limit=runs)
        models[skill_id] = (train_mom(skill_id, records, consts),
                            train_fpf(skill_id, records, consts))
    return models


def diagnose(engine, candidates, models, budget, rng, consts=None, selection="eig",
             on_step=None):
    """Select -> execute -> update until the budget runs out or blame concentrates.

    `candidates` maps skill id to TestCandidate; `models` maps skill id to the
    (mom, fpf) trained for it. Returns (final blame, session log).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    consts = consts or engine.config.diagnosis
    prior = BlameDistribution.uniform(sorted(engine.functions))
    session = DiagnosisSession(prior=prior, budget=budget)
    blame = prior
    coverage = {sid: set(c.coverage) for sid, c in candidates.items()}
    for _ in range(budget):
        if blame.probs.max() >= consts.certainty:
            break
        if selection == "eig":
            skill_id = select_next_skill(blame, coverage, consts)
        elif selection == "random":
            skill_id = sorted(candidates)[int(rng.integers(len(candidates)))]
        else:
            raise ValueError(f"unknown selection strategy {selection!r}")
        cand = candidates[skill_id]
        seed = int(rng.integers(2 ** 32))
        world = engine.create_world(cand.scenario, seed, overrides=cand.overrides)
        _, record = engine.execute_skill(skill_id, world, np.random.default_rng(seed))
        mom, fpf = models[skill_id]
        t_fail = None
        if not record.success:
            t_fail, _ = estimate_fail_time(mom, record.sensor)
        blame = blame_update(blame, record, mom, fpf, consts)
        step = DiagnosisStep(skill_id, record.success, t_fail, record.id, blame)
        session.steps.append(step)
        if on_step is not None:
            on_step({"step": session.executed, "skill": skill_id,
                     "outcome": bool(record.success), "t_fail": t_fail,
                     "blame": blame.top(5)})
    return blame, session
