"""Self-diagnosis: MOM/FPF training, fail-time estimation, Bayesian blame."""

import numpy as np
import pytest

from skillforge import build_engine
from skillforge.catalog import diagnosis_candidates
from skillforge.config import DiagnosisConstants, EngineConfig
from skillforge.diagnosis import (
    NO_FAULT, BlameDistribution, blame_update, diagnose, estimate_fail_time,
    expected_information_gain, likelihood, likelihood_vector, select_next_skill,
    train_fpf, train_models, train_mom,
)
from skillforge.errors import InsufficientDataError
from skillforge.memory import CallProfileMatrix, ExecutionRecord, SensorMatrix
from skillforge.world import FaultSpec

CONSTS = DiagnosisConstants()


def make_record(sensor_values, profile_counts, success, channels=None, functions=None):
    sensor_values = np.asarray(sensor_values, dtype=float)
    profile_counts = np.asarray(profile_counts)
    channels = channels or tuple(f"c{i}" for i in range(sensor_values.shape[0]))
    functions = functions or tuple(f"f{i}" for i in range(profile_counts.shape[0]))
    return ExecutionRecord(
        ref_id="s", kind="skill", start_tick=0, end_tick=sensor_values.shape[1],
        success=success,
        sensor=SensorMatrix(channels, sensor_values),
        profile=CallProfileMatrix(functions, profile_counts.astype(np.uint32)),
        hardware=(), situation={})


def constant_records(n, base, ticks=10, success=True):
    base = np.asarray(base, dtype=float)
    values = np.repeat(base[:, None], ticks, axis=1)
    counts = np.ones((2, ticks))
    return [make_record(values, counts, success) for _ in range(n)]


def test_mom_degenerate_statistics():
    records = constant_records(20, [1.0, -2.0])
    mom = train_mom("s", records, CONSTS)
    assert np.allclose(mom.means[0], 1.0) and np.allclose(mom.means[1], -2.0)
    assert np.allclose(mom.variances, CONSTS.variance_floor)


def test_mom_requires_enough_records():
    with pytest.raises(InsufficientDataError):
        train_mom("s", constant_records(9, [0.0]), CONSTS)
    # failures do not count towards the training corpus
    records = constant_records(9, [0.0]) + constant_records(5, [0.0], success=False)
    with pytest.raises(InsufficientDataError):
        train_mom("s", records, CONSTS)


def test_mom_mean_close_to_generating_base():
    # standard error 0.5/sqrt(30) is about 0.09; assert at roughly twice that
    rng = np.random.default_rng(3)
    base = np.array([[2.0] * 12, [7.0] * 12])
    records = [make_record(base + rng.normal(0, 0.5, base.shape),
                           np.ones((1, 12)), True) for _ in range(30)]
    mom = train_mom("s", records, CONSTS)
    assert np.max(np.abs(mom.means - base)) < 0.2


def test_estimate_fail_time_no_deviation():
    records = constant_records(20, [1.0, 2.0])
    mom = train_mom("s", records, CONSTS)
    rng = np.random.default_rng(1)
    probe = records[0].sensor
    t_fail, confident = estimate_fail_time(mom, probe)
    assert t_fail == probe.ticks - 1
    assert not confident
    del rng


def test_estimate_fail_time_bias_from_tick_12():
    rng = np.random.default_rng(5)
    base = np.zeros((4, 20))
    records = [make_record(base + rng.normal(0, 0.5, base.shape),
                           np.ones((1, 20)), True) for _ in range(30)]
    mom = train_mom("s", records, CONSTS)
    biased = base + rng.normal(0, 0.5, base.shape)
    biased[:, 12:] += 5.0
    t_fail, confident = estimate_fail_time(mom, SensorMatrix(records[0].sensor.channels,
                                                             biased))
    assert confident and 12 <= t_fail <= 14


def test_estimate_fail_time_earliest_crossing():
    records = constant_records(20, [0.0, 0.0], ticks=10)
    mom = train_mom("s", records, CONSTS)
    probe = np.zeros((2, 10))
    probe[:, 3] = 50.0   # single massive spike at tick 3
    t_fail, confident = estimate_fail_time(mom, SensorMatrix(records[0].sensor.channels,
                                                             probe))
    assert confident and t_fail == 3


def _trained_pair():
    """MOM/FPF over a fixed two-function profile: f0 active 0-4, f1 active 5-14."""
    rng = np.random.default_rng(11)
    base = np.zeros((3, 15))
    counts = np.zeros((2, 15))
    counts[0, 0:5] = 1
    counts[1, 5:15] = 1
    records = [make_record(base + rng.normal(0, 0.5, base.shape), counts, True)
               for _ in range(20)]
    mom = train_mom("s", records, CONSTS)
    fpf = train_fpf("s", records, CONSTS)
    return mom, fpf, records


def test_likelihood_inactive_function_gets_background():
    mom, fpf, records = _trained_pair()
    failed = make_record(records[0].sensor.values, np.zeros((2, 15)), False)
    assert likelihood(failed, "f0", mom, fpf, CONSTS) == CONSTS.epsilon_bg


def test_likelihood_success_washes_active_functions():
    mom, fpf, records = _trained_pair()
    ok = records[0]
    active = likelihood(ok, "f0", mom, fpf, CONSTS)
    inactive = make_record(ok.sensor.values,
                           np.vstack([np.zeros(15), ok.profile.counts[1]]),
                           True)
    assert active == CONSTS.beta_low
    assert likelihood(inactive, "f0", mom, fpf, CONSTS) == CONSTS.beta_high
    assert active < likelihood(inactive, "f0", mom, fpf, CONSTS)


def test_likelihood_timing_ratio():
    """A function last active at t_fail vs one 10 ticks earlier: exp(10 / 5)."""
    mom, fpf, records = _trained_pair()
    values = records[0].sensor.values.copy()
    values[:, 14] += 50.0            # deviation pins t_fail to the final tick
    counts = np.zeros((2, 15))
    counts[0, 0:5] = 1               # f0 last active at tick 4
    counts[1, 5:15] = 1              # f1 active straight through t_fail = 14
    failed = make_record(values, counts, False)
    t_fail, _ = estimate_fail_time(mom, failed.sensor)
    assert t_fail == 14
    lf1 = likelihood(failed, "f1", mom, fpf, CONSTS)
    lf0 = likelihood(failed, "f0", mom, fpf, CONSTS)
    assert lf1 / lf0 == pytest.approx(np.exp(10 / CONSTS.lambda_t), rel=1e-6)


def test_posterior_proportionality_examples():
    prior = BlameDistribution(("a", "b", "c"), np.array([1 / 3, 1 / 3, 1 / 3]))
    from skillforge.diagnosis import posterior

    post = posterior(prior.probs, np.array([0.8, 0.1, 0.1]))
    assert np.allclose(post, [0.8, 0.1, 0.1])
    post = posterior(np.array([0.5, 0.3, 0.2]), np.array([0.4, 0.4, 0.4]))
    assert np.allclose(post, [0.5, 0.3, 0.2])


def test_blame_sequence_matches_bruteforce_product():
    mom, fpf, records = _trained_pair()
    rng = np.random.default_rng(9)
    hypotheses = ("f0", "f1", NO_FAULT)
    prior = BlameDistribution(hypotheses, np.full(3, 1 / 3))
    observations = []
    for _ in range(5):
        success = bool(rng.integers(2))
        counts = np.zeros((2, 15))
        counts[0, 0:int(rng.integers(1, 6))] = 1
        counts[1, int(rng.integers(5, 10)):15] = 1
        values = records[0].sensor.values + rng.normal(0, 0.5, (3, 15))
        if not success:
            values[:, int(rng.integers(5, 15)):] += 6.0
        observations.append(make_record(values, counts, success))
    iterated = prior
    for obs in observations:
        iterated = blame_update(iterated, obs, mom, fpf, CONSTS)
    product = prior.probs.copy()
    for obs in observations:
        lik, _ = likelihood_vector(obs, hypotheses, mom, fpf, CONSTS)
        product = product * lik
    product = product / product.sum()
    assert np.max(np.abs(iterated.probs - product)) < 1e-9


def test_blame_validity_after_updates():
    mom, fpf, records = _trained_pair()
    blame = BlameDistribution.uniform(["f0", "f1", "f2"])
    for obs in records[:5]:
        blame = blame_update(blame, obs, mom, fpf, CONSTS)
        blame.validate()


def test_success_washing_is_monotone():
    mom, fpf, records = _trained_pair()
    blame = BlameDistribution.uniform(["f0", "f1"])
    previous = blame.probability("f0")
    for obs in records[:6]:
        blame = blame_update(blame, obs, mom, fpf, CONSTS)
        current = blame.probability("f0")
        assert current <= previous + 1e-12
        previous = current


def _entropy(p):
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def brute_force_gain(blame, coverage, consts):
    """Independent enumeration of the two-outcome expected information gain."""
    lik_fail = np.array([consts.rho if h != NO_FAULT and h in coverage else consts.rho_0
                         for h in blame.hypotheses])
    p_fail = float((blame.probs * lik_fail).sum())
    post_fail = blame.probs * lik_fail / (blame.probs * lik_fail).sum()
    lik_succ = 1 - lik_fail
    post_succ = blame.probs * lik_succ / (blame.probs * lik_succ).sum()
    return _entropy(blame.probs) - (p_fail * _entropy(post_fail)
                                    + (1 - p_fail) * _entropy(post_succ))


def test_selection_prefers_covering_skill_under_concentrated_blame():
    blame = BlameDistribution(("f0", "f1", NO_FAULT),
                              np.array([0.999, 0.0005, 0.0005]))
    candidates = {"covers": {"f0"}, "misses": {"f1"}}
    assert select_next_skill(blame, candidates, CONSTS) == "covers"


def test_selection_splits_uniform_blame():
    blame = BlameDistribution(("f0", "f1", NO_FAULT), np.array([0.5, 0.5, 0.0]))
    candidates = {"a_splits": {"f0"}, "b_both": {"f0", "f1"}, "c_neither": set()}
    gains = {sid: brute_force_gain(blame, cov, CONSTS)
             for sid, cov in candidates.items()}
    assert gains["a_splits"] > gains["b_both"] and gains["a_splits"] > gains["c_neither"]
    assert select_next_skill(blame, candidates, CONSTS) == "a_splits"
    for sid, cov in candidates.items():
        assert expected_information_gain(blame, cov, CONSTS) == pytest.approx(gains[sid])


def test_selection_tie_breaks_lexicographically():
    blame = BlameDistribution.uniform(["f0", "f1"])
    candidates = {"zeta": {"f0"}, "alpha": {"f0"}}
    assert select_next_skill(blame, candidates, CONSTS) == "alpha"


def test_ranking_invariant_under_likelihood_rescaling():
    mom, fpf, records = _trained_pair()
    scaled = DiagnosisConstants(epsilon_bg=CONSTS.epsilon_bg * 7,
                                beta_low=CONSTS.beta_low * 7,
                                beta_high=CONSTS.beta_high * 7)
    blame_a = BlameDistribution.uniform(["f0", "f1"])
    blame_b = BlameDistribution.uniform(["f0", "f1"])
    for obs in records[:4]:
        blame_a = blame_update(blame_a, obs, mom, fpf, CONSTS)
        blame_b = blame_update(blame_b, obs, mom, fpf, scaled)
    assert np.allclose(blame_a.probs, blame_b.probs)
    candidates = {"x": {"f0"}, "y": {"f1"}}
    assert select_next_skill(blame_a, candidates, CONSTS) == \
        select_next_skill(blame_b, candidates, CONSTS)


def test_diagnose_budget_validated(engine, rng):
    with pytest.raises(ValueError):
        diagnose(engine, {}, {}, 0, rng)


@pytest.fixture(scope="module")
def diagnosis_engine():
    engine = build_engine(EngineConfig())
    candidates = diagnosis_candidates(engine)
    models = train_models(engine, candidates, runs=15, rng=np.random.default_rng(99))
    return engine, candidates, models


def test_diagnose_localizes_injected_fault(diagnosis_engine):
    engine, candidates, models = diagnosis_engine
    engine.clear_faults()
    engine.inject_fault(FaultSpec("set_stiffness", "fail_hard", 1.0))
    try:
        blame, session = diagnose(engine, candidates, models, budget=15,
                                  rng=np.random.default_rng(4))
    finally:
        engine.clear_faults()
    assert blame.argmax() == "set_stiffness"
    assert session.executed <= 15
    assert len(session.steps) == session.executed
    rows = session.rows()
    assert rows[-1]["top_hypothesis"] == "set_stiffness"


def test_diagnose_without_fault_prefers_no_fault(diagnosis_engine):
    engine, candidates, models = diagnosis_engine
    engine.clear_faults()
    blame, session = diagnose(engine, candidates, models, budget=40,
                              rng=np.random.default_rng(8))
    assert blame.argmax() == NO_FAULT


def test_fpf_defined_for_observed_functions(diagnosis_engine):
    engine, candidates, models = diagnosis_engine
    mom, fpf = models["surface_slide"]
    basic = engine.behaviour("sliding").descriptor
    assert set(fpf.functions) == set(basic.functions())
    assert (fpf.variances >= CONSTS.variance_floor).all()
