import math

import numpy as np
import pytest

from ranlab.core import constants
from ranlab.core.exceptions import DimensionMismatchError
from ranlab.reporting.records import read_experience_log, write_experience_log
from ranlab.schemas.experiment import RuleThresholds, TiltEnvConfig, TrainConfig
from ranlab.services.network import KpiVector, evaluate_network
from ranlab.services.neural import forward
from ranlab.services.tilt import (
    ExperienceLog,
    TiltEnvironment,
    TiltPolicy,
    Transition,
    apply_actions,
    argmax_accuracy,
    build_features,
    estimate_propensities,
    evaluate_policy,
    gain_pct,
    generate_log,
    greedy_actions,
    inverse_propensity_weights,
    reward,
    rule_action,
    rule_based_action,
    train_dm,
    train_propensity_dm,
)
from tests.conftest import linear_net


@pytest.fixture
def small_env():
    return TiltEnvironment.build(TiltEnvConfig(n_users=200), seed=1)


@pytest.fixture
def kpis21(layout21, params):
    _, kpis = evaluate_network(layout21, params, 800, seed=4)
    return kpis


def _scaled(kpi: KpiVector) -> np.ndarray:
    offsets, scales = TiltEnvConfig().feature_scaling.offsets_and_scales()
    return (kpi.as_array() - np.array(offsets)) / np.array(scales)


def _by_distance(layout, cell_id):
    sx, sy = layout.sites[layout.cells[cell_id].site_index]
    others = []
    for cell in layout.cells:
        if cell.cell_id == cell_id:
            continue
        ox, oy = layout.sites[cell.site_index]
        others.append((round(math.hypot(ox - sx, oy - sy), 6), cell.cell_id))
    return [c for _, c in sorted(others)]


def _synthetic_log(rng, n, propensity_fn, reward_fn, feature_count=5):
    states = rng.uniform(-1.0, 1.0, size=(n, feature_count))
    transitions = []
    for i, s in enumerate(states):
        action, propensity = propensity_fn(s, rng)
        transitions.append(
            Transition(
                day=i,
                cell_id=0,
                features=s,
                action=action,
                reward=float(reward_fn(s[None, :])[0, action]),
                propensity=propensity,
            )
        )
    return ExperienceLog(transitions=transitions, env_config_hash="synthetic", seed=0, feature_count=feature_count)


def _uniform_logging(s, rng):
    return int(rng.integers(3)), 1.0 / 3.0


# ---------------------------
# Features and reward
# ---------------------------

def test_features_own_kpis(kpis21, layout21):
    vec = build_features(kpis21, 4, layout21, 5)
    assert np.allclose(vec, _scaled(kpis21[4]))


@pytest.mark.parametrize("feature_count", [20, 35])
def test_features_follow_distance_order(kpis21, layout21, feature_count):
    cell_id = 7
    n_neighbors = constants.FEATURE_NEIGHBORS[feature_count]
    expected = [_scaled(kpis21[cell_id])]
    expected += [_scaled(kpis21[c]) for c in _by_distance(layout21, cell_id)[:n_neighbors]]
    vec = build_features(kpis21, cell_id, layout21, feature_count)
    assert vec.shape == (feature_count,)
    assert np.allclose(vec, np.concatenate(expected))


def test_features_are_pure(kpis21, layout21):
    a = build_features(kpis21, 3, layout21, 35)
    b = build_features(kpis21, 3, layout21, 35)
    assert np.array_equal(a, b)


def test_features_reject_unknown_count(kpis21, layout21):
    with pytest.raises(ValueError):
        build_features(kpis21, 0, layout21, 12)


def test_reward_own_coverage(kpis21, layout21):
    assert reward(kpis21, 2, layout21, beta=1.0, mu=1.0) == pytest.approx(kpis21[2].coverage)


@pytest.mark.parametrize("mu", [0.0, 0.3, 1.0])
def test_reward_identical_cells(layout21, mu):
    k = KpiVector(coverage=0.8, capacity=2.0, mean_sinr_db=5.0, edge_sinr_db=-3.0, load=40)
    expected = 0.5 * 0.8 + 0.5 * 2.0 / constants.CAPACITY_NORM
    assert reward([k] * 21, 9, layout21, beta=0.5, mu=mu) == pytest.approx(expected)


def test_reward_matches_recomputation(layout21, rng):
    kpis = [
        KpiVector(
            coverage=float(rng.random()),
            capacity=float(rng.uniform(0, 6)),
            mean_sinr_db=float(rng.uniform(-5, 20)),
            edge_sinr_db=float(rng.uniform(-10, 0)),
            load=int(rng.integers(0, 100)),
        )
        for _ in range(21)
    ]
    beta, mu, norm = 0.3, 0.6, 5.0
    g = [beta * k.coverage + (1 - beta) * k.capacity / norm for k in kpis]
    for cell_id in (0, 5, 20):
        nb = _by_distance(layout21, cell_id)[:6]
        expected = mu * g[cell_id] + (1 - mu) * sum(g[c] for c in nb) / 6
        assert reward(kpis, cell_id, layout21, beta, mu, norm) == pytest.approx(expected)


def test_reward_rejects_bad_weights(kpis21, layout21):
    with pytest.raises(ValueError):
        reward(kpis21, 0, layout21, beta=1.5, mu=0.5)


# ---------------------------
# Policies
# ---------------------------

def test_rule_uptilts_low_coverage(rng):
    own = KpiVector(coverage=0.5, capacity=3.0, mean_sinr_db=0.0, edge_sinr_db=-5.0, load=10)
    thresholds = RuleThresholds(cov_low=0.8, cov_high=0.95)
    action, propensity = rule_based_action(own, thresholds, 1e-12, rng)
    assert action == constants.ACTION_UPTILT
    assert propensity == pytest.approx(1.0)


def test_rule_branches():
    t = RuleThresholds()
    assert rule_action(KpiVector(0.97, 1.0, 0.0, -3.0, 5), t) == constants.ACTION_DOWNTILT
    assert rule_action(KpiVector(0.97, 4.0, 0.0, -3.0, 5), t) == constants.ACTION_NOCHANGE
    assert rule_action(KpiVector(0.92, 1.0, 0.0, -3.0, 5), t) == constants.ACTION_NOCHANGE


def test_rule_propensities_with_exploration(rng):
    own = KpiVector(coverage=0.5, capacity=3.0, mean_sinr_db=0.0, edge_sinr_db=-5.0, load=10)
    t = RuleThresholds()
    seen = set()
    for _ in range(300):
        action, propensity = rule_based_action(own, t, 0.3, rng)
        expected = 0.8 if action == constants.ACTION_UPTILT else 0.1
        assert propensity == pytest.approx(expected)
        seen.add(action)
    assert seen == {0, 1, 2}


@pytest.mark.parametrize("epsilon", [0.0, 1.0, -0.1])
def test_rule_rejects_epsilon_outside_open_interval(rng, epsilon):
    own = KpiVector(0.5, 3.0, 0.0, -5.0, 10)
    with pytest.raises(ValueError):
        rule_based_action(own, RuleThresholds(), epsilon, rng)


def test_thresholds_must_be_ordered():
    with pytest.raises(ValueError):
        RuleThresholds(cov_low=0.95, cov_high=0.9)


def test_tilts_stay_clamped(rng):
    config = TiltEnvConfig()
    tilts = np.full(21, 8.0)
    for _ in range(40):
        tilts = apply_actions(tilts, rng.integers(0, 3, size=21), config)
        assert np.all(tilts >= config.tilt_min) and np.all(tilts <= config.tilt_max)
    assert np.all(apply_actions(np.zeros(3), np.zeros(3, dtype=int), config) == 0.0)


def test_greedy_policy_invariant_under_affine_transform(rng):
    net = linear_net(rng.standard_normal((3, 5)), rng.standard_normal(3))
    states = rng.standard_normal((50, 5))
    before = greedy_actions(net, states)
    net.weights[0] *= 2.5
    net.biases[0] = net.biases[0] * 2.5 + 7.0
    assert np.array_equal(greedy_actions(net, states), before)


# ---------------------------
# Logging
# ---------------------------

def test_generate_log_size(small_env):
    log = generate_log(small_env, TiltPolicy.rule_based(RuleThresholds(), epsilon=0.3), 2, seed=3)
    assert len(log) == 21
    assert {t.cell_id for t in log.transitions} == set(range(21))
    assert all(len(t.features) == 35 for t in log.transitions)


def test_generate_log_without_exploration_follows_rule(small_env):
    log = generate_log(small_env, TiltPolicy.rule_based(RuleThresholds(), epsilon=1e-12), 4, seed=3)
    assert all(t.propensity > 0.99 for t in log.transitions)


def test_generate_log_is_deterministic(small_env):
    policy = TiltPolicy.rule_based(RuleThresholds(), epsilon=0.3)
    a = generate_log(small_env, policy, 3, seed=9)
    b = generate_log(small_env, policy, 3, seed=9)
    fa, aa, ra, pa = a.arrays()
    fb, ab, rb, pb = b.arrays()
    assert np.array_equal(fa, fb) and np.array_equal(aa, ab)
    assert np.array_equal(ra, rb) and np.array_equal(pa, pb)
    assert a.env_config_hash == b.env_config_hash


def test_generate_log_rejects_single_day(small_env):
    with pytest.raises(ValueError):
        generate_log(small_env, TiltPolicy.rule_based(RuleThresholds(), epsilon=0.3), 1, seed=0)


def test_log_feature_prefix(small_env):
    log = generate_log(small_env, TiltPolicy.rule_based(RuleThresholds(), epsilon=0.3), 2, seed=1, feature_count=20)
    features, *_ = log.arrays(5)
    assert features.shape == (21, 5)
    with pytest.raises(DimensionMismatchError):
        log.arrays(35)


def test_experience_log_file(tmp_path, small_env):
    log = generate_log(small_env, TiltPolicy.rule_based(RuleThresholds(), epsilon=0.3), 2, seed=1, feature_count=5)
    path = write_experience_log(log, tmp_path / "log.jsonl")
    loaded = read_experience_log(path)
    assert loaded.env_config_hash == log.env_config_hash
    assert loaded.feature_count == 5
    for a, b in zip(loaded.transitions, log.transitions):
        assert np.array_equal(a.features, b.features)
        assert (a.action, a.reward, a.propensity, a.day) == (b.action, b.reward, b.propensity, b.day)


def test_estimate_propensities(rng):
    log = _synthetic_log(rng, 300, _uniform_logging, lambda s: np.zeros((len(s), 3)))
    estimated = estimate_propensities(log)
    actions = np.array([t.action for t in log.transitions])
    for t in estimated.transitions:
        assert t.propensity == pytest.approx(np.mean(actions == t.action))


def test_transition_validation():
    with pytest.raises(ValueError):
        Transition(day=0, cell_id=0, features=np.zeros(5), action=3, reward=0.0, propensity=0.5)
    with pytest.raises(ValueError):
        Transition(day=0, cell_id=0, features=np.zeros(5), action=0, reward=0.0, propensity=0.0)


# ---------------------------
# Offline training
# ---------------------------

def test_dm_fits_constant_reward(rng):
    log = _synthetic_log(rng, 640, _uniform_logging, lambda s: np.full((len(s), 3), 0.7))
    cfg = TrainConfig(feature_count=5, epochs=100)
    qnet = train_dm(log, cfg, seed=0)
    features, actions, _, _ = log.arrays(5)
    q = forward(qnet, features)[np.arange(len(actions)), actions]
    assert np.mean((q - 0.7) ** 2) < 1e-3


def test_dm_is_deterministic(rng):
    log = _synthetic_log(rng, 200, _uniform_logging, lambda s: s[:, :3])
    cfg = TrainConfig(feature_count=5, epochs=2)
    a = train_dm(log, cfg, seed=5)
    b = train_dm(log, cfg, seed=5)
    for p, q in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p, q)


def test_dm_rejects_empty_log():
    empty = ExperienceLog(transitions=[], env_config_hash="", seed=0, feature_count=5)
    with pytest.raises(ValueError):
        train_dm(empty, TrainConfig(feature_count=5), seed=0)


def test_propensity_dm_equals_dm_under_uniform_logging(rng):
    log = _synthetic_log(rng, 256, _uniform_logging, lambda s: s[:, :3] * 2.0)
    cfg = TrainConfig(feature_count=5, epochs=2)
    dm_history, pdm_history = [], []
    train_dm(log, cfg, seed=1, history=dm_history)
    train_propensity_dm(log, cfg, seed=1, history=pdm_history)
    assert len(dm_history) == len(pdm_history) > 0
    for snap_a, snap_b in zip(dm_history, pdm_history):
        for p, q in zip(snap_a, snap_b):
            assert np.array_equal(p, q)


def test_inverse_propensity_weight_ratio():
    w = inverse_propensity_weights(np.array([0.1, 0.8]), cap=20.0)
    assert w[0] / w[1] == pytest.approx(8.0)
    assert np.mean(w) == pytest.approx(1.0)
    capped = inverse_propensity_weights(np.array([0.01, 0.5]), cap=20.0)
    assert capped[0] / capped[1] == pytest.approx(10.0)


def _linear_rewards(seed):
    table = np.random.default_rng(seed).standard_normal((5, 3))
    return lambda s: s @ table


@pytest.mark.slow
def test_dm_recovers_linear_argmax():
    rng = np.random.default_rng(0)
    reward_fn = _linear_rewards(42)
    log = _synthetic_log(rng, 4000, _uniform_logging, reward_fn)
    qnet = train_dm(log, TrainConfig(feature_count=5, epochs=60), seed=0)
    held_out = rng.uniform(-1.0, 1.0, size=(2000, 5))
    assert argmax_accuracy(qnet, held_out, reward_fn) >= 0.95


@pytest.mark.slow
def test_propensity_dm_beats_dm_on_biased_log():
    dm_acc, pdm_acc = [], []
    for seed in range(5):
        rng = np.random.default_rng([seed, 99])
        reward_fn = _linear_rewards(seed)

        def biased(s, rng):
            rule = int(np.argmax(s[:3] * np.array([1.0, -1.0, 0.5])))
            if rng.random() < 0.9:
                return rule, 0.9 + 0.1 / 3
            other = int(rng.integers(3))
            return other, (0.9 if other == rule else 0.0) + 0.1 / 3

        log = _synthetic_log(rng, 3000, biased, reward_fn)
        cfg = TrainConfig(feature_count=5, epochs=30)
        held_out = rng.uniform(-1.0, 1.0, size=(2000, 5))
        dm_acc.append(argmax_accuracy(train_dm(log, cfg, seed), held_out, reward_fn))
        pdm_acc.append(argmax_accuracy(train_propensity_dm(log, cfg, seed), held_out, reward_fn))
    assert np.mean(pdm_acc) >= np.mean(dm_acc)


# ---------------------------
# Evaluation
# ---------------------------

def test_baseline_against_itself_has_zero_gain(small_env):
    result = evaluate_policy(small_env, TiltPolicy.rule_based(RuleThresholds()), 3, 1)
    assert result.gain_pct == 0.0
    assert result.mean_reward == result.baseline_mean_reward


def test_evaluation_is_reproducible(small_env):
    nochange = TiltPolicy.greedy(linear_net(np.zeros((3, 5)), [0.0, 0.0, 1.0]))
    a = evaluate_policy(small_env, nochange, 3, 2)
    b = evaluate_policy(small_env, nochange, 3, 2)
    assert a == b


def test_evaluation_defaults_to_evaluation_drops(small_env):
    nochange = TiltPolicy.greedy(linear_net(np.zeros((3, 5)), [0.0, 0.0, 1.0]))
    default = evaluate_policy(small_env, nochange, 3, 2)
    explicit = evaluate_policy(small_env, nochange, 3, 2, seeds=[constants.EVAL_SEED_BASE, constants.EVAL_SEED_BASE + 1])
    assert default == explicit
    assert default != evaluate_policy(small_env, nochange, 3, 2, seeds=[0, 1])


@pytest.mark.slow
def test_nochange_policy_loses_to_rule_baseline():
    env = TiltEnvironment.build(TiltEnvConfig(), seed=1)
    nochange = TiltPolicy.greedy(linear_net(np.zeros((3, 5)), [0.0, 0.0, 1.0]))
    result = evaluate_policy(env, nochange, 20, 3)
    assert result.baseline_mean_reward > result.mean_reward
    assert result.gain_pct < 0.0


def test_gain_pct():
    assert gain_pct(1.5, 1.0) == pytest.approx(50.0)
    assert gain_pct(-1.5, -1.0) == pytest.approx(-50.0)
    assert gain_pct(0.0, 0.0) == 0.0
    assert gain_pct(1.0, 0.0) == math.inf
