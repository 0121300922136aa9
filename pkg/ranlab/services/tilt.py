"""
Offline-RL antenna-tilt optimization.

A rule-based policy with epsilon-uniform exploration is deployed on the
synthetic network and logs one transition per cell per day. A shared
Q-network is then fitted offline with discount zero (the direct method, DM),
optionally reweighting samples by inverse propensity (propensity-DM), and the
greedy policy is rolled out on fresh days for comparison.
"""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ranlab.core import constants
from ranlab.core.exceptions import DimensionMismatchError, TrainingDivergedError
from ranlab.schemas.experiment import RuleThresholds, TiltEnvConfig, TrainConfig
from ranlab.schemas.network import NetworkLayout, PropagationParams
from ranlab.services import network as net_model
from ranlab.services.neural import DenseNet, NetTrainer, forward, gradients, init_net

logger = logging.getLogger(__name__)

# generator streams derived from (seed, stream, ...)
_DROP_STREAM = 0
_ACTION_STREAM = 1


@dataclass
class Transition:
    """One logged (features, action, reward, propensity) tuple of a cell."""

    day: int
    cell_id: int
    features: np.ndarray
    action: int
    reward: float
    propensity: float

    def __post_init__(self) -> None:
        if self.action not in (0, 1, 2):
            raise ValueError(f"action must be 0, 1 or 2, got {self.action}")
        if not 0.0 < self.propensity <= 1.0:
            raise ValueError(f"propensity must lie in (0, 1], got {self.propensity}")


@dataclass
class ExperienceLog:
    """Ordered transitions logged by a deployed policy."""

    transitions: List[Transition]
    env_config_hash: str
    seed: int
    feature_count: int

    def __len__(self) -> int:
        return len(self.transitions)

    def arrays(self, feature_count: Optional[int] = None):
        """
        Training arrays of the log.

        Args:
            feature_count: Leading features to keep; the layout is nested
                (own KPIs, then neighbors by distance), so any prefix of
                length 5, 20 or 35 is itself a valid feature vector

        Returns:
            Tuple of (features, actions, rewards, propensities)

        Raises:
            DimensionMismatchError: If more features are requested than logged
        """
        width = self.feature_count if feature_count is None else feature_count
        if width > self.feature_count:
            raise DimensionMismatchError(
                f"log holds {self.feature_count} features, {width} requested"
            )
        features = np.vstack([t.features[:width] for t in self.transitions])
        actions = np.array([t.action for t in self.transitions], dtype=int)
        rewards = np.array([t.reward for t in self.transitions], dtype=float)
        propensities = np.array([t.propensity for t in self.transitions], dtype=float)
        return features, actions, rewards, propensities


@dataclass
class TiltPolicy:
    """Either the deployed rule (with exploration rate) or a greedy Q-network."""

    kind: str
    thresholds: Optional[RuleThresholds] = None
    qnet: Optional[DenseNet] = None
    feature_count: int = 35
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == "rule_based":
            if self.thresholds is None:
                raise ValueError("rule_based policy needs thresholds")
        elif self.kind == "greedy_q":
            if self.qnet is None:
                raise ValueError("greedy_q policy needs a Q-network")
            self.feature_count = self.qnet.n_in
        else:
            raise ValueError(f"Unknown policy kind: '{self.kind}'")

    @classmethod
    def rule_based(cls, thresholds: RuleThresholds, epsilon: float = 0.0) -> "TiltPolicy":
        return cls(kind="rule_based", thresholds=thresholds, epsilon=epsilon)

    @classmethod
    def greedy(cls, qnet: DenseNet) -> "TiltPolicy":
        return cls(kind="greedy_q", qnet=qnet)


@dataclass
class TiltEnvironment:
    """A layout plus everything needed to score and featurize its cells."""

    layout: NetworkLayout
    config: TiltEnvConfig
    neighbors: List[List[int]] = field(init=False)

    def __post_init__(self) -> None:
        self.neighbors = net_model.neighbor_table(self.layout, max(constants.FEATURE_NEIGHBORS.values()))

    @classmethod
    def build(cls, config: TiltEnvConfig, seed: int) -> "TiltEnvironment":
        layout = net_model.build_layout(
            config.n_rings,
            config.isd,
            seed,
            tilt_min=config.tilt_min,
            tilt_max=config.tilt_max,
            initial_tilt_range=config.initial_tilt_range,
            site_rotation=config.site_rotation,
        )
        return cls(layout=layout, config=config)

    @property
    def params(self) -> PropagationParams:
        return self.config.propagation

    def config_hash(self) -> str:
        """Stable digest of the environment (config and initial layout)."""
        payload = {"config": self.config.model_dump(mode="json"), "layout": self.layout.model_dump(mode="json")}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def evaluate(self, tilts: np.ndarray, seed: int, day: int) -> List[net_model.KpiVector]:
        """KPIs of one day; the user drop depends only on (seed, day)."""
        layout = self.layout.with_tilts(tilts)
        _, kpis = net_model.evaluate_network(
            layout,
            self.params,
            self.config.n_users,
            np.random.SeedSequence([seed, _DROP_STREAM, day]),
            self.config.sinr_threshold_db,
        )
        return kpis

    def features(self, kpis: Sequence[net_model.KpiVector], feature_count: int) -> np.ndarray:
        return build_feature_matrix(kpis, self.neighbors, feature_count, self.config)

    def rewards(self, kpis: Sequence[net_model.KpiVector]) -> np.ndarray:
        return reward_vector(
            kpis,
            [nb[: constants.REWARD_NEIGHBORS] for nb in self.neighbors],
            self.config.beta,
            self.config.mu,
            self.config.cap_norm,
        )


# ---------------------------
# Features and reward
# ---------------------------

def _check_feature_count(feature_count: int) -> int:
    if feature_count not in constants.FEATURE_COUNTS:
        raise ValueError(
            f"Unsupported feature_count: {feature_count}. Supported: {list(constants.FEATURE_COUNTS)}"
        )
    return constants.FEATURE_NEIGHBORS[feature_count]


def _scaled_kpis(kpis: Sequence[net_model.KpiVector], config: TiltEnvConfig) -> np.ndarray:
    offsets, scales = config.feature_scaling.offsets_and_scales()
    return (net_model.kpi_matrix(kpis) - np.array(offsets)) / np.array(scales)


def build_feature_matrix(
    kpis: Sequence[net_model.KpiVector],
    neighbors: List[List[int]],
    feature_count: int,
    config: TiltEnvConfig,
) -> np.ndarray:
    """Feature vectors of all cells as an (n_cells, feature_count) array."""
    n_neighbors = _check_feature_count(feature_count)
    scaled = _scaled_kpis(kpis, config)
    rows = []
    for cell_id, nb in enumerate(neighbors):
        if len(nb) < n_neighbors:
            raise ValueError(
                f"cell {cell_id} has {len(nb)} neighbors, feature_count={feature_count} needs {n_neighbors}"
            )
        blocks = [scaled[cell_id]] + [scaled[n] for n in nb[:n_neighbors]]
        rows.append(np.concatenate(blocks))
    return np.vstack(rows)


def build_features(
    kpis: Sequence[net_model.KpiVector],
    cell_id: int,
    layout: NetworkLayout,
    feature_count: int,
    config: Optional[TiltEnvConfig] = None,
) -> np.ndarray:
    """
    Feature vector of one cell: own KPIs, then the KPIs of the 3 or 6 nearest
    neighbor cells (ascending site distance, then cell_id), each scaled.

    Args:
        kpis: Per-cell KPIs of the current day
        cell_id: Cell to featurize
        layout: Layout used for the neighbor ordering
        feature_count: 5, 20 or 35
        config: Environment config holding the feature scaling (defaults used if None)

    Returns:
        Vector of length feature_count

    Raises:
        ValueError: On an unknown feature_count
    """
    n_neighbors = _check_feature_count(feature_count)
    config = config or TiltEnvConfig()
    neighbors = net_model.neighbor_table(layout, n_neighbors)
    return build_feature_matrix(kpis, neighbors, feature_count, config)[cell_id]


def cell_score(kpi: net_model.KpiVector, beta: float, cap_norm: float = constants.CAPACITY_NORM) -> float:
    return beta * kpi.coverage + (1.0 - beta) * kpi.capacity / cap_norm


def reward(
    kpis_after: Sequence[net_model.KpiVector],
    cell_id: int,
    layout: NetworkLayout,
    beta: float,
    mu: float,
    cap_norm: float = constants.CAPACITY_NORM,
) -> float:
    """
    Weighted sum of the cell's own score and the mean score of its 6 nearest
    neighbors, computed on the KPIs observed after the actions.

    A cell's score is beta * coverage + (1 - beta) * capacity / cap_norm.
    """
    if not (0.0 <= beta <= 1.0 and 0.0 <= mu <= 1.0):
        raise ValueError(f"beta and mu must lie in [0, 1], got beta={beta}, mu={mu}")
    neighbors = net_model.neighbor_table(layout, constants.REWARD_NEIGHBORS)
    return float(reward_vector(kpis_after, neighbors, beta, mu, cap_norm)[cell_id])


def reward_vector(
    kpis: Sequence[net_model.KpiVector],
    neighbors: List[List[int]],
    beta: float,
    mu: float,
    cap_norm: float,
) -> np.ndarray:
    scores = np.array([cell_score(k, beta, cap_norm) for k in kpis])
    out = np.empty(len(kpis))
    for cell_id, nb in enumerate(neighbors):
        if nb:
            out[cell_id] = mu * scores[cell_id] + (1.0 - mu) * scores[nb].mean()
        else:
            out[cell_id] = scores[cell_id]
    return out


# ---------------------------
# Policies
# ---------------------------

def rule_action(own: net_model.KpiVector, thresholds: RuleThresholds) -> int:
    """The deterministic rule of the deployed policy."""
    if own.coverage < thresholds.cov_low:
        return constants.ACTION_UPTILT
    if own.coverage > thresholds.cov_high and own.capacity < thresholds.cap_low:
        return constants.ACTION_DOWNTILT
    return constants.ACTION_NOCHANGE


def rule_based_action(
    own: net_model.KpiVector,
    thresholds: RuleThresholds,
    epsilon: float,
    rng: np.random.Generator,
) -> Tuple[int, float]:
    """
    Rule action mixed with a uniform action with probability epsilon.

    Returns:
        Tuple of (action, propensity), where propensity is the probability the
        logging policy gave to the emitted action

    Raises:
        ValueError: If epsilon is outside (0, 1)
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    rule = rule_action(own, thresholds)
    if rng.random() < epsilon:
        action = int(rng.integers(constants.N_ACTIONS))
    else:
        action = rule
    propensity = (1.0 - epsilon) * (action == rule) + epsilon / constants.N_ACTIONS
    return action, propensity


def apply_actions(tilts: np.ndarray, actions: np.ndarray, config: TiltEnvConfig) -> np.ndarray:
    """Uptilt lowers the tilt angle, downtilt raises it; results are clamped."""
    delta = np.where(
        actions == constants.ACTION_UPTILT,
        -config.tilt_step,
        np.where(actions == constants.ACTION_DOWNTILT, config.tilt_step, 0.0),
    )
    return np.clip(tilts + delta, config.tilt_min, config.tilt_max)


def greedy_actions(qnet: DenseNet, features: np.ndarray) -> np.ndarray:
    return np.argmax(forward(qnet, features[:, : qnet.n_in]), axis=1)


def _act(
    env: TiltEnvironment,
    policy: TiltPolicy,
    kpis: Sequence[net_model.KpiVector],
    features: np.ndarray,
    rng: Optional[np.random.Generator],
) -> Tuple[np.ndarray, np.ndarray]:
    if policy.kind == "greedy_q":
        actions = greedy_actions(policy.qnet, features)
        return actions, np.ones(len(actions))

    if rng is None or policy.epsilon == 0.0:
        actions = np.array([rule_action(k, policy.thresholds) for k in kpis], dtype=int)
        return actions, np.ones(len(actions))

    pairs = [rule_based_action(k, policy.thresholds, policy.epsilon, rng) for k in kpis]
    return np.array([a for a, _ in pairs], dtype=int), np.array([p for _, p in pairs])


def generate_log(
    env: TiltEnvironment,
    policy: TiltPolicy,
    n_days: int,
    seed: int,
    feature_count: int = 35,
) -> ExperienceLog:
    """
    Deploy a policy for n_days and log one transition per cell per day.

    On day d every cell observes its features, acts (tilts clamped to the
    bounds), and is rewarded with the KPIs of day d + 1, which come from a
    fresh user drop.

    Args:
        env: Environment holding the initial tilts
        policy: Logging policy (rule_based with epsilon > 0 explores)
        n_days: Number of observed days (n_days - 1 transitions per cell)
        seed: Seed of user drops and exploration
        feature_count: Logged feature length

    Returns:
        ExperienceLog with (n_days - 1) * n_cells transitions

    Raises:
        ValueError: If n_days < 2
    """
    if n_days < 2:
        raise ValueError(f"n_days must be >= 2, got {n_days}")
    _check_feature_count(feature_count)

    rng = np.random.default_rng([seed, _ACTION_STREAM])
    tilts = np.array(env.layout.tilts, dtype=float)
    kpis = env.evaluate(tilts, seed, 0)
    transitions: List[Transition] = []

    for day in range(n_days - 1):
        features = env.features(kpis, feature_count)
        actions, propensities = _act(env, policy, kpis, features, rng)
        tilts = apply_actions(tilts, actions, env.config)
        kpis = env.evaluate(tilts, seed, day + 1)
        rewards = env.rewards(kpis)
        for cell_id in range(env.layout.n_cells):
            transitions.append(
                Transition(
                    day=day,
                    cell_id=cell_id,
                    features=features[cell_id],
                    action=int(actions[cell_id]),
                    reward=float(rewards[cell_id]),
                    propensity=float(propensities[cell_id]),
                )
            )

    logger.info(f"Logged {len(transitions)} transitions over {n_days} days (seed={seed})")
    return ExperienceLog(
        transitions=transitions,
        env_config_hash=env.config_hash(),
        seed=seed,
        feature_count=feature_count,
    )


def estimate_propensities(log: ExperienceLog) -> ExperienceLog:
    """Replace propensities by the empirical frequency of each logged action."""
    if not log.transitions:
        raise ValueError("cannot estimate propensities of an empty log")
    actions = np.array([t.action for t in log.transitions], dtype=int)
    freq = np.bincount(actions, minlength=constants.N_ACTIONS) / len(actions)
    transitions = [replace(t, propensity=float(freq[t.action])) for t in log.transitions]
    return replace(log, transitions=transitions)


# ---------------------------
# Offline training
# ---------------------------

def unit_weights(propensities: np.ndarray, cap: float) -> np.ndarray:
    return np.ones(len(propensities))


def inverse_propensity_weights(propensities: np.ndarray, cap: float) -> np.ndarray:
    """Capped inverse propensities divided by their batch mean."""
    raw = np.minimum(1.0 / propensities, cap)
    if np.all(raw == raw[0]):
        # equal weights normalize to exactly one
        return np.ones(len(raw))
    return raw / raw.mean()


def _fit_q(
    log: ExperienceLog,
    cfg: TrainConfig,
    seed: int,
    weight_fn: Callable[[np.ndarray, float], np.ndarray],
    stage: str,
    history: Optional[list] = None,
) -> DenseNet:
    if not log.transitions:
        raise ValueError("cannot train on an empty log")
    features, actions, rewards, propensities = log.arrays(cfg.feature_count)

    rng = np.random.default_rng(seed)
    sizes = [cfg.feature_count, *cfg.hidden, constants.N_ACTIONS]
    qnet = init_net(sizes, ["relu"] * len(cfg.hidden) + ["linear"], rng)
    trainer = NetTrainer(qnet, lr=cfg.lr)
    n = len(rewards)

    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x, a, r = features[idx], actions[idx], rewards[idx]
            weights = weight_fn(propensities[idx], cfg.weight_cap)
            rows = np.arange(len(idx))

            # discount zero: the regression target is the logged reward only
            err = forward(qnet, x)[rows, a] - r
            loss = float(np.mean(weights * err ** 2))
            if not math.isfinite(loss):
                raise TrainingDivergedError(stage, step, loss)

            dy = np.zeros((len(idx), constants.N_ACTIONS))
            dy[rows, a] = 2.0 * weights * err / len(idx)
            grads, _ = gradients(qnet, x, dy)
            trainer.step(grads)
            if history is not None:
                history.append([p.copy() for p in qnet.parameters()])
            epoch_loss += loss * len(idx)
            step += 1
        logger.debug(f"{stage} epoch {epoch + 1}/{cfg.epochs}: loss={epoch_loss / n:.6f}")

    logger.info(f"Trained {stage} Q-network on {n} samples ({cfg.feature_count} features)")
    return qnet


def train_dm(log: ExperienceLog, cfg: TrainConfig, seed: int, history: Optional[list] = None) -> DenseNet:
    """
    Fit the shared Q-network by mean squared error between Q(s)[a] and the
    logged reward, touching only the logged action's output.

    Args:
        log: Experience log
        cfg: Training config (feature_count, epochs, batch_size, lr, hidden)
        seed: Seed of initialization and minibatch order
        history: If given, receives a parameter snapshot after every update

    Returns:
        Q-network with three outputs (uptilt, downtilt, nochange)

    Raises:
        ValueError: If the log is empty
        DimensionMismatchError: If the log holds fewer features than requested
    """
    return _fit_q(log, cfg, seed, unit_weights, "DM", history)


def train_propensity_dm(log: ExperienceLog, cfg: TrainConfig, seed: int, history: Optional[list] = None) -> DenseNet:
    """
    Like train_dm, with every squared error weighted by min(1/propensity,
    weight_cap) divided by the batch mean of those weights.

    Raises:
        ValueError: If any propensity is missing, zero or negative
    """
    props = np.array([t.propensity for t in log.transitions], dtype=float)
    if props.size and (not np.all(np.isfinite(props)) or np.any(props <= 0)):
        raise ValueError("propensity-DM needs strictly positive propensities for every transition")
    return _fit_q(log, cfg, seed, inverse_propensity_weights, "propensity-DM", history)


def argmax_accuracy(qnet: DenseNet, states: np.ndarray, reward_fn: Callable[[np.ndarray], np.ndarray]) -> float:
    """Fraction of states where the greedy action matches argmax of the true reward table."""
    truth = np.argmax(reward_fn(states), axis=1)
    return float(np.mean(greedy_actions(qnet, states) == truth))


# ---------------------------
# Evaluation
# ---------------------------

@dataclass(frozen=True)
class PolicyEvaluation:
    mean_reward: float
    baseline_mean_reward: float
    gain_pct: float


def gain_pct(mean_policy: float, mean_baseline: float) -> float:
    """100 * (policy - baseline) / |baseline|; signed infinity on a zero baseline."""
    if mean_baseline == 0.0:
        return 0.0 if mean_policy == 0.0 else math.copysign(math.inf, mean_policy)
    return 100.0 * (mean_policy - mean_baseline) / abs(mean_baseline)


def rollout(env: TiltEnvironment, policy: TiltPolicy, n_days: int, seed: int) -> float:
    """Mean reward over cells and days of a greedy (non-exploring) deployment."""
    if n_days < 2:
        raise ValueError(f"n_days must be >= 2, got {n_days}")
    feature_count = policy.feature_count if policy.kind == "greedy_q" else constants.FEATURE_COUNTS[0]
    tilts = np.array(env.layout.tilts, dtype=float)
    kpis = env.evaluate(tilts, seed, 0)
    total = 0.0
    for day in range(n_days - 1):
        features = env.features(kpis, feature_count)
        actions, _ = _act(env, policy, kpis, features, None)
        tilts = apply_actions(tilts, actions, env.config)
        kpis = env.evaluate(tilts, seed, day + 1)
        total += float(env.rewards(kpis).mean())
    return total / (n_days - 1)


def evaluate_policy(
    env: TiltEnvironment,
    policy: TiltPolicy,
    n_days: int,
    n_seeds: int,
    baseline: Optional[TiltPolicy] = None,
    seeds: Optional[Sequence[int]] = None,
) -> PolicyEvaluation:
    """
    Roll the policy and the rule-based baseline forward from the same initial
    tilts on the same user drops and compare their mean rewards.

    Args:
        env: Environment (initial tilts included)
        policy: Policy to evaluate (acts greedily)
        n_days: Days per rollout
        n_seeds: Number of rollouts
        baseline: Reference policy; default-threshold rule without exploration if None
        seeds: Rollout seeds; n_seeds evaluation drops from EVAL_SEED_BASE if None

    Returns:
        PolicyEvaluation with gain_pct = 100 * (policy - baseline) / |baseline|
    """
    if seeds is None:
        seeds = [constants.EVAL_SEED_BASE + i for i in range(n_seeds)]
    seeds = list(seeds)[:n_seeds]
    baseline = baseline or TiltPolicy.rule_based(RuleThresholds())
    mean_policy = float(np.mean([rollout(env, policy, n_days, s) for s in seeds]))
    mean_baseline = float(np.mean([rollout(env, baseline, n_days, s) for s in seeds]))
    return PolicyEvaluation(
        mean_reward=mean_policy,
        baseline_mean_reward=mean_baseline,
        gain_pct=gain_pct(mean_policy, mean_baseline),
    )
