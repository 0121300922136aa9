"""
Tilt experiment: log a rule-based deployment, train DM and propensity-DM
Q-networks on it, and compare their greedy policies with the rule.
"""
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ranlab.core import constants
from ranlab.core.decorators import timed_stage
from ranlab.reporting.csv_writer import write_csv
from ranlab.reporting.plots import plot_gain_bars
from ranlab.reporting.records import write_experience_log
from ranlab.schemas.experiment import ExperimentConfig
from ranlab.services.neural import save_checkpoint
from ranlab.services.tilt import (
    TiltEnvironment,
    TiltPolicy,
    gain_pct,
    generate_log,
    rollout,
    train_dm,
    train_propensity_dm,
)
from ranlab.workers import SeedOutcome

logger = logging.getLogger(__name__)

SEED_HEADER = ["seed", "policy", "feature_count", "mean_reward", "gain_pct"]
AGGREGATE_HEADER = ["policy", "feature_count", "mean_reward", "gain_pct", "n_seeds"]

_TRAINERS = {"dm": train_dm, "propensity_dm": train_propensity_dm}


def evaluation_seeds(seed: int, n: int) -> List[int]:
    return [constants.EVAL_SEED_BASE + seed * n + i for i in range(n)]


@timed_stage("tilt seed")
def run_seed(seed: int, config: ExperimentConfig, run_dir: str) -> SeedOutcome:
    """
    Full tilt pipeline for one seed.

    Writes the experience log, one checkpoint per (scheme, feature count) and
    a summary CSV under run_dir/seed_<seed>/.
    """
    cfg = config.tilt
    seed_dir = Path(run_dir) / f"seed_{seed}"
    outcome = SeedOutcome(seed=seed)

    env = TiltEnvironment.build(cfg.env, seed)
    logging_policy = TiltPolicy.rule_based(cfg.thresholds, epsilon=cfg.train.epsilon)
    log = generate_log(env, logging_policy, cfg.log_days, seed, feature_count=max(cfg.feature_counts))
    write_experience_log(log, seed_dir / "experience_log.jsonl")
    outcome.files.append(f"seed_{seed}/experience_log.jsonl")

    eval_seeds = evaluation_seeds(seed, cfg.eval_seeds)
    baseline = TiltPolicy.rule_based(cfg.thresholds)
    baseline_mean = float(np.mean([rollout(env, baseline, cfg.eval_days, s) for s in eval_seeds]))
    outcome.rows.append((seed, "rule_based", 5, baseline_mean, 0.0))

    for fc in cfg.feature_counts:
        train_cfg = cfg.train.model_copy(update={"feature_count": fc})
        for scheme in cfg.schemes:
            qnet = _TRAINERS[scheme](log, train_cfg, seed)
            name = f"qnet_{scheme}_{fc}.json"
            save_checkpoint(qnet, seed_dir / name)
            outcome.files.append(f"seed_{seed}/{name}")

            policy = TiltPolicy.greedy(qnet)
            mean = float(np.mean([rollout(env, policy, cfg.eval_days, s) for s in eval_seeds]))
            gain = gain_pct(mean, baseline_mean)
            outcome.rows.append((seed, scheme, fc, mean, gain))
            logger.info(f"Seed {seed} {scheme} ({fc} features): reward={mean:.4f}, gain={gain:+.2f}%")

    write_csv(seed_dir / "summary.csv", SEED_HEADER, outcome.rows)
    outcome.files.append(f"seed_{seed}/summary.csv")
    return outcome


def aggregate_rows(outcomes: Sequence[SeedOutcome]) -> List[tuple]:
    """
    Seed-averaged mean reward per (policy, feature count); gain is taken
    between the seed-averaged means, not averaged over per-seed gains.
    """
    by_key: Dict[Tuple[str, int], List[float]] = {}
    for outcome in outcomes:
        for _, policy, fc, mean, _ in outcome.rows:
            by_key.setdefault((policy, fc), []).append(mean)

    baseline = float(np.mean(by_key[("rule_based", 5)]))
    rows = []
    for (policy, fc), means in by_key.items():
        mean = float(np.mean(means))
        rows.append((policy, fc, mean, gain_pct(mean, baseline), len(means)))
    return rows


@timed_stage("tilt aggregation")
def write_aggregates(outcomes: Sequence[SeedOutcome], run_dir: str) -> List[str]:
    rows = aggregate_rows(outcomes)
    write_csv(Path(run_dir) / "gain_table.csv", AGGREGATE_HEADER, rows)
    gains = {(policy, fc): gain for policy, fc, _, gain, _ in rows if policy != "rule_based"}
    plot_gain_bars(gains, Path(run_dir) / "gain.svg")
    return ["gain_table.csv", "gain.svg"]
