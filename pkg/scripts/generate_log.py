#!/usr/bin/env python3
"""
Generate a tilt experience log from an experiment config, without training.
"""
import argparse
import logging
import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ranlab.core.exceptions import ConfigError
from ranlab.pipelines.configuration import load_config
from ranlab.reporting.records import write_experience_log
from ranlab.services.tilt import TiltEnvironment, TiltPolicy, generate_log

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)


def main(config_path: str, seed: int, output: str, days: int = None, epsilon: float = None) -> int:
    """
    Deploy the configured rule-based logging policy and write its log.

    Args:
        config_path: Experiment config (its tilt section is used)
        seed: Environment and exploration seed
        output: JSON Lines output path
        days: Overrides tilt.log_days
        epsilon: Overrides tilt.train.epsilon

    Returns:
        Process exit code
    """
    overrides = []
    if days is not None:
        overrides.append(f"tilt.log_days={days}")
    if epsilon is not None:
        overrides.append(f"tilt.train.epsilon={epsilon}")
    try:
        cfg, _ = load_config(config_path, overrides)
    except ConfigError as e:
        logger.error(f"Config error at '{e.key}': {e.message}")
        return 2

    tilt = cfg.tilt
    env = TiltEnvironment.build(tilt.env, seed)
    policy = TiltPolicy.rule_based(tilt.thresholds, epsilon=tilt.train.epsilon)
    log = generate_log(env, policy, tilt.log_days, seed, feature_count=max(tilt.feature_counts))
    write_experience_log(log, output)
    logger.info(f"✓ {len(log)} transitions over {tilt.log_days} days on {env.layout.n_cells} cells")
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Generate a tilt experience log")
    parser.add_argument("config", type=str, help="Path to the JSON experiment config")
    parser.add_argument("--seed", type=int, default=0, help="Environment seed")
    parser.add_argument("--output", type=str, default="experience_log.jsonl", help="Output JSONL path")
    parser.add_argument("--days", type=int, help="Override the number of logged days")
    parser.add_argument("--epsilon", type=float, help="Override the exploration rate")

    args = parser.parse_args()
    sys.exit(main(args.config, args.seed, args.output, args.days, args.epsilon))
