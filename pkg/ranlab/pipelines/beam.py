"""
Beamforming experiment: CTDE training across alpha on one random channel per
seed, with the oracle Pareto boundary and an optional no-PAE ablation.
"""
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ranlab.core.decorators import timed_stage
from ranlab.reporting.csv_writer import write_csv
from ranlab.reporting.plots import plot_rate_region
from ranlab.schemas.experiment import ExperimentConfig
from ranlab.services.beamforming import oracle_weighted_max, pareto_oracle, random_channel, train_ctde
from ranlab.workers import SeedOutcome

logger = logging.getLogger(__name__)

TRACE_HEADER = ["alpha", "step", "r1", "r2", "pae_flag", "seed"]
BOUNDARY_HEADER = ["lambda1", "lambda2", "r1", "r2"]
SEED_HEADER = ["seed", "alpha", "pae_flag", "r1", "r2", "weighted_rate", "oracle_weighted_rate", "deficit"]
AGGREGATE_HEADER = ["alpha", "pae_flag", "r1", "r2", "weighted_rate", "oracle_weighted_rate", "deficit", "n_seeds"]


def training_runs(alphas: Sequence[float], alpha: float, pae_ablation: bool) -> List[Tuple[float, bool]]:
    """(alpha, with_pae) pairs to train: every alpha with PAE, plus alpha without."""
    runs = [(float(a), True) for a in alphas]
    if pae_ablation:
        if (float(alpha), True) not in runs:
            runs.append((float(alpha), True))
        runs.append((float(alpha), False))
    return runs


@timed_stage("beam seed")
def run_seed(seed: int, config: ExperimentConfig, run_dir: str) -> SeedOutcome:
    """
    Full beamforming pipeline for one seed.

    Writes trace.csv, boundary.csv and summary.csv under run_dir/seed_<seed>/.
    """
    cfg = config.beam
    seed_dir = Path(run_dir) / f"seed_{seed}"
    outcome = SeedOutcome(seed=seed)

    ch = random_channel(cfg.n_antennas, cfg.snr_db, seed)
    boundary = pareto_oracle(ch, cfg.grid_n)
    write_csv(
        seed_dir / "boundary.csv",
        BOUNDARY_HEADER,
        [(p.lambda1, p.lambda2, p.rates.r1, p.rates.r2) for p in boundary],
    )

    trace_rows = []
    trajectories: Dict[str, List[Tuple[float, float]]] = {}
    for alpha, with_pae in training_runs(cfg.alphas, cfg.alpha, cfg.pae_ablation):
        run_cfg = cfg.model_copy(update={"alpha": alpha, "seed": seed})
        result = train_ctde(ch, run_cfg, with_pae=with_pae)
        trace_rows.extend((alpha, t.step, t.r1, t.r2, with_pae, seed) for t in result.trace)
        label = f"alpha={alpha:g}" + ("" if with_pae else " no PAE")
        trajectories[label] = [(t.r1, t.r2) for t in result.trace]

        weighted = result.final.weighted(alpha)
        best = oracle_weighted_max(boundary, alpha)
        outcome.rows.append((seed, alpha, with_pae, result.final.r1, result.final.r2, weighted, best, best - weighted))
        logger.info(f"Seed {seed} {label}: r=({result.final.r1:.3f}, {result.final.r2:.3f}), deficit={best - weighted:.4f}")

    write_csv(seed_dir / "trace.csv", TRACE_HEADER, trace_rows)
    write_csv(seed_dir / "summary.csv", SEED_HEADER, outcome.rows)
    outcome.files += [f"seed_{seed}/boundary.csv", f"seed_{seed}/trace.csv", f"seed_{seed}/summary.csv"]
    outcome.extras = {
        "boundary": [(p.rates.r1, p.rates.r2) for p in boundary],
        "trajectories": trajectories,
    }
    return outcome


def aggregate_rows(outcomes: Sequence[SeedOutcome]) -> List[tuple]:
    """Seed means of final rates and deficits per (alpha, pae_flag)."""
    by_key: Dict[Tuple[float, bool], List[tuple]] = {}
    for outcome in outcomes:
        for row in outcome.rows:
            by_key.setdefault((row[1], row[2]), []).append(row[3:])

    rows = []
    for (alpha, with_pae), values in by_key.items():
        means = np.mean(np.array(values, dtype=float), axis=0)
        rows.append((alpha, with_pae, *(float(v) for v in means), len(values)))
    return rows


@timed_stage("beam aggregation")
def write_aggregates(outcomes: Sequence[SeedOutcome], run_dir: str) -> List[str]:
    write_csv(Path(run_dir) / "final_rates.csv", AGGREGATE_HEADER, aggregate_rows(outcomes))
    # one channel per seed, so the figure shows the lowest seed only
    first = outcomes[0]
    plot_rate_region(first.extras["boundary"], first.extras["trajectories"], Path(run_dir) / "rate_region.svg")
    return ["final_rates.csv", "rate_region.svg"]
