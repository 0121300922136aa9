"""
CSI experiment: autoencoder rate-distortion against the linear baseline.
"""
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ranlab.core.decorators import timed_stage
from ranlab.reporting.csv_writer import write_csv
from ranlab.reporting.plots import plot_rate_distortion
from ranlab.reporting.records import write_feedback
from ranlab.schemas.experiment import ExperimentConfig
from ranlab.services.csi import as_matrix, encode, linear_baseline, sample_channels, train_autoencoder
from ranlab.services.neural import save_checkpoint
from ranlab.workers import SeedOutcome

logger = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "nmse_db", "cosine"]
SEED_HEADER = [
    "seed",
    "latent_dim",
    "bits",
    "feedback_bits",
    "ae_nmse_db",
    "ae_cosine",
    "baseline_nmse_db",
    "baseline_cosine",
]
AGGREGATE_HEADER = SEED_HEADER[1:] + ["n_seeds"]


@timed_stage("csi seed")
def run_seed(seed: int, config: ExperimentConfig, run_dir: str) -> SeedOutcome:
    """
    Full CSI pipeline for one seed.

    Per latent size, writes per-epoch validation metrics, the encoder and
    decoder checkpoints and the validation feedback codes under
    run_dir/seed_<seed>/.
    """
    cfg = config.csi
    seed_dir = Path(run_dir) / f"seed_{seed}"
    outcome = SeedOutcome(seed=seed)

    dataset = sample_channels(cfg.n_samples, cfg.autoencoder.n_tx, cfg.n_paths, seed)
    by_id = {s.sample_id: s for s in dataset}

    for latent_dim in cfg.latent_dims:
        ae_cfg = cfg.autoencoder.model_copy(update={"latent_dim": latent_dim})
        trained = train_autoencoder(dataset, ae_cfg, cfg.epochs, seed)
        ae = trained.autoencoder
        tag = f"d{latent_dim}"

        write_csv(
            seed_dir / f"metrics_{tag}.csv",
            METRICS_HEADER,
            [(m.epoch, m.nmse_db, m.cosine_similarity) for m in trained.history],
        )
        save_checkpoint(ae.encoder, seed_dir / f"encoder_{tag}.json")
        save_checkpoint(ae.decoder, seed_dir / f"decoder_{tag}.json")

        val_ids = trained.validation_ids
        codes = encode(ae, as_matrix([by_id[i] for i in val_ids]))
        write_feedback(zip(val_ids, codes), seed_dir / f"feedback_{tag}.jsonl")
        outcome.files += [
            f"seed_{seed}/{name}"
            for name in (f"metrics_{tag}.csv", f"encoder_{tag}.json", f"decoder_{tag}.json", f"feedback_{tag}.jsonl")
        ]

        last = trained.history[-1]
        base = linear_baseline(dataset, latent_dim, ae_cfg.bits, seed)
        outcome.rows.append(
            (
                seed,
                latent_dim,
                ae_cfg.bits,
                ae.feedback_bits,
                last.nmse_db,
                last.cosine_similarity,
                base.nmse_db,
                base.cosine_similarity,
            )
        )
        logger.info(
            f"Seed {seed} latent={latent_dim}: autoencoder {last.nmse_db:.2f} dB, linear {base.nmse_db:.2f} dB"
        )

    write_csv(seed_dir / "summary.csv", SEED_HEADER, outcome.rows)
    outcome.files.append(f"seed_{seed}/summary.csv")
    return outcome


def aggregate_rows(outcomes: Sequence[SeedOutcome]) -> List[tuple]:
    """Seed means per latent size, ordered by feedback bits."""
    by_key: Dict[Tuple[int, int, int], List[tuple]] = {}
    for outcome in outcomes:
        for row in outcome.rows:
            by_key.setdefault(tuple(row[1:4]), []).append(row[4:])

    rows = []
    for key in sorted(by_key, key=lambda k: k[2]):
        means = np.mean(np.array(by_key[key], dtype=float), axis=0)
        rows.append((*key, *(float(v) for v in means), len(by_key[key])))
    return rows


@timed_stage("csi aggregation")
def write_aggregates(outcomes: Sequence[SeedOutcome], run_dir: str) -> List[str]:
    rows = aggregate_rows(outcomes)
    write_csv(Path(run_dir) / "rate_distortion.csv", AGGREGATE_HEADER, rows)
    curves = {
        "autoencoder": [(r[2], r[3]) for r in rows],
        "linear baseline": [(r[2], r[5]) for r in rows],
    }
    plot_rate_distortion(curves, Path(run_dir) / "rate_distortion.svg")
    return ["rate_distortion.csv", "rate_distortion.svg"]
