#!/usr/bin/env python3
"""
Multi-vendor CSI feedback recipe.

Vendor A ships a UE-side encoder; vendor B builds the BS-side decoder. The
script compares four pairings on the same held-out channels:

    A/A          encoder and decoder trained together by vendor A
    B/B          vendor B's own jointly trained pair
    A enc/B dec  B's decoder fed A's codes as-is
    A enc/B dec* B's decoder retrained against A's frozen encoder
"""
import argparse
import logging
import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ranlab.reporting.csv_writer import write_csv
from ranlab.schemas.experiment import AutoencoderConfig
from ranlab.services.csi import Autoencoder, as_matrix, metrics, reconstruct, sample_channels, train_autoencoder

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)


def vendor_mismatch(
    n_samples: int,
    latent_dim: int,
    bits: int,
    epochs: int,
    seed_a: int,
    seed_b: int,
    output: str = None,
) -> list:
    """
    Train both vendors and evaluate every pairing.

    Args:
        n_samples: Channels in the shared dataset
        latent_dim: Latent values per report
        bits: Bits per latent value
        epochs: Training epochs for every model
        seed_a: Vendor A training seed
        seed_b: Vendor B training seed
        output: Optional CSV path for the results

    Returns:
        Rows of (pairing, nmse_db, cosine)
    """
    cfg = AutoencoderConfig(latent_dim=latent_dim, bits=bits)
    dataset = sample_channels(n_samples, cfg.n_tx, 3, seed_a)

    # all models train on vendor A's training split and are scored on its held-out split
    vendor_a = train_autoencoder(dataset, cfg, epochs, seed_a)
    vendor_b = train_autoencoder(dataset, cfg, epochs, seed_b, split_seed=seed_a)
    adapted = train_autoencoder(
        dataset, cfg, epochs, seed_b, encoder=vendor_a.autoencoder.encoder, split_seed=seed_a
    )

    by_id = {s.sample_id: s for s in dataset}
    H_val = as_matrix([by_id[i] for i in vendor_a.validation_ids])

    a_ae, b_ae = vendor_a.autoencoder, vendor_b.autoencoder
    pairings = {
        "A/A": a_ae,
        "B/B": b_ae,
        "A enc/B dec": Autoencoder(encoder=a_ae.encoder, quantizer=a_ae.quantizer, decoder=b_ae.decoder),
        "A enc/B dec retrained": adapted.autoencoder,
    }

    rows = []
    for name, ae in pairings.items():
        m = metrics(H_val, reconstruct(ae, H_val))
        rows.append((name, m.nmse_db, m.cosine_similarity))
        logger.info(f"{name:24s} nmse={m.nmse_db:7.2f} dB  cos={m.cosine_similarity:.4f}")

    if output:
        write_csv(output, ["pairing", "nmse_db", "cosine"], rows)
        logger.info(f"✓ Wrote {output}")
    return rows


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Compare CSI encoder/decoder pairings across vendors")
    parser.add_argument("--samples", type=int, default=5000, help="Channels in the dataset")
    parser.add_argument("--latent-dim", type=int, default=8, help="Latent values per report")
    parser.add_argument("--bits", type=int, default=4, help="Bits per latent value")
    parser.add_argument("--epochs", type=int, default=40, help="Training epochs per model")
    parser.add_argument("--seed-a", type=int, default=1, help="Vendor A seed")
    parser.add_argument("--seed-b", type=int, default=2, help="Vendor B seed")
    parser.add_argument("--output", type=str, help="CSV file for the results")

    args = parser.parse_args()
    vendor_mismatch(args.samples, args.latent_dim, args.bits, args.epochs, args.seed_a, args.seed_b, args.output)
