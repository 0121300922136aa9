"""
Autoencoder-based CSI compression.

The UE-side encoder maps a channel vector H (2 n_tx reals) to a latent of
latent_dim values which are quantized to B bits each; only the integer codes
cross the air interface. The BS-side decoder reconstructs H from the codes.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ranlab.core import constants
from ranlab.core.exceptions import DimensionMismatchError, TrainingDivergedError
from ranlab.schemas.experiment import AutoencoderConfig
from ranlab.services.neural import (
    DenseNet,
    NetTrainer,
    UniformQuantizer,
    dequantize,
    forward,
    gradients,
    init_net,
    quantize,
    straight_through,
)

logger = logging.getLogger(__name__)

_SPLIT_STREAM = 0
_TRAIN_STREAM = 1


@dataclass(frozen=True)
class CsiSample:
    sample_id: int
    H: np.ndarray


@dataclass(frozen=True)
class ReconMetrics:
    nmse_db: float
    cosine_similarity: float


@dataclass
class Autoencoder:
    """Encoder and decoder are separate networks joined only by the codes."""

    encoder: DenseNet
    quantizer: UniformQuantizer
    decoder: DenseNet

    def __post_init__(self) -> None:
        if self.encoder.n_out != self.decoder.n_in:
            raise DimensionMismatchError(
                f"encoder emits {self.encoder.n_out} latents, decoder expects {self.decoder.n_in}"
            )
        if self.encoder.n_in != self.decoder.n_out:
            raise DimensionMismatchError("encoder input and decoder output sizes differ")

    @property
    def latent_dim(self) -> int:
        return self.encoder.n_out

    @property
    def n_tx(self) -> int:
        return self.encoder.n_in // 2

    @property
    def feedback_bits(self) -> int:
        return self.latent_dim * self.quantizer.bits


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    nmse_db: float
    cosine_similarity: float


@dataclass
class TrainedAutoencoder:
    autoencoder: Autoencoder
    history: List[EpochMetrics] = field(default_factory=list)
    validation_ids: List[int] = field(default_factory=list)


# ---------------------------
# Channel model
# ---------------------------

def steering_vector(theta: float, n_tx: int) -> np.ndarray:
    """Half-wavelength uniform-linear-array response toward angle theta (radians)."""
    return np.exp(1j * np.pi * np.arange(n_tx) * np.sin(theta))


def sample_channels(n: int, n_tx: int, n_paths: int, seed) -> List[CsiSample]:
    """
    Few-path geometric channels H = sum_p g_p a(theta_p), g_p ~ CN(0, 1),
    theta_p ~ U(-pi/2, pi/2), scaled so the dataset's mean power per entry is 1.

    Raises:
        ValueError: If n, n_tx or n_paths is smaller than 1
    """
    if n < 1 or n_tx < 1 or n_paths < 1:
        raise ValueError(f"n, n_tx and n_paths must be >= 1, got {n}, {n_tx}, {n_paths}")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-np.pi / 2, np.pi / 2, size=(n, n_paths))
    gains = (rng.standard_normal((n, n_paths)) + 1j * rng.standard_normal((n, n_paths))) / math.sqrt(2.0)
    steering = np.exp(1j * np.pi * np.arange(n_tx)[None, None, :] * np.sin(theta)[:, :, None])
    H = np.einsum("np,npm->nm", gains, steering)
    H /= math.sqrt(np.mean(np.abs(H) ** 2))
    return [CsiSample(sample_id=i, H=H[i]) for i in range(n)]


def to_real(H: np.ndarray) -> np.ndarray:
    """Complex (..., n_tx) to real (..., 2 n_tx) as [Re, Im]."""
    return np.concatenate([H.real, H.imag], axis=-1)


def to_complex(x: np.ndarray) -> np.ndarray:
    half = x.shape[-1] // 2
    return x[..., :half] + 1j * x[..., half:]


def as_matrix(dataset: Sequence[CsiSample]) -> np.ndarray:
    return np.vstack([s.H for s in dataset])


def split_dataset(dataset: Sequence[CsiSample], seed: int) -> Tuple[List[CsiSample], List[CsiSample]]:
    """Deterministic 90/10 train/validation split."""
    order = np.random.default_rng([int(seed), _SPLIT_STREAM]).permutation(len(dataset))
    n_train = max(1, int(round(constants.CSI_TRAIN_FRACTION * len(dataset))))
    if len(dataset) > 1:
        n_train = min(n_train, len(dataset) - 1)
    train = [dataset[i] for i in order[:n_train]]
    val = [dataset[i] for i in order[n_train:]] or train
    return train, val


# ---------------------------
# Metrics
# ---------------------------

def metrics(H: np.ndarray, H_hat: np.ndarray) -> ReconMetrics:
    """
    NMSE (dB, floored at -100) and mean cosine similarity |H^H H_hat| / (||H|| ||H_hat||).

    Rows are samples; a zero-norm reconstruction counts as cosine 0.
    """
    H = np.atleast_2d(H)
    H_hat = np.atleast_2d(H_hat)
    if H.shape != H_hat.shape:
        raise DimensionMismatchError(f"shapes differ: {H.shape} vs {H_hat.shape}")
    err = np.sum(np.abs(H - H_hat) ** 2)
    power = np.sum(np.abs(H) ** 2)
    ratio = err / power if power > 0 else 0.0
    nmse_db = constants.NMSE_FLOOR_DB if ratio <= 0 else max(10.0 * math.log10(ratio), constants.NMSE_FLOOR_DB)

    inner = np.abs(np.sum(H.conj() * H_hat, axis=1))
    denom = np.linalg.norm(H, axis=1) * np.linalg.norm(H_hat, axis=1)
    cos = np.where(denom > 0, inner / np.where(denom > 0, denom, 1.0), 0.0)
    return ReconMetrics(nmse_db=float(nmse_db), cosine_similarity=float(np.clip(cos.mean(), 0.0, 1.0)))


# ---------------------------
# Autoencoder
# ---------------------------

def build_autoencoder(cfg: AutoencoderConfig, rng: np.random.Generator) -> Autoencoder:
    """Encoder 2 n_tx -> hidden -> latent_dim and its mirror as decoder."""
    dim = 2 * cfg.n_tx
    enc_sizes = [dim, *cfg.hidden, cfg.latent_dim]
    dec_sizes = [cfg.latent_dim, *reversed(cfg.hidden), dim]
    encoder = init_net(enc_sizes, [cfg.hidden_activation] * len(cfg.hidden) + [cfg.latent_activation], rng)
    decoder = init_net(dec_sizes, [cfg.hidden_activation] * len(cfg.hidden) + ["linear"], rng)
    quantizer = UniformQuantizer(bits=cfg.bits, lo=cfg.quant_range[0], hi=cfg.quant_range[1])
    return Autoencoder(encoder=encoder, quantizer=quantizer, decoder=decoder)


def _check_h(ae: Autoencoder, H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.shape[-1] != ae.n_tx:
        raise DimensionMismatchError(f"expected channels with {ae.n_tx} entries, got {H.shape[-1]}")
    return H


def encode(ae: Autoencoder, H: np.ndarray) -> np.ndarray:
    """
    UE side: integer codes of one channel (or a batch of channels).

    Returns:
        Codes in [0, 2**B) of length latent_dim (per sample)
    """
    H = _check_h(ae, H)
    codes, _ = quantize(ae.quantizer, forward(ae.encoder, to_real(H)))
    return codes


def decode(ae: Autoencoder, codes) -> np.ndarray:
    """
    BS side: reconstruct H from the received codes only.

    Raises:
        ValueError: If a code lies outside [0, 2**B)
        DimensionMismatchError: If the code length differs from latent_dim
    """
    codes = np.asarray(codes)
    if codes.shape[-1] != ae.latent_dim:
        raise DimensionMismatchError(f"expected {ae.latent_dim} codes, got {codes.shape[-1]}")
    return to_complex(forward(ae.decoder, dequantize(ae.quantizer, codes)))


def reconstruct(ae: Autoencoder, H: np.ndarray) -> np.ndarray:
    return decode(ae, encode(ae, H))


def train_autoencoder(
    dataset: Sequence[CsiSample],
    cfg: AutoencoderConfig,
    epochs: int,
    seed: int,
    encoder: Optional[DenseNet] = None,
    split_seed: Optional[int] = None,
) -> TrainedAutoencoder:
    """
    Minimize the mean squared reconstruction error through the quantized
    bottleneck, using the straight-through estimator for the quantizer.

    Args:
        dataset: Channel samples (split 90/10 into train/validation)
        cfg: Autoencoder architecture and optimizer settings
        epochs: Passes over the training split
        seed: Seed of split, initialization and minibatch order
        encoder: A frozen encoder (e.g. another vendor's); only the decoder is trained
        split_seed: Seed of the train/validation split when it must differ from seed

    Returns:
        TrainedAutoencoder with per-epoch validation metrics

    Raises:
        ValueError: If the dataset is empty
        TrainingDivergedError: If the loss becomes non-finite
    """
    if not dataset:
        raise ValueError("cannot train on an empty dataset")
    train, val = split_dataset(dataset, seed if split_seed is None else split_seed)
    rng = np.random.default_rng([seed, _TRAIN_STREAM])
    ae = build_autoencoder(cfg, rng)
    if encoder is not None:
        if encoder.n_in != 2 * cfg.n_tx or encoder.n_out != cfg.latent_dim:
            raise DimensionMismatchError("frozen encoder does not match the autoencoder config")
        ae = Autoencoder(encoder=encoder, quantizer=ae.quantizer, decoder=ae.decoder)
    enc_trainer = None if encoder is not None else NetTrainer(ae.encoder, lr=cfg.lr)
    dec_trainer = NetTrainer(ae.decoder, lr=cfg.lr)

    X = to_real(as_matrix(train))
    H_val = as_matrix(val)
    result = TrainedAutoencoder(autoencoder=ae, validation_ids=[s.sample_id for s in val])
    n = len(X)
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            x = X[order[start : start + cfg.batch_size]]
            z = forward(ae.encoder, x)
            _, zq = quantize(ae.quantizer, z)
            y = forward(ae.decoder, zq)
            diff = y - x
            loss = float(np.mean(np.sum(diff ** 2, axis=1)))
            if not math.isfinite(loss):
                raise TrainingDivergedError("autoencoder", step, loss)

            dy = 2.0 * diff / len(x)
            dec_grads, dzq = gradients(ae.decoder, zq, dy)
            dec_trainer.step(dec_grads)
            if enc_trainer is not None:
                enc_grads, _ = gradients(ae.encoder, x, straight_through(ae.quantizer, z, dzq))
                enc_trainer.step(enc_grads)
            total += loss * len(x)
            step += 1

        m = metrics(H_val, reconstruct(ae, H_val))
        result.history.append(
            EpochMetrics(epoch=epoch + 1, train_loss=total / n, nmse_db=m.nmse_db, cosine_similarity=m.cosine_similarity)
        )
        logger.debug(f"AE epoch {epoch + 1}/{epochs}: loss={total / n:.5f} nmse={m.nmse_db:.2f} dB")

    last = result.history[-1]
    logger.info(
        f"Trained autoencoder (latent={cfg.latent_dim}, B={cfg.bits}, "
        f"{ae.feedback_bits} bits): nmse={last.nmse_db:.2f} dB, cos={last.cosine_similarity:.4f}"
    )
    return result


# ---------------------------
# Linear baseline
# ---------------------------

@dataclass
class LinearCodec:
    """Truncated principal-component projection with per-component scaling."""

    mean: np.ndarray
    basis: np.ndarray
    scale: np.ndarray
    quantizer: Optional[UniformQuantizer]

    def reconstruct(self, H: np.ndarray) -> np.ndarray:
        x = to_real(np.atleast_2d(H)) - self.mean
        if self.basis.shape[0] == 0:
            return np.zeros_like(np.atleast_2d(H))
        coeffs = (x @ self.basis.T) / self.scale
        _, coeffs = quantize(self.quantizer, coeffs)
        return to_complex(self.mean + (coeffs * self.scale) @ self.basis)


def fit_linear_codec(train: Sequence[CsiSample], latent_dim: int, bits: int, margin: float = 1.5) -> LinearCodec:
    """
    Principal directions of the training split; coefficients are divided by
    margin * their largest training magnitude before a [-1, 1] quantizer.
    """
    X = to_real(as_matrix(train))
    if not 0 <= latent_dim <= X.shape[1]:
        raise ValueError(f"latent_dim must lie in [0, {X.shape[1]}], got {latent_dim}")
    mean = X.mean(axis=0)
    _, _, vt = np.linalg.svd(X - mean, full_matrices=False)
    basis = vt[:latent_dim]
    coeffs = (X - mean) @ basis.T
    scale = margin * np.max(np.abs(coeffs), axis=0) if latent_dim else np.ones(0)
    scale = np.where(scale > 0, scale, 1.0)
    quantizer = UniformQuantizer(bits=bits) if latent_dim else None
    return LinearCodec(mean=mean, basis=basis, scale=scale, quantizer=quantizer)


def linear_baseline(dataset: Sequence[CsiSample], latent_dim: int, bits: int, seed: int = 0) -> ReconMetrics:
    """
    Fixed-budget linear reference: PCA on the training split, B-bit
    coefficients, metrics on the held-out split (same split as the autoencoder).

    Raises:
        ValueError: If latent_dim lies outside [0, 2 n_tx]
    """
    train, val = split_dataset(dataset, seed)
    n_dim = 2 * len(train[0].H)
    if latent_dim == 0:
        H_val = as_matrix(val)
        return metrics(H_val, np.zeros_like(H_val))
    if not 0 <= latent_dim <= n_dim:
        raise ValueError(f"latent_dim must lie in [0, {n_dim}], got {latent_dim}")
    codec = fit_linear_codec(train, latent_dim, bits)
    H_val = as_matrix(val)
    return metrics(H_val, codec.reconstruct(H_val))
