"""
Two-cell MISO downlink: rates, the MRT/ZF Pareto oracle, phase ambiguity
elimination (PAE) and centralized-critic / decentralized-actor training.

Channels are stored as an array h of shape (2, 2, M) where h[j, k] is the
channel from base station j to user k (0-indexed). Inner products are h^H w.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ranlab.core import constants
from ranlab.core.exceptions import DimensionMismatchError, PowerConstraintError, TrainingDivergedError
from ranlab.schemas.experiment import CtdeConfig
from ranlab.services.neural import DenseNet, NetTrainer, forward, gradients, init_net

logger = logging.getLogger(__name__)

_TRAIN_STREAM = 0
_EVAL_STREAM = 1


@dataclass(frozen=True)
class MisoChannel:
    """Channels of the two-cell interference channel plus noise and power budget."""

    h: np.ndarray
    noise_power: float = 1.0
    power_budget: float = 10.0

    def __post_init__(self) -> None:
        h = np.asarray(self.h, dtype=complex)
        if h.ndim != 3 or h.shape[:2] != (2, 2):
            raise DimensionMismatchError(f"channel must have shape (2, 2, M), got {h.shape}")
        if h.shape[2] < 2:
            raise ValueError(f"need at least 2 antennas per base station, got {h.shape[2]}")
        if not np.all(np.isfinite(h)):
            raise ValueError("channel entries must be finite")
        if not (self.noise_power > 0 and self.power_budget > 0):
            raise ValueError("noise_power and power_budget must be > 0")
        object.__setattr__(self, "h", h)

    @property
    def M(self) -> int:
        return int(self.h.shape[2])

    def with_h(self, h: np.ndarray) -> "MisoChannel":
        return MisoChannel(h=h, noise_power=self.noise_power, power_budget=self.power_budget)

    def single_user_capacity(self, k: int) -> float:
        """log2(1 + P ||h_kk||^2 / noise): rate of user k with the other BS silent."""
        gain = float(np.vdot(self.h[k, k], self.h[k, k]).real)
        return math.log2(1.0 + self.power_budget * gain / self.noise_power)


@dataclass(frozen=True)
class BeamformerSet:
    """Beams w[0], w[1] as an array of shape (2, M)."""

    w: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "w", np.asarray(self.w, dtype=complex))


@dataclass(frozen=True)
class RatePair:
    r1: float
    r2: float

    def weighted(self, alpha: float) -> float:
        return alpha * self.r1 + (1.0 - alpha) * self.r2


@dataclass(frozen=True)
class OraclePoint:
    """A boundary point; a NaN lambda marks a silent base station."""

    lambda1: float
    lambda2: float
    rates: RatePair


def random_channel(n_antennas: int, snr_db: float, seed) -> MisoChannel:
    """I.i.d. CN(0, 1) channel entries, unit noise and P = 10^(snr_db / 10)."""
    rng = np.random.default_rng(seed)
    shape = (2, 2, n_antennas)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    return MisoChannel(h=h, noise_power=1.0, power_budget=10.0 ** (snr_db / 10.0))


# ---------------------------
# Rates
# ---------------------------

def rates_batch(ch: MisoChannel, w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """
    Rates of many beam pairs.

    Args:
        ch: Channel
        w1: (n, M) beams of BS 1
        w2: (n, M) beams of BS 2

    Returns:
        (n, 2) array of (r1, r2)
    """
    h = ch.h
    gain = lambda hv, w: np.abs(w @ hv.conj()) ** 2  # noqa: E731
    s1, s2 = gain(h[0, 0], w1), gain(h[1, 1], w2)
    i1, i2 = gain(h[1, 0], w2), gain(h[0, 1], w1)
    r1 = np.log2(1.0 + s1 / (ch.noise_power + i1))
    r2 = np.log2(1.0 + s2 / (ch.noise_power + i2))
    return np.column_stack([r1, r2])


def rates(ch: MisoChannel, bf: BeamformerSet) -> RatePair:
    """
    Achieved rates r_k = log2(1 + |h_kk^H w_k|^2 / (noise + |h_jk^H w_j|^2)).

    Raises:
        PowerConstraintError: If a beam exceeds the power budget
        DimensionMismatchError: If the beams do not have shape (2, M)
    """
    if bf.w.shape != (2, ch.M):
        raise DimensionMismatchError(f"beams must have shape (2, {ch.M}), got {bf.w.shape}")
    power = np.sum(np.abs(bf.w) ** 2, axis=1)
    for j, pj in enumerate(power):
        if pj > ch.power_budget + constants.POWER_TOLERANCE:
            raise PowerConstraintError(
                f"beam of BS {j + 1} uses power {pj:.6g} > budget {ch.power_budget:.6g}"
            )
    r = rates_batch(ch, bf.w[0][None, :], bf.w[1][None, :])[0]
    return RatePair(float(r[0]), float(r[1]))


# ---------------------------
# Reference beams and the Pareto oracle
# ---------------------------

def mrt(h_own: np.ndarray, P: float) -> np.ndarray:
    """Maximum-ratio transmission sqrt(P) h / ||h||."""
    h_own = np.asarray(h_own, dtype=complex)
    norm = np.linalg.norm(h_own)
    if norm == 0:
        raise ValueError("mrt needs a nonzero own channel")
    return math.sqrt(P) * h_own / norm


def zf(h_own: np.ndarray, h_cross: np.ndarray, P: float) -> np.ndarray:
    """
    Zero-forcing beam: the own channel projected orthogonally to the cross
    channel, scaled to full power. Parallel channels give the zero vector.
    """
    h_own = np.asarray(h_own, dtype=complex)
    h_cross = np.asarray(h_cross, dtype=complex)
    if np.linalg.norm(h_own) == 0:
        raise ValueError("zf needs a nonzero own channel")
    cross_norm2 = float(np.vdot(h_cross, h_cross).real)
    if cross_norm2 == 0:
        raise ValueError("zf needs a nonzero cross channel")
    projected = h_own - h_cross * (np.vdot(h_cross, h_own) / cross_norm2)
    norm = np.linalg.norm(projected)
    if norm <= 1e-12 * np.linalg.norm(h_own):
        return np.zeros_like(h_own)
    return math.sqrt(P) * projected / norm


def pareto_filter(points: np.ndarray) -> np.ndarray:
    """
    Indices of the non-dominated rows of an (n, 2) array, ordered by
    ascending r1 (hence non-increasing r2). Duplicates are kept once.
    """
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        return np.array([], dtype=int)
    order = np.lexsort((-points[:, 1], -points[:, 0]))
    keep = []
    best_r2 = -np.inf
    for idx in order:
        if points[idx, 1] > best_r2:
            keep.append(idx)
            best_r2 = points[idx, 1]
    return np.array(keep[::-1], dtype=int)


def _random_beams(n: int, M: int, P: float, rng: np.random.Generator) -> np.ndarray:
    d = rng.standard_normal((n, M)) + 1j * rng.standard_normal((n, M))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    # half the draws at full power, half with a uniform power fraction
    power = np.where(rng.random(n) < 0.5, 1.0, rng.random(n))
    return d * np.sqrt(power * P)[:, None]


def sample_rate_region(
    ch: MisoChannel,
    n_samples: int,
    rng: np.random.Generator,
    chunk: int = 100_000,
) -> np.ndarray:
    """
    Brute-force Pareto boundary from random beam pairs.

    Returns:
        (n_boundary, 2) non-dominated rate pairs among the samples
    """
    frontier = np.empty((0, 2))
    remaining = n_samples
    while remaining > 0:
        n = min(chunk, remaining)
        w1 = _random_beams(n, ch.M, ch.power_budget, rng)
        w2 = _random_beams(n, ch.M, ch.power_budget, rng)
        candidates = np.vstack([frontier, rates_batch(ch, w1, w2)])
        frontier = candidates[pareto_filter(candidates)]
        remaining -= n
    return frontier


def _combined_beam(m: np.ndarray, z: np.ndarray, lam: float, P: float) -> np.ndarray:
    mix = lam * m + (1.0 - lam) * z
    norm = np.linalg.norm(mix)
    if norm == 0:
        return np.zeros_like(m)
    return math.sqrt(P) * mix / norm


def pareto_oracle(ch: MisoChannel, grid_n: int, fallback_samples: int = 200_000) -> List[OraclePoint]:
    """
    Pareto boundary of the rate region.

    Sweeps w_k(lambda) = sqrt(P) (lambda mrt_k + (1 - lambda) zf_k) / ||.||
    over a lambda grid for both base stations, adds the single-user corners
    (other BS silent) and keeps the non-dominated pairs. Channels whose own
    and cross vectors are parallel use a random-beam sampling oracle instead.

    Args:
        ch: Channel
        grid_n: Grid points per lambda axis (>= 2)
        fallback_samples: Beam pairs drawn by the degenerate-channel fallback

    Returns:
        Boundary points ordered by ascending r1
    """
    if grid_n < 2:
        raise ValueError(f"grid_n must be >= 2, got {grid_n}")
    P, h = ch.power_budget, ch.h
    m1, m2 = mrt(h[0, 0], P), mrt(h[1, 1], P)
    z1, z2 = zf(h[0, 0], h[0, 1], P), zf(h[1, 1], h[1, 0], P)

    if not (np.any(z1) and np.any(z2)):
        logger.warning("Parallel own/cross channels; using the sampling oracle")
        frontier = sample_rate_region(ch, fallback_samples, np.random.default_rng(0))
        return [OraclePoint(math.nan, math.nan, RatePair(float(a), float(b))) for a, b in frontier]

    grid = np.linspace(0.0, 1.0, grid_n)
    beams1 = np.array([_combined_beam(m1, z1, lam, P) for lam in grid])
    beams2 = np.array([_combined_beam(m2, z2, lam, P) for lam in grid])
    lam1, lam2 = np.meshgrid(grid, grid, indexing="ij")
    w1 = np.repeat(beams1, grid_n, axis=0)
    w2 = np.tile(beams2, (grid_n, 1))

    zero = np.zeros(ch.M, dtype=complex)
    w1 = np.vstack([w1, m1[None, :], zero[None, :]])
    w2 = np.vstack([w2, zero[None, :], m2[None, :]])
    lambdas1 = np.concatenate([lam1.ravel(), [1.0, math.nan]])
    lambdas2 = np.concatenate([lam2.ravel(), [math.nan, 1.0]])

    points = rates_batch(ch, w1, w2)
    keep = pareto_filter(points)
    return [
        OraclePoint(float(lambdas1[i]), float(lambdas2[i]), RatePair(float(points[i, 0]), float(points[i, 1])))
        for i in keep
    ]


def boundary_array(boundary: Sequence[OraclePoint]) -> np.ndarray:
    return np.array([[p.rates.r1, p.rates.r2] for p in boundary], dtype=float).reshape(-1, 2)


def oracle_weighted_max(boundary: Sequence[OraclePoint], alpha: float) -> float:
    """Largest alpha r1 + (1 - alpha) r2 over the boundary."""
    return max(p.rates.weighted(alpha) for p in boundary)


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two point sets in the rate plane."""
    d = np.linalg.norm(np.asarray(a)[:, None, :] - np.asarray(b)[None, :, :], axis=2)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


# ---------------------------
# Phase ambiguity elimination
# ---------------------------

def pae_vector(h: np.ndarray) -> np.ndarray:
    """
    Rotate a channel vector so its first nonzero entry is real and positive.

    Entrywise moduli are preserved; an all-zero vector is returned unchanged.
    """
    h = np.asarray(h, dtype=complex)
    nonzero = np.flatnonzero(h)
    if nonzero.size == 0:
        return h.copy()
    ref = nonzero[0]
    if h[ref].imag == 0.0 and h[ref].real > 0.0:
        return h.copy()
    phase = h[ref] / abs(h[ref])
    out = h * np.conj(phase)
    out[ref] = abs(h[ref])
    return out


def pae(h_list: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Phase ambiguity elimination of every vector in the list."""
    return [pae_vector(h) for h in h_list]


def rotate_phases(h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Multiply every channel vector h[j, k] by its own random global phase."""
    phi = rng.uniform(0.0, 2.0 * np.pi, size=h.shape[:-1])
    return h * np.exp(1j * phi)[..., None]


# ---------------------------
# Actors and critic
# ---------------------------

def _interleave(vectors: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.column_stack([v.real, v.imag]).reshape(-1) for v in vectors])


def local_observation(h: np.ndarray, j: int, use_pae: bool) -> np.ndarray:
    """BS j's channels to both users, optionally PAE'd, real/imag interleaved (4M reals)."""
    vectors = [h[j, 0], h[j, 1]]
    return _interleave(pae(vectors) if use_pae else vectors)


def global_observation(h: np.ndarray, use_pae: bool) -> np.ndarray:
    """All four channel vectors (8M reals)."""
    vectors = [h[0, 0], h[0, 1], h[1, 0], h[1, 1]]
    return _interleave(pae(vectors) if use_pae else vectors)


def _beams_from_outputs(out: np.ndarray, P: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Map raw actor outputs (n, 2M + 1) to beams.

    Returns:
        Tuple of (beams as reals (n, 2M) laid out [Re w, Im w], unit directions,
        direction norms, power fractions)
    """
    u = out[:, :-1]
    p = 1.0 / (1.0 + np.exp(-np.clip(out[:, -1], -500.0, 500.0)))
    norm = np.linalg.norm(u, axis=1)
    safe = np.where(norm > 0, norm, 1.0)
    unit = np.where(norm[:, None] > 0, u / safe[:, None], 0.0)
    beams = np.sqrt(p * P)[:, None] * unit
    return beams, unit, norm, p


def _as_complex(beams_real: np.ndarray) -> np.ndarray:
    half = beams_real.shape[1] // 2
    return beams_real[:, :half] + 1j * beams_real[:, half:]


def actor_forward(actor: DenseNet, local_obs: np.ndarray, P: float) -> np.ndarray:
    """
    Beam chosen by an actor from its local observation.

    The first 2M outputs form the direction d (real parts, then imaginary
    parts), the last output sets the power fraction p = sigmoid(.), and
    w = sqrt(p P) d / ||d||. A zero direction yields the zero beam.
    """
    out = forward(actor, np.asarray(local_obs, dtype=float))
    beams, _, _, _ = _beams_from_outputs(out[None, :], P)
    return _as_complex(beams)[0]


def _output_grad(dq_dbeam: np.ndarray, unit: np.ndarray, norm: np.ndarray, p: np.ndarray, P: float) -> np.ndarray:
    """Chain dQ/dbeam through the beam construction to dQ/draw-output."""
    s = np.sqrt(p * P)
    radial = np.sum(unit * dq_dbeam, axis=1)
    safe = np.where(norm > 0, norm, 1.0)
    d_dir = np.where(
        norm[:, None] > 0,
        (s / safe)[:, None] * (dq_dbeam - unit * radial[:, None]),
        0.0,
    )
    d_power = radial * math.sqrt(P) * np.sqrt(p) * (1.0 - p) / 2.0
    return np.column_stack([d_dir, d_power])


@dataclass
class TracePoint:
    step: int
    r1: float
    r2: float


@dataclass
class CtdeResult:
    actor1: DenseNet
    actor2: DenseNet
    critic: DenseNet
    trace: List[TracePoint]
    final: RatePair
    with_pae: bool
    alpha: float


def greedy_rates(
    actors: Sequence[DenseNet],
    ch: MisoChannel,
    use_pae: bool,
    rotations: Sequence[np.ndarray],
) -> RatePair:
    """Mean rates of the noise-free actors over a fixed set of phase-rotated channels."""
    pairs = []
    for h in rotations:
        w = [actor_forward(actors[j], local_observation(h, j, use_pae), ch.power_budget) for j in range(2)]
        pairs.append(rates(ch, BeamformerSet(np.vstack(w))))
    return RatePair(
        float(np.mean([p.r1 for p in pairs])),
        float(np.mean([p.r2 for p in pairs])),
    )


def train_ctde(
    ch: MisoChannel,
    cfg: CtdeConfig,
    with_pae: bool = True,
    randomize_phases: bool = True,
) -> CtdeResult:
    """
    Train two actors against one shared critic on one-step episodes.

    Every step draws a batch of (optionally phase-randomized) copies of the
    channel. Actor j sees only its BS's two channel vectors; the critic sees
    all four plus both beams and regresses the collective reward
    alpha r1 + (1 - alpha) r2. Actors ascend the critic's gradient with
    respect to their own beam. Gaussian noise on the raw actor outputs is
    annealed linearly from sigma_start to sigma_end.

    Args:
        ch: Fixed channel realization
        cfg: Training settings (alpha, sizes, steps, learning rates, seed)
        with_pae: Apply PAE to every observation
        randomize_phases: Draw a fresh global phase per channel vector and sample

    Returns:
        CtdeResult with the actors, the critic and the greedy-rate trace

    Raises:
        ValueError: If alpha lies outside [0, 1]
        TrainingDivergedError: If the critic loss becomes non-finite
    """
    if not 0.0 <= cfg.alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {cfg.alpha}")
    M, P = ch.M, ch.power_budget
    rng = np.random.default_rng([cfg.seed, _TRAIN_STREAM])
    eval_rng = np.random.default_rng([cfg.seed, _EVAL_STREAM])
    rotations = [rotate_phases(ch.h, eval_rng) for _ in range(cfg.eval_rotations)]

    actor_acts = ["relu"] * len(cfg.actor_hidden) + ["linear"]
    critic_acts = ["relu"] * len(cfg.critic_hidden) + ["linear"]
    actors = [init_net([4 * M, *cfg.actor_hidden, 2 * M + 1], actor_acts, rng) for _ in range(2)]
    critic = init_net([12 * M, *cfg.critic_hidden, 1], critic_acts, rng)
    actor_trainers = [NetTrainer(a, lr=cfg.actor_lr) for a in actors]
    critic_trainer = NetTrainer(critic, lr=cfg.critic_lr)

    trace: List[TracePoint] = []
    B = cfg.batch_size
    for step in range(cfg.steps):
        frac = step / max(cfg.steps - 1, 1)
        sigma = cfg.sigma_start + (cfg.sigma_end - cfg.sigma_start) * frac

        channels = [rotate_phases(ch.h, rng) if randomize_phases else ch.h for _ in range(B)]
        local = [np.vstack([local_observation(h, j, with_pae) for h in channels]) for j in range(2)]
        glob = np.vstack([global_observation(h, with_pae) for h in channels])

        # critic regression on explored actions
        explored = []
        for j in range(2):
            raw = forward(actors[j], local[j]) + sigma * rng.standard_normal((B, 2 * M + 1))
            explored.append(_beams_from_outputs(raw, P)[0])
        r = rates_batch(ch, _as_complex(explored[0]), _as_complex(explored[1]))
        target = cfg.alpha * r[:, 0] + (1.0 - cfg.alpha) * r[:, 1]
        x = np.hstack([glob, explored[0], explored[1]])
        err = forward(critic, x)[:, 0] - target
        loss = float(np.mean(err ** 2))
        if not math.isfinite(loss):
            raise TrainingDivergedError("CTDE critic", step, loss)
        grads, _ = gradients(critic, x, (2.0 * err / B)[:, None])
        critic_trainer.step(grads)

        # deterministic policy gradient through the critic
        outs = [forward(actors[j], local[j]) for j in range(2)]
        parts = [_beams_from_outputs(o, P) for o in outs]
        x = np.hstack([glob, parts[0][0], parts[1][0]])
        _, dx = gradients(critic, x, np.full((B, 1), 1.0 / B))
        offset = 8 * M
        for j in range(2):
            dq_dbeam = dx[:, offset + 2 * M * j : offset + 2 * M * (j + 1)]
            _, unit, norm, p = parts[j]
            d_out = _output_grad(dq_dbeam, unit, norm, p, P)
            actor_grads, _ = gradients(actors[j], local[j], -d_out)
            actor_trainers[j].step(actor_grads)

        if step % cfg.trace_every == 0 or step == cfg.steps - 1:
            g = greedy_rates(actors, ch, with_pae, rotations)
            trace.append(TracePoint(step=step, r1=g.r1, r2=g.r2))
            logger.debug(f"CTDE step {step}: critic loss={loss:.5f} r=({g.r1:.3f}, {g.r2:.3f})")

    final = RatePair(trace[-1].r1, trace[-1].r2)
    logger.info(
        f"Trained CTDE (alpha={cfg.alpha}, pae={with_pae}): "
        f"r1={final.r1:.3f}, r2={final.r2:.3f}"
    )
    return CtdeResult(
        actor1=actors[0],
        actor2=actors[1],
        critic=critic,
        trace=trace,
        final=final,
        with_pae=with_pae,
        alpha=cfg.alpha,
    )


@dataclass
class SweepResult:
    boundary: List[OraclePoint]
    runs: List[CtdeResult] = field(default_factory=list)


def sweep_alpha(
    ch: MisoChannel,
    alphas: Sequence[float],
    cfg: CtdeConfig,
    with_pae: bool,
    grid_n: int = 101,
    randomize_phases: bool = True,
) -> SweepResult:
    """
    Train one CTDE run per alpha and pair the learned rates with the oracle boundary.

    Raises:
        ValueError: If an alpha lies outside [0, 1]
    """
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {a}")
    result = SweepResult(boundary=pareto_oracle(ch, grid_n))
    for a in alphas:
        run_cfg = cfg.model_copy(update={"alpha": float(a)})
        result.runs.append(train_ctde(ch, run_cfg, with_pae=with_pae, randomize_phases=randomize_phases))
    return result
