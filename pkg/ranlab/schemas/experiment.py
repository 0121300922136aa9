from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, ValidationInfo, field_validator, model_validator

from ranlab.core import constants
from ranlab.schemas.network import PropagationParams


class _Strict(BaseModel):
    """Unknown keys are errors everywhere in an experiment config."""

    model_config = ConfigDict(extra="forbid")


# ============================================================================
# Tilt
# ============================================================================

class RuleThresholds(_Strict):
    """Thresholds of the deployed rule-based tilt policy."""

    cov_low: float = Field(0.9, ge=0, le=1, description="Uptilt below this coverage")
    cov_high: float = Field(0.95, ge=0, le=1, description="Downtilt candidates above this coverage")
    cap_low: float = Field(2.5, ge=0, description="Downtilt when capacity is below this (bits/s/Hz)")

    @model_validator(mode="after")
    def _ordered(self) -> "RuleThresholds":
        if not self.cov_low < self.cov_high:
            raise ValueError("cov_low must be smaller than cov_high")
        return self


class FeatureScaling(_Strict):
    """Per-KPI (offset, scale) pairs; a feature is (kpi - offset) / scale."""

    coverage: Tuple[float, float] = constants.DEFAULT_FEATURE_SCALING["coverage"]
    capacity: Tuple[float, float] = constants.DEFAULT_FEATURE_SCALING["capacity"]
    mean_sinr_db: Tuple[float, float] = constants.DEFAULT_FEATURE_SCALING["mean_sinr_db"]
    edge_sinr_db: Tuple[float, float] = constants.DEFAULT_FEATURE_SCALING["edge_sinr_db"]
    load: Tuple[float, float] = constants.DEFAULT_FEATURE_SCALING["load"]

    @field_validator("*")
    @classmethod
    def _positive_scale(cls, pair: Tuple[float, float]) -> Tuple[float, float]:
        if not pair[1] > 0:
            raise ValueError("scale must be > 0")
        return pair

    def offsets_and_scales(self):
        pairs = [getattr(self, name) for name in constants.KPI_NAMES]
        return [p[0] for p in pairs], [p[1] for p in pairs]


class TiltEnvConfig(_Strict):
    """Synthetic network on which tilt policies are logged and evaluated."""

    n_rings: int = Field(1, ge=0, le=4)
    isd: float = Field(constants.DEFAULT_ISD_M, gt=0, description="Inter-site distance (m)")
    n_users: int = Field(2000, ge=1, description="Users dropped per day")
    sinr_threshold_db: float = Field(constants.SINR_THRESHOLD_DB)
    tilt_min: float = Field(constants.TILT_MIN_DEG, ge=0, le=90)
    tilt_max: float = Field(constants.TILT_MAX_DEG, ge=0, le=90)
    tilt_step: float = Field(constants.TILT_STEP_DEG, gt=0, le=10)
    initial_tilt_range: Tuple[float, float] = constants.INITIAL_TILT_RANGE_DEG
    site_rotation: float = Field(0.0, ge=0, lt=360)
    beta: float = Field(0.5, ge=0, le=1, description="Coverage weight inside a cell's score")
    mu: float = Field(0.5, ge=0, le=1, description="Own-cell weight against the neighbor mean")
    cap_norm: float = Field(constants.CAPACITY_NORM, gt=0)
    feature_scaling: FeatureScaling = Field(default_factory=FeatureScaling)
    propagation: PropagationParams = Field(default_factory=PropagationParams)

    @model_validator(mode="after")
    def _bounds(self) -> "TiltEnvConfig":
        if self.tilt_min > self.tilt_max:
            raise ValueError("tilt_min must not exceed tilt_max")
        lo, hi = self.initial_tilt_range
        if lo > hi:
            raise ValueError("initial_tilt_range must be ordered")
        return self


class TrainConfig(_Strict):
    """Offline Q-network training and logging-policy settings."""

    feature_count: Literal[5, 20, 35] = 35
    epochs: int = Field(30, ge=1)
    batch_size: int = Field(64, ge=1)
    lr: float = Field(constants.ADAM_LR, gt=0, le=1)
    epsilon: float = Field(0.3, gt=0, lt=1, description="Exploration rate of the logging policy")
    weight_cap: float = Field(constants.PROPENSITY_WEIGHT_CAP, ge=1)
    hidden: List[int] = Field(default_factory=lambda: list(constants.QNET_HIDDEN))


class TiltExperimentConfig(_Strict):
    env: TiltEnvConfig = Field(default_factory=TiltEnvConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    thresholds: RuleThresholds = Field(default_factory=RuleThresholds)
    log_days: int = Field(200, ge=2, description="Days in the logged history")
    eval_days: int = Field(20, ge=2, description="Days per evaluation rollout")
    eval_seeds: int = Field(3, ge=1, description="Rollouts per policy evaluation")
    feature_counts: List[Literal[5, 20, 35]] = Field(default_factory=lambda: [5, 20, 35])
    schemes: List[Literal["dm", "propensity_dm"]] = Field(
        default_factory=lambda: ["dm", "propensity_dm"]
    )

    @field_validator("feature_counts")
    @classmethod
    def _enough_neighbors(cls, counts: List[int], info: ValidationInfo) -> List[int]:
        env = info.data.get("env")
        if env is None:
            return counts
        sites = 1 + 3 * env.n_rings * (env.n_rings + 1)
        available = constants.SECTORS_PER_SITE * sites - 1
        for fc in counts:
            if constants.FEATURE_NEIGHBORS[fc] > available:
                raise ValueError(
                    f"feature_count {fc} needs {constants.FEATURE_NEIGHBORS[fc]} neighbors, "
                    f"n_rings={env.n_rings} gives {available}"
                )
        return counts


# ============================================================================
# Beamforming
# ============================================================================

class CtdeConfig(_Strict):
    """Centralized-critic / decentralized-actor training settings."""

    alpha: float = Field(0.5, ge=0, le=1, description="Weight of user 1's rate")
    actor_hidden: List[int] = Field(default_factory=lambda: [64, 64])
    critic_hidden: List[int] = Field(default_factory=lambda: [64, 64])
    sigma_start: float = Field(constants.EXPLORATION_SIGMA_START, ge=0)
    sigma_end: float = Field(constants.EXPLORATION_SIGMA_END, ge=0)
    steps: int = Field(3000, ge=1)
    batch_size: int = Field(32, ge=1)
    actor_lr: float = Field(1e-3, gt=0, le=1)
    critic_lr: float = Field(1e-3, gt=0, le=1)
    trace_every: int = Field(50, ge=1)
    eval_rotations: int = Field(16, ge=1, description="Phase draws averaged in greedy evaluation")
    seed: int = 0


class BeamExperimentConfig(CtdeConfig):
    n_antennas: int = Field(constants.N_ANTENNAS, ge=2, le=16)
    snr_db: float = Field(constants.SNR_DB, ge=-20, le=40)
    alphas: List[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0])
    grid_n: int = Field(101, ge=2)
    pae_ablation: bool = Field(True, description="Also train without PAE at beam.alpha")

    @field_validator("alphas")
    @classmethod
    def _alphas_in_range(cls, alphas: List[float]) -> List[float]:
        for a in alphas:
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"alpha {a} outside [0, 1]")
        return alphas


# ============================================================================
# CSI compression
# ============================================================================

class AutoencoderConfig(_Strict):
    n_tx: int = Field(constants.CSI_N_TX, ge=1)
    latent_dim: int = Field(8, ge=1)
    bits: int = Field(4, ge=1, le=16)
    hidden: List[int] = Field(default_factory=lambda: [constants.CSI_HIDDEN])
    hidden_activation: Literal["relu", "tanh", "sigmoid", "linear"] = "relu"
    latent_activation: Literal["relu", "tanh", "sigmoid", "linear"] = "tanh"
    quant_range: Tuple[float, float] = (-1.0, 1.0)
    lr: float = Field(constants.ADAM_LR, gt=0, le=1)
    batch_size: int = Field(64, ge=1)

    @model_validator(mode="after")
    def _bottleneck(self) -> "AutoencoderConfig":
        if self.latent_dim > 2 * self.n_tx:
            raise ValueError(f"latent_dim must not exceed 2 * n_tx = {2 * self.n_tx}")
        if not self.quant_range[0] < self.quant_range[1]:
            raise ValueError("quant_range must satisfy lo < hi")
        return self


class CsiExperimentConfig(_Strict):
    n_samples: int = Field(5000, ge=10)
    n_paths: int = Field(constants.CSI_N_PATHS, ge=1)
    epochs: int = Field(40, ge=1)
    latent_dims: List[int] = Field(default_factory=lambda: [4, 8, 16])
    autoencoder: AutoencoderConfig = Field(default_factory=AutoencoderConfig)

    @model_validator(mode="after")
    def _latent_dims(self) -> "CsiExperimentConfig":
        limit = 2 * self.autoencoder.n_tx
        for d in self.latent_dims:
            if not 1 <= d <= limit:
                raise ValueError(f"latent_dims entry {d} outside [1, {limit}]")
        return self


# ============================================================================
# Experiment
# ============================================================================

class ExperimentConfig(_Strict):
    """Top-level experiment file."""

    experiment: Literal["tilt", "beam", "csi"] = Field(..., examples=["tilt"])
    seeds: List[NonNegativeInt] = Field(..., min_length=1, examples=[[1, 2, 3]])
    output_dir: str = Field("output", description="Overridden by RANLAB_OUTPUT_DIR")
    tilt: TiltExperimentConfig = Field(default_factory=TiltExperimentConfig)
    beam: BeamExperimentConfig = Field(default_factory=BeamExperimentConfig)
    csi: CsiExperimentConfig = Field(default_factory=CsiExperimentConfig)


class RunManifest(BaseModel):
    """Record of one run: what was configured and what was written."""

    config: dict
    config_hash: str
    versions: Dict[str, str]
    seed_files: Dict[str, List[str]]
    aggregate_files: List[str]
    wall_clock_s: float
    jobs: int
    defaulted_fields: Optional[List[str]] = None
