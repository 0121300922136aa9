"""
Laboratory-wide constants and default parameters.

This module centralizes the numeric defaults shared by the services and the
experiment schemas so that a config file and a direct library call agree.
"""

# ============================================================================
# Network Geometry and Propagation
# ============================================================================

SECTORS_PER_SITE = 3
"""Number of sector cells per site (azimuths 0, 120, 240 degrees)."""

DEFAULT_ISD_M = 500.0
"""Default inter-site distance in meters."""

DEFAULT_BS_HEIGHT_M = 25.0
"""Default base-station antenna height in meters."""

DEFAULT_TX_POWER_DBM = 46.0
"""Default per-cell transmit power in dBm."""

PL_INTERCEPT_DB = 128.1
"""Pathloss at 1 km in dB."""

PL_SLOPE_DB = 37.6
"""Pathloss slope in dB per decade of distance."""

MIN_DISTANCE_M = 10.0
"""Distances below this value are clamped before computing pathloss."""

HPBW_V_DEG = 10.0
"""Vertical half-power beamwidth in degrees."""

SLA_V_DB = 20.0
"""Vertical side-lobe attenuation in dB."""

HPBW_H_DEG = 65.0
"""Horizontal half-power beamwidth in degrees."""

MAX_HORIZ_ATTEN_DB = 25.0
"""Front-to-back attenuation cap of the horizontal pattern in dB."""

NOISE_DBM = -95.0
"""Thermal noise power over the carrier bandwidth in dBm."""

UE_HEIGHT_M = 1.5
"""User antenna height in meters."""

SINR_THRESHOLD_DB = -6.0
"""A user is covered when its SINR is at or above this value."""

EMPTY_CELL_SINR_DB = -300.0
"""Finite floor reported as the SINR statistics of a cell with no users."""

EDGE_PERCENTILE = 5.0
"""Percentile of the per-cell SINR sample reported as edge SINR."""


# ============================================================================
# Tilt Agent
# ============================================================================

TILT_MIN_DEG = 0.0
"""Lowest allowed electrical downtilt."""

TILT_MAX_DEG = 16.0
"""Highest allowed electrical downtilt."""

TILT_STEP_DEG = 1.0
"""Tilt change applied by one uptilt/downtilt action."""

INITIAL_TILT_RANGE_DEG = (2.0, 14.0)
"""Integer initial tilts are drawn uniformly inside this range."""

ACTION_UPTILT = 0
ACTION_DOWNTILT = 1
ACTION_NOCHANGE = 2
N_ACTIONS = 3

ACTION_NAMES = {
    ACTION_UPTILT: "uptilt",
    ACTION_DOWNTILT: "downtilt",
    ACTION_NOCHANGE: "nochange",
}

KPI_NAMES = ("coverage", "capacity", "mean_sinr_db", "edge_sinr_db", "load")
"""Order of the per-cell KPI components inside a feature block."""

FEATURE_COUNTS = (5, 20, 35)
"""Supported feature lengths: own KPIs, plus 3 or 6 nearest neighbors."""

FEATURE_NEIGHBORS = {5: 0, 20: 3, 35: 6}
"""Number of neighbor KPI blocks appended for each feature length."""

REWARD_NEIGHBORS = 6
"""Neighbors averaged into the reward."""

DEFAULT_FEATURE_SCALING = {
    "coverage": (0.5, 0.5),
    "capacity": (2.0, 2.0),
    "mean_sinr_db": (5.0, 10.0),
    "edge_sinr_db": (-5.0, 10.0),
    "load": (100.0, 100.0),
}
"""Per-KPI (offset, scale); a feature is (kpi - offset) / scale."""

CAPACITY_NORM = 5.0
"""Capacity normalization (bits/s/Hz) inside the reward."""

PROPENSITY_WEIGHT_CAP = 20.0
"""Upper bound of an inverse-propensity sample weight."""

QNET_HIDDEN = (64, 64)
"""Hidden layer sizes of the shared Q-network."""

EVAL_SEED_BASE = 1_000_000
"""First drop seed of evaluation rollouts, far above the logging drop seeds."""


# ============================================================================
# Neural Engine
# ============================================================================

ACTIVATIONS = ("relu", "tanh", "sigmoid", "linear")

ADAM_LR = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


# ============================================================================
# Beamforming
# ============================================================================

N_ANTENNAS = 2
"""Default antennas per base station."""

SNR_DB = 10.0
"""Default transmit-power-to-noise ratio."""

EXPLORATION_SIGMA_START = 0.1
EXPLORATION_SIGMA_END = 0.01

POWER_TOLERANCE = 1e-9
"""Slack allowed on the per-BS power budget."""

DOMINANCE_TOLERANCE = 1e-6
"""Rate slack (bits/s/Hz) used by dominance checks against the oracle."""


# ============================================================================
# CSI Compression
# ============================================================================

CSI_N_TX = 32
CSI_N_PATHS = 3
CSI_HIDDEN = 128
CSI_TRAIN_FRACTION = 0.9

NMSE_FLOOR_DB = -100.0
"""Reported NMSE never goes below this value."""


# ============================================================================
# Harness
# ============================================================================

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3

MANIFEST_FILE = "manifest.json"
"""Name of the run manifest inside the output directory."""
