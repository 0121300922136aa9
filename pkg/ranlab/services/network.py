"""
Network geometry, propagation, antenna patterns, SINR and per-cell KPIs.

Angles follow the mathematical convention: azimuths are measured
counter-clockwise from the +x axis, elevation angles are positive below the
horizon, so a larger tilt points the main lobe closer to the site.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ranlab.core import constants
from ranlab.schemas.network import CellConfig, NetworkLayout, PropagationParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KpiVector:
    """Per-cell key performance indicators over the attached users."""

    coverage: float
    capacity: float
    mean_sinr_db: float
    edge_sinr_db: float
    load: int

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.coverage, self.capacity, self.mean_sinr_db, self.edge_sinr_db, float(self.load)]
        )


@dataclass(frozen=True)
class UserDrop:
    """One snapshot of users, their serving cells and SINRs."""

    positions: np.ndarray
    attachment: np.ndarray
    sinr_db: np.ndarray

    @property
    def n_users(self) -> int:
        return int(self.positions.shape[0])


def _hex_sites(n_rings: int, isd: float) -> List[Tuple[float, float]]:
    axial = []
    for q in range(-n_rings, n_rings + 1):
        for r in range(-n_rings, n_rings + 1):
            ring = max(abs(q), abs(r), abs(q + r))
            if ring <= n_rings:
                axial.append((ring, q, r))

    sites = []
    for ring, q, r in axial:
        x = isd * (q + r / 2.0)
        y = isd * (math.sqrt(3.0) / 2.0 * r)
        angle = round(math.atan2(y, x) % (2.0 * math.pi), 9)
        sites.append((ring, angle, x, y))
    sites.sort(key=lambda s: (s[0], s[1]))
    return [(x, y) for _, _, x, y in sites]


def build_layout(
    n_rings: int,
    isd: float,
    seed: int,
    tilt_min: float = constants.TILT_MIN_DEG,
    tilt_max: float = constants.TILT_MAX_DEG,
    initial_tilt_range: Tuple[float, float] = constants.INITIAL_TILT_RANGE_DEG,
    site_rotation: float = 0.0,
    tx_power_dbm: float = constants.DEFAULT_TX_POWER_DBM,
    height: float = constants.DEFAULT_BS_HEIGHT_M,
) -> NetworkLayout:
    """
    Build a hexagonal deployment with three sectors per site.

    Sites are ordered by ring, then counter-clockwise; the site at the origin
    comes first. The seed draws the initial integer tilt of every cell inside
    initial_tilt_range (clamped to the tilt bounds).

    Args:
        n_rings: Number of site rings around the central site
        isd: Inter-site distance in meters
        seed: Seed for the initial tilts
        tilt_min: Lowest allowed tilt (deg)
        tilt_max: Highest allowed tilt (deg)
        initial_tilt_range: Inclusive range of the initial integer tilts (deg)
        site_rotation: Azimuth offset added to the 0/120/240 sector pattern (deg)
        tx_power_dbm: Transmit power of every cell
        height: Antenna height of every site

    Returns:
        NetworkLayout with 3 * (1 + 3 * n_rings * (n_rings + 1)) cells

    Raises:
        ValueError: If n_rings < 0 or isd <= 0
    """
    if n_rings < 0:
        raise ValueError(f"n_rings must be >= 0, got {n_rings}")
    if not isd > 0:
        raise ValueError(f"isd must be > 0, got {isd}")

    sites = _hex_sites(n_rings, float(isd))
    rng = np.random.default_rng(seed)
    lo, hi = initial_tilt_range
    draws = rng.integers(int(math.ceil(lo)), int(math.floor(hi)) + 1, size=len(sites) * 3)

    cells = []
    for site_index in range(len(sites)):
        for sector in range(constants.SECTORS_PER_SITE):
            cell_id = site_index * constants.SECTORS_PER_SITE + sector
            tilt = min(max(float(draws[cell_id]), tilt_min), tilt_max)
            cells.append(
                CellConfig(
                    cell_id=cell_id,
                    site_index=site_index,
                    azimuth=(site_rotation + 120.0 * sector) % 360.0,
                    tilt=tilt,
                    tx_power_dbm=tx_power_dbm,
                    height=height,
                )
            )

    layout = NetworkLayout(
        sites=sites,
        cells=cells,
        inter_site_distance=float(isd),
        n_rings=n_rings,
        tilt_min=tilt_min,
        tilt_max=tilt_max,
    )
    logger.debug(f"Built layout: {len(sites)} sites, {len(cells)} cells")
    return layout


def vertical_gain(theta, tilt, params: PropagationParams):
    """Vertical antenna attenuation -min(12 ((theta - tilt) / hpbw_v)^2, sla_v) in dB."""
    offset = (np.asarray(theta, dtype=float) - np.asarray(tilt, dtype=float)) / params.hpbw_v
    gain = -np.minimum(12.0 * offset ** 2, params.sla_v)
    return float(gain) if np.ndim(gain) == 0 else gain


def horizontal_gain(phi, azimuth, params: PropagationParams):
    """Horizontal antenna attenuation with the angle offset wrapped to [-180, 180)."""
    offset = (np.asarray(phi, dtype=float) - np.asarray(azimuth, dtype=float) + 180.0) % 360.0 - 180.0
    gain = -np.minimum(12.0 * (offset / params.hpbw_h) ** 2, params.max_horiz_atten_db)
    return float(gain) if np.ndim(gain) == 0 else gain


def pathloss_db(distance, params: PropagationParams):
    """Log-distance pathloss; distances below 10 m are clamped to 10 m."""
    d = np.maximum(np.asarray(distance, dtype=float), constants.MIN_DISTANCE_M)
    loss = params.pl_intercept_db + params.pl_slope * np.log10(d / 1000.0)
    return float(loss) if np.ndim(loss) == 0 else loss


def cell_arrays(layout: NetworkLayout) -> dict:
    """Per-cell geometry as arrays (positions, heights, azimuths, tilts, powers)."""
    sites = np.asarray(layout.sites, dtype=float).reshape(-1, 2)
    site_index = np.array([c.site_index for c in layout.cells], dtype=int)
    return {
        "positions": sites[site_index],
        "site_index": site_index,
        "height": np.array([c.height for c in layout.cells], dtype=float),
        "azimuth": np.array([c.azimuth for c in layout.cells], dtype=float),
        "tilt": np.array([c.tilt for c in layout.cells], dtype=float),
        "tx_power_dbm": np.array([c.tx_power_dbm for c in layout.cells], dtype=float),
    }


def received_power_dbm(
    layout: NetworkLayout,
    params: PropagationParams,
    positions: np.ndarray,
) -> np.ndarray:
    """
    Received power of every cell at every user position.

    Args:
        layout: Network layout
        params: Propagation parameters
        positions: (n_users, 2) user positions in meters

    Returns:
        (n_users, n_cells) matrix of received powers in dBm
    """
    cells = cell_arrays(layout)
    delta = np.asarray(positions, dtype=float)[:, None, :] - cells["positions"][None, :, :]
    distance = np.hypot(delta[..., 0], delta[..., 1])

    phi = np.degrees(np.arctan2(delta[..., 1], delta[..., 0]))
    theta = np.degrees(
        np.arctan2(cells["height"][None, :] - params.ue_height, np.maximum(distance, 1e-9))
    )
    a_h = horizontal_gain(phi, cells["azimuth"][None, :], params)
    a_v = vertical_gain(theta, cells["tilt"][None, :], params)
    antenna = -np.minimum(-(a_h + a_v), params.max_horiz_atten_db)

    return cells["tx_power_dbm"][None, :] - pathloss_db(distance, params) + antenna


def compute_sinr(rx_dbm: np.ndarray, noise_dbm: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Attach users to the strongest cell and compute their SINR.

    Args:
        rx_dbm: (n_users, n_cells) received powers in dBm
        noise_dbm: Noise power in dBm

    Returns:
        Tuple of (attachment, sinr_db) per user
    """
    rx_dbm = np.atleast_2d(np.asarray(rx_dbm, dtype=float))
    rx_mw = np.power(10.0, rx_dbm / 10.0)
    attachment = np.argmax(rx_dbm, axis=1)
    serving = rx_mw[np.arange(rx_mw.shape[0]), attachment]
    interference = np.maximum(rx_mw.sum(axis=1) - serving, 0.0)
    noise_mw = 10.0 ** (noise_dbm / 10.0)
    sinr_db = 10.0 * np.log10(serving / (noise_mw + interference))
    return attachment, sinr_db


def cell_kpis(
    attachment: np.ndarray,
    sinr_db: np.ndarray,
    n_cells: int,
    sinr_threshold_db: float = constants.SINR_THRESHOLD_DB,
) -> List[KpiVector]:
    """
    Aggregate per-user SINRs into per-cell KPIs.

    Cells without attached users report zero coverage, capacity and load and
    the EMPTY_CELL_SINR_DB sentinel for both SINR statistics.
    """
    kpis = []
    for cell_id in range(n_cells):
        sample = sinr_db[attachment == cell_id]
        if sample.size == 0:
            kpis.append(
                KpiVector(
                    coverage=0.0,
                    capacity=0.0,
                    mean_sinr_db=constants.EMPTY_CELL_SINR_DB,
                    edge_sinr_db=constants.EMPTY_CELL_SINR_DB,
                    load=0,
                )
            )
            continue
        kpis.append(
            KpiVector(
                coverage=float(np.mean(sample >= sinr_threshold_db)),
                capacity=float(np.mean(np.log2(1.0 + np.power(10.0, sample / 10.0)))),
                mean_sinr_db=float(np.mean(sample)),
                edge_sinr_db=float(np.percentile(sample, constants.EDGE_PERCENTILE)),
                load=int(sample.size),
            )
        )
    return kpis


def kpi_matrix(kpis: Sequence[KpiVector]) -> np.ndarray:
    """Stack KPI vectors into an (n_cells, 5) array."""
    return np.vstack([k.as_array() for k in kpis])


def deployment_radius(layout: NetworkLayout) -> float:
    """Radius of the disc in which users are dropped."""
    return (layout.n_rings + 0.5) * layout.inter_site_distance


def drop_users(layout: NetworkLayout, n_users: int, rng: np.random.Generator) -> np.ndarray:
    """Drop users uniformly in the deployment disc."""
    radius = deployment_radius(layout) * np.sqrt(rng.random(n_users))
    angle = 2.0 * np.pi * rng.random(n_users)
    return np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])


def evaluate_drop(
    layout: NetworkLayout,
    params: PropagationParams,
    positions: np.ndarray,
    sinr_threshold_db: float = constants.SINR_THRESHOLD_DB,
) -> Tuple[UserDrop, List[KpiVector]]:
    """Evaluate SINR and per-cell KPIs for a given set of user positions."""
    rx = received_power_dbm(layout, params, positions)
    attachment, sinr_db = compute_sinr(rx, params.noise_dbm)
    drop = UserDrop(positions=np.asarray(positions, dtype=float), attachment=attachment, sinr_db=sinr_db)
    return drop, cell_kpis(attachment, sinr_db, layout.n_cells, sinr_threshold_db)


def evaluate_network(
    layout: NetworkLayout,
    params: PropagationParams,
    n_users: int,
    seed,
    sinr_threshold_db: float = constants.SINR_THRESHOLD_DB,
) -> Tuple[UserDrop, List[KpiVector]]:
    """
    Drop users, attach them to the strongest cell and compute per-cell KPIs.

    Args:
        layout: Network layout (tilts included)
        params: Propagation parameters
        n_users: Number of users to drop
        seed: Seed (or SeedSequence) of the user drop
        sinr_threshold_db: Coverage threshold

    Returns:
        Tuple of (UserDrop, per-cell KpiVector list)

    Raises:
        ValueError: If n_users < 1
    """
    if n_users < 1:
        raise ValueError(f"n_users must be >= 1, got {n_users}")
    positions = drop_users(layout, n_users, np.random.default_rng(seed))
    return evaluate_drop(layout, params, positions, sinr_threshold_db)


def neighbor_table(layout: NetworkLayout, k: Optional[int] = None) -> List[List[int]]:
    """
    Neighbors of every cell ordered by ascending site distance, then cell_id.

    Co-sited cells (distance 0) come first. With k set, each list is truncated
    to at most k entries.
    """
    cells = cell_arrays(layout)
    pos = cells["positions"]
    dist = np.hypot(pos[:, None, 0] - pos[None, :, 0], pos[:, None, 1] - pos[None, :, 1])
    # rounding keeps equal-distance ties decided by cell_id
    dist = np.round(dist, 6)
    table = []
    for cell_id in range(layout.n_cells):
        others = [c for c in range(layout.n_cells) if c != cell_id]
        others.sort(key=lambda c: (dist[cell_id, c], c))
        table.append(others if k is None else others[:k])
    return table
