import math
from typing import List, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ranlab.core import constants


class PropagationParams(BaseModel):
    """Macro-cell propagation and antenna-pattern parameters."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    pl_intercept_db: float = Field(
        constants.PL_INTERCEPT_DB, gt=0, description="Pathloss at 1 km (dB)"
    )
    pl_slope: float = Field(
        constants.PL_SLOPE_DB, gt=0, description="Pathloss slope (dB/decade)"
    )
    hpbw_v: float = Field(
        constants.HPBW_V_DEG, gt=0, le=90, description="Vertical half-power beamwidth (deg)"
    )
    sla_v: float = Field(
        constants.SLA_V_DB, gt=0, description="Vertical side-lobe attenuation (dB)"
    )
    max_horiz_atten_db: float = Field(
        constants.MAX_HORIZ_ATTEN_DB, gt=0, description="Horizontal attenuation cap (dB)"
    )
    hpbw_h: float = Field(
        constants.HPBW_H_DEG, gt=0, le=90, description="Horizontal half-power beamwidth (deg)"
    )
    noise_dbm: float = Field(constants.NOISE_DBM, description="Noise power (dBm)")
    ue_height: float = Field(constants.UE_HEIGHT_M, gt=0, description="User height (m)")


class CellConfig(BaseModel):
    """One sector cell of a site."""

    model_config = ConfigDict(extra="forbid")

    cell_id: int = Field(..., ge=0)
    site_index: int = Field(..., ge=0)
    azimuth: float = Field(..., description="Boresight azimuth (deg)", examples=[120.0])
    tilt: float = Field(..., description="Electrical downtilt (deg)", examples=[8.0])
    tx_power_dbm: float = Field(constants.DEFAULT_TX_POWER_DBM)
    height: float = Field(constants.DEFAULT_BS_HEIGHT_M, gt=0)


class NetworkLayout(BaseModel):
    """Hexagonal multi-site deployment with three sectors per site."""

    model_config = ConfigDict(extra="forbid")

    sites: List[Tuple[float, float]]
    cells: List[CellConfig]
    inter_site_distance: float = Field(..., gt=0)
    n_rings: int = Field(..., ge=0)
    tilt_min: float = Field(constants.TILT_MIN_DEG)
    tilt_max: float = Field(constants.TILT_MAX_DEG)

    @field_validator("sites")
    @classmethod
    def _finite_sites(cls, sites: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        for x, y in sites:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError("site positions must be finite")
        return sites

    @model_validator(mode="after")
    def _check_grid(self) -> "NetworkLayout":
        expected_sites = 1 + sum(6 * r for r in range(1, self.n_rings + 1))
        if len(self.sites) != expected_sites:
            raise ValueError(
                f"{self.n_rings} rings need {expected_sites} sites, got {len(self.sites)}"
            )
        if len(self.cells) != constants.SECTORS_PER_SITE * expected_sites:
            raise ValueError(
                f"expected {constants.SECTORS_PER_SITE * expected_sites} cells, "
                f"got {len(self.cells)}"
            )
        if self.tilt_min > self.tilt_max:
            raise ValueError("tilt_min must not exceed tilt_max")
        for cell in self.cells:
            if not self.tilt_min <= cell.tilt <= self.tilt_max:
                raise ValueError(
                    f"cell {cell.cell_id} tilt {cell.tilt} outside "
                    f"[{self.tilt_min}, {self.tilt_max}]"
                )
            if cell.site_index >= len(self.sites):
                raise ValueError(f"cell {cell.cell_id} references unknown site")
        return self

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def tilts(self) -> List[float]:
        return [cell.tilt for cell in self.cells]

    def with_tilts(self, tilts) -> "NetworkLayout":
        """Copy of the layout with new per-cell tilts, clamped to the bounds."""
        cells = [
            cell.model_copy(update={"tilt": min(max(float(t), self.tilt_min), self.tilt_max)})
            for cell, t in zip(self.cells, tilts)
        ]
        return self.model_copy(update={"cells": cells})
