"""
Experiment harness: validate a config, dispatch seeds, write aggregates and
the run manifest.
"""
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Union

import numpy as np

import ranlab
from ranlab.core import constants
from ranlab.core.config import get_settings
from ranlab.core.decorators import timed_stage
from ranlab.pipelines import beam, csi, tilt
from ranlab.pipelines.configuration import config_hash, defaulted_fields, load_config, load_raw, validate_raw
from ranlab.schemas.experiment import ExperimentConfig, RunManifest
from ranlab.workers import dispatch

logger = logging.getLogger(__name__)

PIPELINES = {"tilt": tilt, "beam": beam, "csi": csi}


@dataclass
class ValidationReport:
    config: ExperimentConfig
    defaulted: List[str] = field(default_factory=list)

    def render(self) -> str:
        lines = ["OK"]
        if self.defaulted:
            lines.append("Defaulted fields:")
            lines.extend(f"  {path}" for path in self.defaulted)
        return "\n".join(lines)


def validate(config_path: Union[str, Path]) -> ValidationReport:
    """
    Check a config file against the schema without running anything.

    Raises:
        ConfigError: At the first failing field
    """
    raw = load_raw(config_path)
    cfg = validate_raw(raw)
    return ValidationReport(config=cfg, defaulted=defaulted_fields(raw))


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    """RANLAB_OUTPUT_DIR wins over the config's output_dir."""
    settings = get_settings()
    return Path(settings.output_dir or cfg.output_dir)


def _versions() -> dict:
    return {
        "ranlab": ranlab.__version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }


@timed_stage("experiment run")
def run(config_path: Union[str, Path], overrides: Iterable[str] = (), jobs: Optional[int] = None) -> RunManifest:
    """
    Run the configured experiment for every seed and write its artifacts.

    Layout under <output_dir>/<experiment>/: seed_<n>/ per seed, the aggregate
    CSV, one SVG figure and manifest.json.

    Args:
        config_path: JSON config file
        overrides: dotted.key=value strings
        jobs: Worker processes for seed dispatch; RANLAB_JOBS if None

    Returns:
        The written RunManifest

    Raises:
        ConfigError: Invalid config or override (exit code 2)
        RanlabRuntimeError: The run failed (exit code 3)
    """
    started = time.perf_counter()
    cfg, raw = load_config(config_path, overrides)
    jobs = get_settings().jobs if jobs is None else jobs
    run_dir = resolve_output_dir(cfg) / cfg.experiment
    run_dir.mkdir(parents=True, exist_ok=True)
    digest = config_hash(cfg)
    seeds = sorted(set(cfg.seeds))
    logger.info(f"Running '{cfg.experiment}' for seeds {seeds} into {run_dir} (config {digest[:12]})")

    pipeline = PIPELINES[cfg.experiment]
    outcomes = dispatch(pipeline.run_seed, seeds, cfg, str(run_dir), jobs=jobs)
    aggregate_files = pipeline.write_aggregates(outcomes, str(run_dir))

    manifest = RunManifest(
        config=cfg.model_dump(mode="json"),
        config_hash=digest,
        versions=_versions(),
        seed_files={str(o.seed): o.files for o in outcomes},
        aggregate_files=aggregate_files,
        wall_clock_s=time.perf_counter() - started,
        jobs=max(1, int(jobs)),
        defaulted_fields=defaulted_fields(raw),
    )
    manifest_path = run_dir / constants.MANIFEST_FILE
    manifest_path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    logger.info(f"✓ Wrote manifest {manifest_path}")
    return manifest
