"""
JSON Lines records: experience logs and CSI feedback files.
"""
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Tuple, Union

import numpy as np

from ranlab.services.tilt import ExperienceLog, Transition

logger = logging.getLogger(__name__)


def write_experience_log(log: ExperienceLog, path: Union[str, Path]) -> Path:
    """
    Write a log as JSON Lines: a header line, then one transition per line.

    Header keys: env_config_hash, seed, feature_count.
    Transition keys: day, cell_id, features, action, reward, propensity.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        header = {"env_config_hash": log.env_config_hash, "seed": log.seed, "feature_count": log.feature_count}
        f.write(json.dumps(header) + "\n")
        for t in log.transitions:
            record = {
                "day": t.day,
                "cell_id": t.cell_id,
                "features": [float(v) for v in t.features],
                "action": t.action,
                "reward": t.reward,
                "propensity": t.propensity,
            }
            f.write(json.dumps(record) + "\n")
    logger.info(f"Wrote {len(log)} transitions to {path}")
    return path


def read_experience_log(path: Union[str, Path]) -> ExperienceLog:
    """
    Read a JSON Lines experience log.

    Transitions without a propensity are rejected; run estimate_propensities
    on logs from external sources after filling them in.

    Raises:
        ValueError: If the header or a record is malformed
    """
    lines = [line for line in Path(path).read_text().splitlines() if line.strip()]
    if not lines:
        raise ValueError(f"empty experience log: {path}")
    header = json.loads(lines[0])
    for key in ("env_config_hash", "seed", "feature_count"):
        if key not in header:
            raise ValueError(f"experience log header misses '{key}'")

    transitions = []
    for lineno, line in enumerate(lines[1:], start=2):
        record = json.loads(line)
        try:
            transitions.append(
                Transition(
                    day=int(record["day"]),
                    cell_id=int(record["cell_id"]),
                    features=np.asarray(record["features"], dtype=float),
                    action=int(record["action"]),
                    reward=float(record["reward"]),
                    propensity=float(record["propensity"]),
                )
            )
        except KeyError as e:
            raise ValueError(f"{path}:{lineno}: missing key {e}") from e
    return ExperienceLog(
        transitions=transitions,
        env_config_hash=str(header["env_config_hash"]),
        seed=int(header["seed"]),
        feature_count=int(header["feature_count"]),
    )


def write_feedback(records: Iterable[Tuple[int, np.ndarray]], path: Union[str, Path]) -> Path:
    """Write CSI feedback as JSON Lines {sample_id, codes}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for sample_id, codes in records:
            f.write(json.dumps({"sample_id": int(sample_id), "codes": [int(c) for c in codes]}) + "\n")
    return path


def read_feedback(path: Union[str, Path]) -> Dict[int, np.ndarray]:
    out: Dict[int, np.ndarray] = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            record = json.loads(line)
            out[int(record["sample_id"])] = np.asarray(record["codes"], dtype=np.int64)
    return out
