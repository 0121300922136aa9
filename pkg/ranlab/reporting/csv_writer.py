"""
CSV emission with byte-stable number formatting.

Floats are written with their shortest round-trip decimal (repr) and NaN as
an empty cell; integers and strings as-is. Identical results always produce
identical files.
"""
import csv
import logging
import math
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)


def format_value(value) -> str:
    """Shortest round-trip text of a CSV cell."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    return str(value)


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """
    Write rows under a header, creating parent directories.

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
            count += 1
    logger.debug(f"Wrote {count} rows to {path}")
    return path


def read_csv(path: Union[str, Path]) -> list:
    """Rows as dictionaries of strings."""
    with Path(path).open(newline="") as f:
        return list(csv.DictReader(f))
