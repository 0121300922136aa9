"""
SVG figures of the three experiments.

Figures are rendered with the Agg backend and a fixed SVG hash salt and no
date metadata, so re-running an experiment rewrites identical files.
"""
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "ranlab"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"✓ Wrote figure {path}")
    return path


def plot_gain_bars(gains: Dict[Tuple[str, int], float], path: Union[str, Path]) -> Path:
    """
    Grouped bars of gain% over the rule-based baseline, one group per feature
    count and one bar per scheme.

    Args:
        gains: {(scheme, feature_count): gain_pct}
        path: Output SVG path
    """
    schemes = sorted({s for s, _ in gains})
    counts = sorted({c for _, c in gains})
    width = 0.8 / max(len(schemes), 1)

    fig, ax = plt.subplots(figsize=(6, 4))
    for i, scheme in enumerate(schemes):
        xs = [k + i * width for k in range(len(counts))]
        ys = [gains.get((scheme, c), 0.0) for c in counts]
        ax.bar(xs, ys, width=width, label=scheme)
    ax.set_xticks([k + width * (len(schemes) - 1) / 2 for k in range(len(counts))])
    ax.set_xticklabels([f"{c} features" for c in counts])
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_ylabel("gain over rule-based policy (%)")
    ax.legend()
    return _save(fig, path)


def plot_rate_region(
    boundary: Sequence[Tuple[float, float]],
    trajectories: Dict[str, List[Tuple[float, float]]],
    path: Union[str, Path],
) -> Path:
    """
    Oracle boundary with learned rate trajectories.

    Args:
        boundary: (r1, r2) oracle points ordered by r1
        trajectories: {label: [(r1, r2), ...]}; labels containing "no PAE" are dashed
        path: Output SVG path
    """
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([p[0] for p in boundary], [p[1] for p in boundary], color="black", label="rate region boundary")
    for label in sorted(trajectories):
        points = trajectories[label]
        style = "--" if "no PAE" in label else "-"
        ax.plot([p[0] for p in points], [p[1] for p in points], style, marker=".", markersize=3, label=label)
    ax.set_xlabel("r1 (bits/s/Hz)")
    ax.set_ylabel("r2 (bits/s/Hz)")
    ax.legend(fontsize="small")
    return _save(fig, path)


def plot_rate_distortion(
    curves: Dict[str, List[Tuple[int, float]]],
    path: Union[str, Path],
) -> Path:
    """
    NMSE against feedback bits.

    Args:
        curves: {label: [(feedback_bits, nmse_db), ...]}
        path: Output SVG path
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    for label in sorted(curves):
        points = sorted(curves[label])
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=label)
    ax.set_xlabel("feedback bits per report")
    ax.set_ylabel("NMSE (dB)")
    ax.legend()
    return _save(fig, path)
