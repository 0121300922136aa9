import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

from ranlab.core.config import settings

logger = logging.getLogger(__name__)


@dataclass
class SeedOutcome:
    """
    What one per-seed task hands back to the harness.

    Attributes:
        seed: The experiment seed
        rows: Summary rows, merged into the aggregate table
        files: Paths written by the task, relative to the run directory
        extras: Plot inputs (small, picklable)
    """

    seed: int
    rows: List[tuple] = field(default_factory=list)
    files: List[str] = field(default_factory=list)
    extras: Dict[str, object] = field(default_factory=dict)


def dispatch(task: Callable[..., SeedOutcome], seeds: Sequence[int], *args, jobs: int = None) -> List[SeedOutcome]:
    """
    Run task(seed, *args) for every seed, in a process pool when jobs > 1.

    Every seed's work depends only on its own seed, so the outcome list (sorted
    by seed) is the same whatever the number of workers.

    Args:
        task: Module-level (picklable) per-seed function
        seeds: Experiment seeds
        *args: Extra positional arguments shared by all seeds
        jobs: Worker processes; settings.jobs if None

    Returns:
        Outcomes sorted by seed
    """
    jobs = settings.jobs if jobs is None else jobs
    jobs = max(1, min(int(jobs), len(seeds)))

    if jobs == 1:
        outcomes = [task(seed, *args) for seed in seeds]
    else:
        logger.info(f"Dispatching {len(seeds)} seeds to {jobs} worker processes")
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(task, seed, *args) for seed in seeds]
            outcomes = [f.result() for f in futures]

    return sorted(outcomes, key=lambda o: o.seed)
