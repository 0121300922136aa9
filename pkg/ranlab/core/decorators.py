"""
Reusable decorators for the pipelines.
"""
import functools
import logging
import time


def timed_stage(stage: str):
    """
    Log the start, finish and wall-clock duration of a pipeline stage.

    Args:
        stage: Human-readable stage name used in the log lines

    Returns:
        A decorator that wraps the stage function without changing its result

    Example:
        @timed_stage("tilt training")
        def train_all(...):
            ...
    """
    def decorator(func):
        logger = logging.getLogger(func.__module__)

        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            logger.info(f"Starting {stage}")
            started = time.perf_counter()
            try:
                return func(*args, **kwargs)
            finally:
                elapsed = time.perf_counter() - started
                logger.info(f"✓ Finished {stage} in {elapsed:.2f}s")

        return wrapper

    return decorator
