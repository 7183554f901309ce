"""
Timing and metrics for promocure stages
"""

import logging
import math
import time
from functools import wraps
from pathlib import Path
from typing import Callable, Optional, Union

from prometheus_client import CollectorRegistry, Counter, Histogram, Summary, write_to_textfile

logger = logging.getLogger(__name__)

# private registry; the process-wide default one is left untouched
REGISTRY = CollectorRegistry()

stage_duration = Histogram(
    "promocure_stage_duration_seconds",
    "Wall-clock duration of a pipeline stage",
    ["stage"],
    buckets=(0.01, 0.1, 0.5, 1.0, 5.0, 15.0, 60.0, 300.0, 1800.0, float("inf")),
    registry=REGISTRY,
)
stage_failures = Counter(
    "promocure_stage_failures_total",
    "Stages that raised",
    ["stage", "error_type"],
    registry=REGISTRY,
)
iteration_cost = Summary(
    "promocure_seconds_per_iteration",
    "Sampling-loop seconds per MH iteration, one observation per chain",
    registry=REGISTRY,
)


class Stopwatch:
    """Wall-clock timer usable as a context manager; observed under ``stage`` when given"""

    def __init__(self, label: str = "", iterations: int = 0, stage: Optional[str] = None):
        self.label = label
        self.iterations = iterations
        self.stage = stage
        self.started: Optional[float] = None
        self.elapsed = 0.0

    def __enter__(self) -> "Stopwatch":
        self.started = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self.elapsed = time.perf_counter() - self.started
        if self.stage:
            stage_duration.labels(stage=self.stage).observe(self.elapsed)
        if self.label:
            logger.debug("%s took %.3fs", self.label, self.elapsed)

    @property
    def per_iteration(self) -> float:
        """Seconds per iteration over the timed block"""
        if self.iterations <= 0:
            return 0.0
        return self.elapsed / self.iterations


def monitor_performance(label: Optional[str] = None):
    """Decorator timing the wrapped function into the stage histogram"""
    def decorator(func: Callable):
        name = label or func.__qualname__

        @wraps(func)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                return func(*args, **kwargs)
            except Exception as e:
                stage_failures.labels(stage=name, error_type=type(e).__name__).inc()
                raise
            finally:
                duration = time.perf_counter() - start
                stage_duration.labels(stage=name).observe(duration)
                logger.debug("%s finished in %.3fs", name, duration)

        return wrapper

    return decorator


def record_iteration_cost(seconds: float) -> None:
    if math.isfinite(seconds):
        iteration_cost.observe(seconds)


def write_metrics(path: Union[str, Path]) -> Path:
    """Dump the registry in the Prometheus text format"""
    path = Path(path)
    write_to_textfile(str(path), REGISTRY)
    return path
