"""Dispatch independent work units (chains, replicates) to worker processes"""

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Any, Callable, List, Optional, Sequence

from tqdm import tqdm

logger = logging.getLogger(__name__)


def run_ordered(
    fn: Callable[[Any], Any],
    tasks: Sequence[Any],
    workers: int = 1,
    desc: Optional[str] = None,
) -> List[Any]:
    """Run ``fn`` over ``tasks`` and return results in task order.

    ``fn`` and every task must be picklable when ``workers > 1``. Results never
    depend on the worker count: each task carries its own seed stream.
    """
    tasks = list(tasks)
    progress = tqdm(total=len(tasks), desc=desc, disable=desc is None or len(tasks) < 2)
    results: List[Any] = [None] * len(tasks)

    if workers <= 1 or len(tasks) < 2:
        for index, task in enumerate(tasks):
            results[index] = fn(task)
            progress.update()
        progress.close()
        return results

    logger.info("dispatching %d tasks to %d workers", len(tasks), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn, task): index for index, task in enumerate(tasks)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
            progress.update()
    progress.close()
    return results
