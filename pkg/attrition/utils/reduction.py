from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, Tuple, TypeVar

import numpy as np  # type: ignore

T = TypeVar("T")
R = TypeVar("R")


def map_blocks(func: Callable[[T], R], blocks: Sequence[T], workers: int = 1) -> List[R]:
    """
    Apply func to every block, in parallel if workers > 1. Results keep the
    block order, so reductions over them do not depend on the worker count.
    """
    if workers <= 1 or len(blocks) <= 1:
        return [func(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, blocks))


def mean_and_se(values: np.ndarray) -> Tuple[float, float]:
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        return float("nan"), float("nan")
    if np.all(values == values[0]):
        return float(values[0]), 0.0
    mean = float(np.sum(values) / n)
    if n == 1:
        return mean, 0.0
    se = float(np.std(values, ddof=1) / np.sqrt(n))
    return mean, se
