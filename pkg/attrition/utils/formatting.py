from typing import Any
import json
import math

import numpy as np  # type: ignore


def to_jsonable(value: Any) -> Any:
    """numpy scalars and arrays as plain Python values, for json.dumps."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dump_json(data: Any) -> str:
    """Deterministic JSON: sorted keys, fixed indent, trailing newline."""
    return json.dumps(data, sort_keys=True, indent=2, default=to_jsonable) + "\n"


def format_estimate(mean: float, se: float) -> str:
    if math.isnan(mean):
        return "n/a"
    if se == 0 or math.isnan(se):
        return f"{mean:.6g}"
    return f"{mean:.6g} +/- {se:.2g}"
