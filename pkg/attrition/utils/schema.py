from typing import Any, Dict, Iterable, List, Tuple
from functools import reduce

from pandas import DataFrame, Series  # type: ignore

import attrition.constants as ac

Schema = List[Tuple[str, str]]

PAYOFF_SCHEMA: Schema = [
    (ac.COL_SCENARIO, "object"),
    (ac.COL_X0, "float64"),
    (ac.COL_PLAYER, "int64"),
    (ac.COL_ESTIMATOR, "object"),
    (ac.COL_MEAN, "float64"),
    (ac.COL_SE, "float64"),
    (ac.COL_N, "int64"),
    (ac.COL_SURVIVAL, "float64"),
    (ac.COL_TAIL, "float64"),
    (ac.COL_TAIL_OK, "bool"),
]

GAP_SCHEMA: Schema = [
    (ac.COL_X0, "float64"),
    (ac.COL_PLAYER, "int64"),
    (ac.COL_VALUE, "float64"),
    (ac.COL_MEAN, "float64"),
    (ac.COL_SE, "float64"),
    ("gap", "float64"),
    ("allowed", "float64"),
    (ac.COL_TAIL_OK, "bool"),
    ("passed", "bool"),
]

DENSITY_SCHEMA: Schema = [
    (ac.COL_STATE, "float64"),
    (ac.COL_DENSITY, "float64"),
]


def path_schema(levels: Iterable[float]) -> Schema:
    """Columns of `attrition simulate`, one local time column per level."""
    schema = [
        (ac.COL_SCENARIO, "object"),
        (ac.COL_X0, "float64"),
        (ac.COL_PATH, "int64"),
        (ac.COL_TIME, "float64"),
        (ac.COL_STATE, "float64"),
    ]
    return schema + [(local_time_col(y), "float64") for y in levels]


def local_time_col(y: float) -> str:
    return f"L[{y:g}]"


def empty_df_from_schema(schema: Iterable[Tuple[str, str]]) -> DataFrame:
    def reducer(acc: Dict, x: Tuple[str, str]):
        acc[x[0]] = Series(dtype=x[1])
        return acc

    return DataFrame(reduce(reducer, schema, {}))


def df_from_rows(rows: Iterable[Dict[str, Any]], schema: Schema) -> DataFrame:
    """Frame with the schema's column order and dtypes; keys outside the schema are dropped."""
    rows = list(rows)
    if not rows:
        return empty_df_from_schema(schema)
    df = DataFrame(rows)
    return df[[name for name, _ in schema]].astype(dict(schema))
