"""
Best replies against a fixed Markov strategy of the opponent.

solve_best_reply discretizes the obstacle problem

    max( 1/2 sigma^2 v'' + b v' - r v + kappa (G - v), R - v ) = 0

off the opponent's stopping set (v = G on it), with the interface row
a (G - v) + 1/2 (v'+ - v'-) = 0 at each atom of the opponent's intensity,
and solves it by policy iteration. concave_envelope_best_reply covers the
driftless undiscounted case with upper concave hulls.
"""
from argparse import Namespace
from configparser import ConfigParser
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np  # type: ignore
import pandas as pd  # type: ignore
from scipy import sparse  # type: ignore
from scipy.sparse import linalg as sparse_linalg  # type: ignore

import attrition.constants as ac
from attrition.diffusion import DiffusionModel, Interval
from attrition.errors import ErrMsg, InputError, NumericalError
from attrition.measures import ClosedSet
from attrition.payoffs import PayoffSpec
from attrition.strategies import MarkovStrategy
from attrition.utils.reduction import map_blocks

Closure = Union[str, float]
MIN_NODES = 3


def parse_closure(value: Closure) -> Closure:
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip().lower()
    if text in (ac.CLOSURE_OBSTACLE, ac.CLOSURE_ZERO):
        return text
    try:
        return float(text)
    except ValueError:
        raise InputError(
            ErrMsg.SCENARIO_INVALID.value.format(reason=f"unknown boundary closure {value!r}")
        )


@dataclass(frozen=True)
class SolverTolerances:
    tol_v: float = 1e-8
    max_iter: int = 200
    closure: Closure = ac.CLOSURE_OBSTACLE
    # set comparisons are made up to set_cells grid cells
    set_cells: float = 2.0

    def __post_init__(self) -> None:
        for name in ("tol_v", "max_iter", "set_cells"):
            value = getattr(self, name)
            if not value > 0:
                raise InputError(ErrMsg.NON_POSITIVE.value.format(name=name, value=value))
        object.__setattr__(self, "closure", parse_closure(self.closure))

    @property
    def tol_set(self) -> float:
        return 10.0 * self.tol_v

    @classmethod
    def from_config(
        cls, cfg: ConfigParser, cli_args: Optional[Namespace] = None
    ) -> "SolverTolerances":
        tol_v = cfg.getfloat("solver", "tol_v")
        if cli_args is not None and getattr(cli_args, "tol", None) is not None:
            tol_v = cli_args.tol
        return cls(
            tol_v=tol_v,
            max_iter=cfg.getint("solver", "max_iter"),
            closure=cfg.get("solver", "closure"),
            set_cells=cfg.getfloat("verification", "set_cells"),
        )


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing nodes inside the state space."""

    nodes: np.ndarray
    interval: Interval = field(default_factory=Interval)

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        if len(nodes) < MIN_NODES:
            raise InputError(ErrMsg.GRID_TOO_SMALL.value.format(n=MIN_NODES, got=len(nodes)))
        if np.any(np.diff(nodes) <= 0):
            raise InputError(
                ErrMsg.SCENARIO_INVALID.value.format(reason="grid nodes must be strictly increasing")
            )
        for x in (nodes[0], nodes[-1]):
            self.interval.require(float(x))
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def covering(
        cls,
        interval: Interval,
        n: int,
        special_points: Iterable[float] = (),
        lower: Optional[float] = None,
        upper: Optional[float] = None,
    ) -> "Grid":
        """
        Uniform nodes on [lower, upper] (the endpoints of I by default) with
        the special points merged in. Endpoints of I are never nodes.
        """
        lo = interval.lower if lower is None else lower
        hi = interval.upper if upper is None else upper
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise InputError(
                ErrMsg.SCENARIO_INVALID.value.format(
                    reason="an unbounded state space needs explicit grid bounds"
                )
            )
        base = np.linspace(lo, hi, n + 2)
        base = base[interval.contains(base)]
        h = (hi - lo) / (n + 1)
        special = np.asarray(
            sorted({float(p) for p in special_points if lo <= p <= hi and bool(interval.contains(p))}),
            dtype=float,
        )
        if special.size:
            near = np.min(np.abs(base[:, None] - special[None, :]), axis=1) < h / 4.0
            base = base[~near]
        return cls(np.unique(np.concatenate([base, special])), interval)

    @property
    def h(self) -> float:
        return float(np.max(np.diff(self.nodes)))

    def __len__(self) -> int:
        return len(self.nodes)

    def index_of(self, x: float, atol: float = 1e-12) -> Optional[int]:
        k = int(np.searchsorted(self.nodes, x))
        for j in (k - 1, k):
            if 0 <= j < len(self.nodes) and abs(self.nodes[j] - x) <= atol * max(1.0, abs(x)):
                return j
        return None

    def require(self, points: Iterable[float]) -> None:
        """Every special point inside I must be a node."""
        for p in points:
            if not bool(self.interval.contains(p)):
                continue
            if self.index_of(p) is None:
                raise InputError(ErrMsg.GRID_MISSING_POINT.value.format(x=p))

    def refined_inside(self, lo: float, hi: float) -> "Grid":
        """Midpoints added between consecutive nodes that both lie in [lo, hi]."""
        x = self.nodes
        inside = (x[:-1] >= lo) & (x[1:] <= hi)
        mids = 0.5 * (x[:-1] + x[1:])[inside]
        return Grid(np.unique(np.concatenate([x, mids])), self.interval)


@dataclass(frozen=True, eq=False)
class ValueFunction:
    grid: Grid
    values: np.ndarray
    # complementarity residual per node, in units of v
    residuals: np.ndarray
    R: np.ndarray
    G: np.ndarray
    stop: np.ndarray
    pinned: np.ndarray
    # (atom location, a (G - v) + 1/2 (v'+ - v'-)) per opponent atom
    atom_residuals: Tuple[Tuple[float, float], ...] = ()
    iterations: int = 0
    # re-solves with continuation forced on a node mask
    resolver: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, repr=False, compare=False
    )

    def __call__(self, x) -> np.ndarray:
        return np.interp(x, self.grid.nodes, self.values)

    def max_residual(self) -> float:
        return float(np.max(self.residuals))

    def max_atom_residual(self) -> float:
        if not self.atom_residuals:
            return 0.0
        return max(abs(r) for _, r in self.atom_residuals)


@dataclass(frozen=True)
class BestReplyResult:
    value: ValueFunction
    S_bar: ClosedSet
    S_under: ClosedSet
    tol_set: float
    tolerances: SolverTolerances
    method: str = "policy-iteration"

    def to_dict(self) -> Dict[str, object]:
        return {
            "method": self.method,
            "S_bar": self.S_bar.to_list(),
            "S_under": self.S_under.to_list(),
            "tol_set": self.tol_set,
            "tol_v": self.tolerances.tol_v,
            "closure": self.tolerances.closure,
            "iterations": self.value.iterations,
            "nodes": len(self.value.grid),
            "h": self.value.grid.h,
            "max_residual": self.value.max_residual(),
            "max_atom_residual": self.value.max_atom_residual(),
        }


def _boundary_targets(
    R: np.ndarray, closure: Closure, shift: float
) -> Tuple[float, float]:
    out = []
    for k in (0, -1):
        if closure == ac.CLOSURE_OBSTACLE:
            c = R[k]
        elif closure == ac.CLOSURE_ZERO:
            c = 0.0
        else:
            c = float(closure)
        out.append(max(R[k], c) + shift)
    return out[0], out[1]


def _one_sided(x: np.ndarray, k: int, direction: int) -> Dict[int, float]:
    """Stencil of v'(x_k) from the nodes on one side, second order if possible."""
    j1, j2 = k + direction, k + 2 * direction
    d1 = x[j1] - x[k]
    if 0 <= j2 < len(x):
        d2 = x[j2] - x[k]
        c1 = d2 / (d1 * (d2 - d1))
        c2 = -d1 / (d2 * (d2 - d1))
        return {k: -(c1 + c2), j1: c1, j2: c2}
    return {k: -1.0 / d1, j1: 1.0 / d1}


class ObstacleProblem(object):
    """
    The discrete obstacle problem of one player against a fixed opponent.

    Rows of the continuation operator are written as A v = b with a
    positive diagonal; pinned rows (opponent's stopping set and the two
    boundary nodes) are identity rows.
    """

    def __init__(
        self,
        model: DiffusionModel,
        spec: PayoffSpec,
        opp: MarkovStrategy,
        grid: Grid,
        tol: SolverTolerances,
        boundary_shift: float = 0.0,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.grid = grid
        self.tol = tol
        if logger is not None:
            self.logger = logger
        else:
            self.logger = logging.getLogger(ac.DEFAULT_LOGGER_NAME)

        x = grid.nodes
        n = len(x)
        self.R, self.G = spec.rewards(x)
        self.pinned = opp.stop_set.contains(x)
        self.target = np.where(self.pinned, self.G, 0.0)
        lo_val, hi_val = _boundary_targets(self.R, tol.closure, boundary_shift)
        for k, val in ((0, lo_val), (n - 1, hi_val)):
            if not self.pinned[k]:
                self.pinned[k] = True
                self.target[k] = val

        self.atoms: Dict[int, float] = {}
        for y, a in opp.intensity.atoms:
            k = grid.index_of(y)
            if k is None:
                raise InputError(ErrMsg.GRID_MISSING_POINT.value.format(x=y))
            if not self.pinned[k]:
                self.atoms[k] = a

        rows: List[int] = []
        cols: List[int] = []
        vals: List[float] = []
        rhs = np.zeros(n)

        pinned_idx = np.flatnonzero(self.pinned)
        rows.extend(pinned_idx.tolist())
        cols.extend(pinned_idx.tolist())
        vals.extend([1.0] * len(pinned_idx))
        rhs[pinned_idx] = self.target[pinned_idx]

        free = np.flatnonzero(~self.pinned)
        free = np.asarray([k for k in free if k not in self.atoms], dtype=int)
        if len(free):
            xk = x[free]
            hm = xk - x[free - 1]
            hp = x[free + 1] - xk
            s2 = model.volatility_at(xk) ** 2
            b = model.drift_at(xk)
            lower = s2 / (hm * (hm + hp)) + np.maximum(-b, 0.0) / hm
            upper = s2 / (hp * (hm + hp)) + np.maximum(b, 0.0) / hp
            kappa = opp.intensity.density_at(xk) * s2
            diag = lower + upper + model.discount + kappa
            rows.extend(np.concatenate([free, free, free]).tolist())
            cols.extend(np.concatenate([free, free - 1, free + 1]).tolist())
            vals.extend(np.concatenate([diag, -lower, -upper]).tolist())
            rhs[free] = kappa * self.G[free]

        for k, a in self.atoms.items():
            row: Dict[int, float] = {k: a}
            for j, c in _one_sided(x, k, +1).items():
                row[j] = row.get(j, 0.0) - 0.5 * c
            for j, c in _one_sided(x, k, -1).items():
                row[j] = row.get(j, 0.0) + 0.5 * c
            for j, c in row.items():
                rows.append(k)
                cols.append(j)
                vals.append(c)
            rhs[k] = a * self.G[k]

        self.A = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
        self.b = rhs
        self.diag = self.A.diagonal()

    def _system(self, stop: np.ndarray) -> Tuple[sparse.csr_matrix, np.ndarray]:
        s = stop.astype(float)
        A = sparse.diags(s) + sparse.diags(1.0 - s) @ self.A
        rhs = np.where(stop, self.R, self.b)
        return A.tocsc(), rhs

    def solve(self, forced: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, int]:
        """Howard policy iteration; nodes in `forced` always continue."""
        n = len(self.grid)
        forced = np.zeros(n, dtype=bool) if forced is None else forced
        choosable = ~self.pinned & ~forced
        switch = self.tol.tol_v * 1e-3
        stop = np.zeros(n, dtype=bool)
        for it in range(1, self.tol.max_iter + 1):
            A, rhs = self._system(stop)
            v = sparse_linalg.spsolve(A, rhs)
            if not np.all(np.isfinite(v)):
                raise NumericalError(
                    ErrMsg.NON_FINITE_COEFFICIENT.value.format(name="value", x="grid")
                )
            cont = self.continuation_residual(v)
            obst = v - self.R
            new = stop.copy()
            new[choosable & (obst < cont - switch)] = True
            new[choosable & (cont < obst - switch)] = False
            if np.array_equal(new, stop):
                self.logger.debug(f"Policy iteration converged after {it} iterations")
                return v, stop, it
            stop = new
        raise NumericalError(ErrMsg.NOT_CONVERGED.value.format(max_iter=self.tol.max_iter))

    def continuation_residual(self, v: np.ndarray) -> np.ndarray:
        return (self.A @ v - self.b) / self.diag

    def residuals(self, v: np.ndarray) -> np.ndarray:
        out = np.abs(np.minimum(self.continuation_residual(v), v - self.R))
        out[self.pinned] = np.abs(v - self.target)[self.pinned]
        return out

    def atom_residuals(self, v: np.ndarray) -> Tuple[Tuple[float, float], ...]:
        raw = self.A @ v - self.b
        # the row holds a v - 1/2 jump = a G, so its negation is the interface expression
        return tuple((float(self.grid.nodes[k]), float(-raw[k])) for k in sorted(self.atoms))


def solve_best_reply(
    model: DiffusionModel,
    spec_i: PayoffSpec,
    opp: MarkovStrategy,
    grid: Grid,
    tol: Optional[SolverTolerances] = None,
    workers: int = 1,
    logger: Optional[logging.Logger] = None,
) -> BestReplyResult:
    tol = tol or SolverTolerances()
    grid.require(opp.special_points())
    if opp.intensity.densities:
        lo, hi = opp.intensity.carrier_bounds()
        if lo < grid.nodes[0] or hi > grid.nodes[-1]:
            raise InputError(
                ErrMsg.LEVELS_DO_NOT_COVER.value.format(
                    lo=grid.nodes[0], hi=grid.nodes[-1], a=lo, b=hi
                )
            )
    spec_i.check(grid.nodes)
    problem = ObstacleProblem(model, spec_i, opp, grid, tol, logger=logger)
    v, stop, iterations = problem.solve()

    def resolve(forced: np.ndarray) -> np.ndarray:
        return problem.solve(forced)[0]

    value = ValueFunction(
        grid=grid,
        values=v,
        residuals=problem.residuals(v),
        R=problem.R,
        G=problem.G,
        stop=stop,
        pinned=problem.pinned,
        atom_residuals=problem.atom_residuals(v),
        iterations=iterations,
        resolver=resolve,
    )
    S_bar, S_under = extract_stopping_sets(value, spec_i, tol.tol_set, workers)
    return BestReplyResult(value, S_bar, S_under, tol.tol_set, tol)


def upper_hull(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the upper concave hull of points sorted by x (monotone chain)."""
    hull: List[int] = []
    for k in range(len(x)):
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            cross = (x[j] - x[i]) * (y[k] - y[i]) - (y[j] - y[i]) * (x[k] - x[i])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(k)
    return np.asarray(hull, dtype=int)


def _envelope(
    x: np.ndarray, obstacle: np.ndarray, pinned: np.ndarray, target: np.ndarray, forced: np.ndarray
) -> np.ndarray:
    """Per run between pinned nodes, the smallest concave majorant of the free obstacle."""
    v = np.where(pinned, target, obstacle)
    anchors = np.flatnonzero(pinned)
    for left, right in zip(anchors[:-1], anchors[1:]):
        if right - left < 2:
            continue
        idx = np.arange(left, right + 1)
        keep = pinned[idx] | ~forced[idx]
        pts = idx[keep]
        hull = pts[upper_hull(x[pts], v[pts])]
        v[left + 1:right] = np.interp(x[left + 1:right], x[hull], v[hull])
    return v


def concave_envelope_best_reply(
    spec_i: PayoffSpec,
    opp_stop: ClosedSet,
    grid: Grid,
    tol: Optional[SolverTolerances] = None,
    model: Optional[DiffusionModel] = None,
    workers: int = 1,
    logger: Optional[logging.Logger] = None,
) -> BestReplyResult:
    """
    Best reply for b = 0 and r = 0: on each component of I minus the
    opponent's stopping set, the smallest concave function above R pinned
    to G (or to the boundary closure) at the ends.
    """
    tol = tol or SolverTolerances()
    logger = logger or logging.getLogger(ac.DEFAULT_LOGGER_NAME)
    if model is not None and (not model.is_driftless(grid.nodes) or model.discount != 0):
        raise InputError(
            ErrMsg.NOT_DRIFTLESS.value.format(
                drift=float(np.max(np.abs(model.drift_at(grid.nodes)))), discount=model.discount
            )
        )
    grid.require(opp_stop.endpoints())
    spec_i.check(grid.nodes)
    x = grid.nodes
    R, G = spec_i.rewards(x)
    pinned = opp_stop.contains(x)
    target = np.where(pinned, G, 0.0)
    lo_val, hi_val = _boundary_targets(R, tol.closure, 0.0)
    for k, val in ((0, lo_val), (len(x) - 1, hi_val)):
        if not pinned[k]:
            pinned[k] = True
            target[k] = val
    no_force = np.zeros(len(x), dtype=bool)
    v = _envelope(x, R, pinned, target, no_force)

    cav_G = _envelope(x, G, pinned, target, no_force)
    excess = float(np.max(v - cav_G))
    if excess > tol.tol_v:
        logger.warning(f"Concave envelope exceeds the envelope of G by {excess:.3g}")

    residuals = np.where(pinned, 0.0, np.abs(np.minimum(_second_difference(x, v), v - R)))
    value = ValueFunction(
        grid=grid,
        values=v,
        residuals=residuals,
        R=R,
        G=G,
        stop=~pinned & (np.abs(v - R) <= tol.tol_v),
        pinned=pinned,
        resolver=lambda forced: _envelope(x, R, pinned, target, forced),
    )
    S_bar, S_under = extract_stopping_sets(value, spec_i, tol.tol_set, workers)
    return BestReplyResult(value, S_bar, S_under, tol.tol_set, tol, method="concave-envelope")


def _second_difference(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """-(v'') scaled to units of v, zero at the two end nodes."""
    out = np.zeros(len(x))
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    slope_l = (v[1:-1] - v[:-2]) / hm
    slope_r = (v[2:] - v[1:-1]) / hp
    out[1:-1] = (slope_l - slope_r) * (hm * hp) / (hm + hp)
    return out


def extract_stopping_sets(
    value: ValueFunction, spec: PayoffSpec, tol_set: float, workers: int = 1
) -> Tuple[ClosedSet, ClosedSet]:
    """
    S_bar from the contact set {|v - R| <= tol_set (1 + |G - R|)}. A
    component of S_bar belongs to S_under when forcing continuation on it
    and one node on each side lowers v at its center by more than the
    tolerance.
    """
    grid = value.grid
    x = grid.nodes
    R, G = spec.rewards(x)
    tol_node = tol_set * (1.0 + np.abs(G - R))
    contact = np.abs(value.values - R) <= tol_node
    S_bar = ClosedSet.from_mask(x, contact, grid.interval)
    if value.resolver is None or not np.any(contact):
        return S_bar, ClosedSet.empty()

    runs = _runs(contact)

    def probe(run: Tuple[int, int]) -> bool:
        start, end = run
        lo, hi = max(0, start - 1), min(len(x) - 1, end + 1)
        forced = np.zeros(len(x), dtype=bool)
        forced[lo:hi + 1] = True
        forced &= ~value.pinned
        if not np.any(forced):
            return False
        center = (start + end) // 2
        fresh = value.resolver(forced)
        return bool(value.values[center] - fresh[center] > tol_node[center])

    kept = map_blocks(probe, runs, workers)
    mask = np.zeros(len(x), dtype=bool)
    for (start, end), keep in zip(runs, kept):
        if keep:
            mask[start:end + 1] = True
    return S_bar, ClosedSet.from_mask(x, mask, grid.interval)


def _runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    ends = np.concatenate([idx[breaks], [idx[-1]]])
    return [(int(a), int(b)) for a, b in zip(starts, ends)]


@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "passed": self.passed,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class PbrReport:
    conditions: Tuple[ConditionResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    @property
    def failed(self) -> List[str]:
        return [c.name for c in self.conditions if not c.passed]

    def __getitem__(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> Dict[str, object]:
        return {"passed": self.passed, "conditions": [c.to_dict() for c in self.conditions]}


def _mass_off(strategy: MarkovStrategy, allowed: ClosedSet, lo: float, hi: float) -> float:
    """Intensity mass outside `allowed`, counted on [lo, hi]."""
    mu = strategy.intensity
    total = 0.0
    for y, a in mu.atoms:
        if not bool(allowed.contains(y)):
            total += a
    gaps = allowed.complement(Interval(lo, hi)) if lo < hi else []
    for a, b in gaps:
        for piece in mu.densities:
            total += float(piece.mass_between(a, b))
    return total


def pbr_check(
    candidate: MarkovStrategy,
    result: BestReplyResult,
    opp: MarkovStrategy,
    tol: Optional[SolverTolerances] = None,
) -> PbrReport:
    """
    Checks that the candidate is a perfect best reply given the solved
    problem: S_under in S in S_bar up to set_cells grid cells, intensity
    carried by S_bar and the opponent's stopping set, and no intensity on
    the part of the opponent's stopping set where G > R.
    """
    tol = tol or result.tolerances
    value = result.value
    x = value.grid.nodes
    lo, hi = float(x[0]), float(x[-1])
    cell_tol = tol.set_cells * value.grid.h
    mass_tol = tol.tol_set
    S = candidate.stop_set.clipped(lo, hi)
    S_bar = result.S_bar.clipped(lo, hi)
    S_under = result.S_under.clipped(lo, hi)

    lower = S_under.excess(S)
    upper = S.excess(S_bar)

    allowed = ClosedSet.of(
        [(a - cell_tol, b + cell_tol) for a, b in result.S_bar.union(opp.stop_set).components]
    )
    off_support = _mass_off(candidate, allowed, lo, hi)

    strict = ClosedSet.from_mask(x, opp.stop_set.contains(x) & (value.G - value.R > result.tol_set))
    on_strict = 0.0
    for a, b in strict.components:
        on_strict += candidate.intensity.mass_in(a, b, closed=True)

    return PbrReport(
        conditions=(
            ConditionResult(
                "lower_inclusion", lower <= cell_tol, lower, cell_tol, f"S_under={result.S_under}"
            ),
            ConditionResult(
                "upper_inclusion", upper <= cell_tol, upper, cell_tol, f"S_bar={result.S_bar}"
            ),
            ConditionResult(
                "intensity_support", off_support <= mass_tol, off_support, mass_tol, str(candidate)
            ),
            ConditionResult(
                "stop_region_refinement", on_strict <= mass_tol, on_strict, mass_tol, str(strict)
            ),
        )
    )


def boundary_sensitivity(
    model: DiffusionModel,
    spec_i: PayoffSpec,
    opp: MarkovStrategy,
    grid: Grid,
    probes: Sequence[float],
    tol: Optional[SolverTolerances] = None,
    delta: float = 1.0,
) -> float:
    """Largest change of v at the probes per unit shift of both boundary values."""
    tol = tol or SolverTolerances()
    base, _, _ = ObstacleProblem(model, spec_i, opp, grid, tol).solve()
    moved, _, _ = ObstacleProblem(model, spec_i, opp, grid, tol, boundary_shift=delta).solve()
    probes = np.asarray(probes, dtype=float)
    diff = np.interp(probes, grid.nodes, moved) - np.interp(probes, grid.nodes, base)
    return float(np.max(np.abs(diff)) / delta)


def fit_truncation(
    model: DiffusionModel,
    spec_i: PayoffSpec,
    opp: MarkovStrategy,
    n: int,
    probes: Sequence[float],
    tol: Optional[SolverTolerances] = None,
    width: float = 1.0,
    max_doublings: int = 8,
    logger: Optional[logging.Logger] = None,
) -> Grid:
    """
    Grid for a state space with infinite endpoints, widened until v at the
    probes moves by less than tol_v / 10 per unit shift of the boundary.
    Bounded state spaces get the plain covering grid.
    """
    tol = tol or SolverTolerances()
    logger = logger or logging.getLogger(ac.DEFAULT_LOGGER_NAME)
    interval = model.state_space
    special = list(opp.special_points()) + list(probes)
    if interval.is_bounded:
        return Grid.covering(interval, n, special)
    a, b = min(special), max(special)
    for _ in range(max_doublings + 1):
        lower = a - width if math.isinf(interval.lower) else None
        upper = b + width if math.isinf(interval.upper) else None
        grid = Grid.covering(interval, n, special, lower, upper)
        sensitivity = boundary_sensitivity(model, spec_i, opp, grid, probes, tol)
        logger.debug(f"Truncation width {width:g}: boundary sensitivity {sensitivity:.3g}")
        if sensitivity < tol.tol_v / 10.0:
            return grid
        width *= 2.0
    logger.warning(
        f"Boundary sensitivity {sensitivity:.3g} still above {tol.tol_v / 10.0:.3g} "
        f"at truncation width {width / 2.0:g}"
    )
    return grid


def value_frame(result: BestReplyResult) -> pd.DataFrame:
    value = result.value
    x = value.grid.nodes
    return pd.DataFrame(
        {
            ac.COL_STATE: x,
            ac.COL_VALUE: value.values,
            ac.COL_R: value.R,
            ac.COL_G: value.G,
            ac.COL_RESIDUAL: value.residuals,
            ac.COL_IN_S_BAR: result.S_bar.contains(x),
        }
    )
