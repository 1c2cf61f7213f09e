"""
One-dimensional time-homogeneous diffusions dX = b(X)dt + sigma(X)dW on an
open interval, Euler-Maruyama path simulation, hitting times and local time
estimates.
"""
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np  # type: ignore
from numpy.polynomial import Polynomial  # type: ignore

import attrition.constants as ac
from attrition.errors import ErrMsg, InputError, NumericalError

SeedLike = Union[int, np.random.SeedSequence]
Coefficient = Callable[[np.ndarray], np.ndarray]


def seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def seed_record(seq: np.random.SeedSequence) -> Tuple[int, Tuple[int, ...]]:
    return (int(seq.entropy), tuple(int(k) for k in seq.spawn_key))


def block_seeds(
    seed: SeedLike, n_paths: int, block_size: int
) -> List[Tuple[np.random.SeedSequence, int]]:
    """
    Split n_paths into fixed-size blocks, each with its own child seed.

    The partition depends only on (seed, n_paths, block_size), never on the
    number of workers that later process the blocks.
    """
    n_blocks = max(1, math.ceil(n_paths / block_size))
    children = seed_sequence(seed).spawn(n_blocks)
    sizes = [block_size] * (n_blocks - 1) + [n_paths - block_size * (n_blocks - 1)]
    return list(zip(children, sizes))


def n_steps_for(dt: float, horizon: float) -> int:
    if dt <= 0:
        raise InputError(ErrMsg.NON_POSITIVE.value.format(name="dt", value=dt))
    if horizon <= 0:
        raise InputError(ErrMsg.NON_POSITIVE.value.format(name="horizon", value=horizon))
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise InputError(
            ErrMsg.HORIZON_NOT_MULTIPLE.value.format(horizon=horizon, dt=dt)
        )
    return n


@dataclass(frozen=True)
class Interval:
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self) -> None:
        if not self.lower < self.upper:
            raise InputError(
                ErrMsg.EMPTY_INTERVAL.value.format(lower=self.lower, upper=self.upper)
            )

    @property
    def is_bounded(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x > self.lower) & (x < self.upper)

    def require(self, x: float) -> None:
        if not bool(self.contains(x)):
            raise InputError(
                ErrMsg.POINT_OUTSIDE_INTERVAL.value.format(x=x, interval=self)
            )

    def clamp(
        self, x: np.ndarray, distance: float = ac.BOUNDARY_CLAMP
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Push states that left I back inside; returns (states, clamped_mask)."""
        low = self.lower + distance
        high = self.upper - distance
        flags = (x < low) | (x > high)
        if np.any(flags):
            x = np.clip(x, low, high)
        return x, flags

    def interior_points(self, n: int, lo: float = -10.0, hi: float = 10.0) -> np.ndarray:
        """n points evenly spread inside I, truncated to [lo, hi] if I is unbounded."""
        a = self.lower if math.isfinite(self.lower) else lo
        b = self.upper if math.isfinite(self.upper) else hi
        return np.linspace(a, b, n + 2)[1:-1]

    def __str__(self) -> str:
        return f"({self.lower:g}, {self.upper:g})"


@dataclass(frozen=True)
class DiffusionModel:
    state_space: Interval
    drift: Coefficient
    volatility: Coefficient
    discount: float = 0.0
    name: str = "custom"
    # Admits sigma = 0; only for tests of the zero-noise identity.
    degenerate: bool = False

    def __post_init__(self) -> None:
        if self.discount < 0:
            raise InputError(ErrMsg.NEGATIVE_DISCOUNT.value.format(value=self.discount))

    @classmethod
    def logistic_martingale(cls) -> "DiffusionModel":
        """dX = X(1-X)dW on (0, 1), undiscounted."""
        return cls(
            state_space=Interval(0.0, 1.0),
            drift=Polynomial([0.0]),
            volatility=Polynomial([0.0, 1.0, -1.0]),
            discount=0.0,
            name=ac.PRESET_LOGISTIC_MARTINGALE,
        )

    @classmethod
    def brownian(cls, discount: float = 0.0) -> "DiffusionModel":
        return cls(
            state_space=Interval(),
            drift=Polynomial([0.0]),
            volatility=Polynomial([1.0]),
            discount=discount,
            name=ac.PRESET_BROWNIAN,
        )

    @classmethod
    def from_coefficients(
        cls,
        interval: Interval,
        drift: Sequence[float],
        volatility: Sequence[float],
        discount: float = 0.0,
        degenerate: bool = False,
    ) -> "DiffusionModel":
        return cls(
            state_space=interval,
            drift=Polynomial([float(c) for c in drift]),
            volatility=Polynomial([float(c) for c in volatility]),
            discount=float(discount),
            degenerate=degenerate,
        )

    def drift_at(self, x: np.ndarray) -> np.ndarray:
        b = np.broadcast_to(np.asarray(self.drift(x), dtype=float), np.shape(x))
        _require_finite(b, x, "drift")
        return b

    def volatility_at(self, x: np.ndarray) -> np.ndarray:
        s = np.broadcast_to(np.asarray(self.volatility(x), dtype=float), np.shape(x))
        _require_finite(s, x, "volatility")
        if not self.degenerate and np.any(s <= 0):
            k = int(np.argmax(np.ravel(s) <= 0))
            raise InputError(
                ErrMsg.DEGENERATE_VOLATILITY.value.format(
                    value=np.ravel(s)[k], x=np.ravel(x)[k]
                )
            )
        return s

    def is_driftless(self, points: np.ndarray, tol: float = 1e-14) -> bool:
        return bool(np.max(np.abs(self.drift_at(points))) <= tol)

    def volatility_bound(self, lo: float = -10.0, hi: float = 10.0) -> float:
        pts = self.state_space.interior_points(1001, lo, hi)
        return float(np.max(np.abs(self.volatility_at(pts))))


def _require_finite(values: np.ndarray, x: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(values)):
        k = int(np.argmax(~np.isfinite(np.ravel(values))))
        raise NumericalError(
            ErrMsg.NON_FINITE_COEFFICIENT.value.format(name=name, x=np.ravel(x)[k])
        )


class EulerScheme(object):
    """
    Streaming Euler-Maruyama stepper for a block of paths.

    Only the current and previous state vectors are kept, so long horizons
    can be simulated without storing trajectories.
    """

    def __init__(
        self,
        model: DiffusionModel,
        x0: Union[float, np.ndarray],
        dt: float,
        n_paths: int,
        rng: np.random.Generator,
        boundary_clamp: float = ac.BOUNDARY_CLAMP,
    ) -> None:
        x0_arr = np.broadcast_to(np.asarray(x0, dtype=float), (n_paths,)).copy()
        if not np.all(model.state_space.contains(x0_arr)):
            bad = x0_arr[~model.state_space.contains(x0_arr)][0]
            raise InputError(
                ErrMsg.POINT_OUTSIDE_INTERVAL.value.format(
                    x=bad, interval=model.state_space
                )
            )
        self.model = model
        self.dt = dt
        self.sqrt_dt = math.sqrt(dt)
        self.rng = rng
        self.boundary_clamp = boundary_clamp
        self.states = x0_arr
        self.clamped = np.zeros(n_paths, dtype=bool)
        self.k = 0

    def advance(self) -> Tuple[np.ndarray, np.ndarray]:
        """Move every path one step; returns (previous states, new states)."""
        prev = self.states
        b = self.model.drift_at(prev)
        s = self.model.volatility_at(prev)
        z = self.rng.standard_normal(prev.shape[0])
        nxt = prev + b * self.dt + s * self.sqrt_dt * z
        nxt, flags = self.model.state_space.clamp(nxt, self.boundary_clamp)
        self.clamped |= flags
        self.states = nxt
        self.k += 1
        return prev, nxt


@dataclass(frozen=True)
class PathSample:
    times: np.ndarray
    states: np.ndarray
    seed: Tuple[int, Tuple[int, ...]]
    scheme: str = ac.SCHEME_EULER_MARUYAMA
    clamped: bool = False

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def shifted(self, k: int) -> "PathSample":
        """The path restarted at grid index k (the shift operator on paths)."""
        return PathSample(
            times=self.times[k:] - self.times[k],
            states=self.states[k:],
            seed=self.seed,
            scheme=self.scheme,
            clamped=self.clamped,
        )


@dataclass(frozen=True)
class LocalTimeField:
    levels: np.ndarray
    times: np.ndarray
    # values[y_index, t_index]
    values: np.ndarray
    bandwidth: float

    def at_level(self, y: float, atol: float = 1e-12) -> Optional[np.ndarray]:
        idx = np.flatnonzero(np.abs(self.levels - y) <= atol)
        if len(idx) == 0:
            return None
        return self.values[idx[0]]


def simulate_path(
    model: DiffusionModel,
    x0: float,
    dt: float,
    horizon: float,
    seed: SeedLike,
    boundary_clamp: float = ac.BOUNDARY_CLAMP,
    logger: Optional[logging.Logger] = None,
) -> PathSample:
    logger = logger or logging.getLogger(ac.DEFAULT_LOGGER_NAME)
    model.state_space.require(x0)
    n = n_steps_for(dt, horizon)
    seq = seed_sequence(seed)
    scheme = EulerScheme(model, x0, dt, 1, np.random.default_rng(seq), boundary_clamp)
    states = np.empty(n + 1)
    states[0] = x0
    for k in range(1, n + 1):
        _, nxt = scheme.advance()
        states[k] = nxt[0]
    if scheme.clamped[0]:
        logger.warning(f"Path from x0={x0} was clamped at the boundary of {model.state_space}")
    return PathSample(
        times=np.arange(n + 1) * dt,
        states=states,
        seed=seed_record(seq),
        clamped=bool(scheme.clamped[0]),
    )


def simulate_terminal(
    model: DiffusionModel,
    x0: float,
    dt: float,
    horizon: float,
    n_paths: int,
    seed: SeedLike,
    block_size: int = 4096,
) -> np.ndarray:
    """Terminal states X_T of n_paths independent paths."""
    n = n_steps_for(dt, horizon)
    out = []
    for seq, size in block_seeds(seed, n_paths, block_size):
        scheme = EulerScheme(model, x0, dt, size, np.random.default_rng(seq))
        for _ in range(n):
            scheme.advance()
        out.append(scheme.states)
    return np.concatenate(out)


def _check_levels(model: DiffusionModel, levels: Iterable[float], bandwidth: float) -> np.ndarray:
    if bandwidth <= 0:
        raise InputError(ErrMsg.BAD_BANDWIDTH.value.format(value=bandwidth))
    levels = np.asarray(list(levels), dtype=float)
    if levels.size == 0:
        raise InputError(ErrMsg.EMPTY_LEVELS.value)
    for y in levels:
        model.state_space.require(float(y))
    return levels


def estimate_local_time(
    path: PathSample, model: DiffusionModel, levels: Iterable[float], bandwidth: float
) -> LocalTimeField:
    """
    Indicator-window estimate of the sigma^2-weighted local time

        L[y][t] = 1/(2 eps) * sum_{s < t} 1{|X_s - y| < eps} sigma^2(X_s) dt
    """
    levels = _check_levels(model, levels, bandwidth)
    dt = path.dt
    past = path.states[:-1]
    weight = model.volatility_at(past) ** 2 * dt / (2.0 * bandwidth)
    window = np.abs(past[None, :] - levels[:, None]) < bandwidth
    increments = window * weight[None, :]
    values = np.zeros((len(levels), len(path.times)))
    values[:, 1:] = np.cumsum(increments, axis=1)
    return LocalTimeField(levels=levels, times=path.times, values=values, bandwidth=bandwidth)


def estimate_local_time_batch(
    model: DiffusionModel,
    x0: float,
    levels: Iterable[float],
    bandwidth: float,
    dt: float,
    horizon: float,
    n_paths: int,
    seed: SeedLike,
    block_size: int = 4096,
) -> np.ndarray:
    """Terminal local times L[y][T] for n_paths paths, shape (n_paths, n_levels)."""
    levels = _check_levels(model, levels, bandwidth)
    n = n_steps_for(dt, horizon)
    out = []
    for seq, size in block_seeds(seed, n_paths, block_size):
        scheme = EulerScheme(model, x0, dt, size, np.random.default_rng(seq))
        acc = np.zeros((size, len(levels)))
        for _ in range(n):
            x = scheme.states
            w = model.volatility_at(x) ** 2 * dt / (2.0 * bandwidth)
            acc += (np.abs(x[:, None] - levels[None, :]) < bandwidth) * w[:, None]
            scheme.advance()
        out.append(acc)
    return np.concatenate(out, axis=0)


def first_hit(path: PathSample, closed_set) -> Tuple[Optional[int], float]:
    """
    Grid index of the first hit of a closed set and the entry point.

    A step hits the set when the segment between consecutive states meets
    it, so isolated points can be hit.
    """
    if closed_set.is_empty:
        return None, math.nan
    if bool(closed_set.contains(path.states[0])):
        return 0, float(path.states[0])
    entries = closed_set.first_entry(path.states[:-1], path.states[1:])
    hits = np.flatnonzero(~np.isnan(entries))
    if len(hits) == 0:
        return None, math.nan
    k = int(hits[0])
    return k + 1, float(entries[k])


def hitting_time(path: PathSample, closed_set) -> float:
    k, _ = first_hit(path, closed_set)
    if k is None:
        return ac.NEVER
    return float(path.times[k])
