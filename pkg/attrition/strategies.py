"""
Markovian randomized stopping times as pairs (mu, S): stop at once on the
closed set S, otherwise stop with intensity mu against the local time of X.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union
import logging

import numpy as np  # type: ignore
from scipy import integrate  # type: ignore

import attrition.constants as ac
from attrition.diffusion import (
    DiffusionModel,
    LocalTimeField,
    PathSample,
    estimate_local_time,
    first_hit,
)
from attrition.errors import ErrMsg, InputError
from attrition.measures import (
    ClosedSet,
    ExtendedMeasure,
    LocallyFiniteMeasure,
    to_extended,
)


@dataclass(frozen=True)
class MarkovStrategy:
    intensity: LocallyFiniteMeasure = field(default_factory=LocallyFiniteMeasure)
    stop_set: ClosedSet = field(default_factory=ClosedSet)

    def __post_init__(self) -> None:
        x = self.intensity.meets(self.stop_set)
        if x is not None:
            raise InputError(ErrMsg.CARRIER_OVERLAP.value.format(x=x))

    @classmethod
    def never(cls) -> "MarkovStrategy":
        return cls()

    @classmethod
    def pure(cls, stop_set: ClosedSet) -> "MarkovStrategy":
        return cls(stop_set=stop_set)

    @classmethod
    def atom(cls, x: float, mass: float, stop_set: Optional[ClosedSet] = None) -> "MarkovStrategy":
        return cls(LocallyFiniteMeasure.dirac(x, mass), stop_set or ClosedSet.empty())

    @property
    def is_pure(self) -> bool:
        return self.intensity.is_zero

    @property
    def is_never(self) -> bool:
        return self.is_pure and self.stop_set.is_empty

    def special_points(self) -> List[float]:
        """Atom locations and finite endpoints of the stopping set."""
        return sorted(set(self.intensity.atom_locations.tolist() + self.stop_set.endpoints()))

    def to_extended(self) -> ExtendedMeasure:
        return to_extended(self.intensity, self.stop_set)

    def to_dict(self) -> Dict[str, Any]:
        return {"intensity": self.intensity.to_dict(), "stop_set": self.stop_set.to_list()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MarkovStrategy":
        return cls(
            LocallyFiniteMeasure.from_dict(data.get("intensity", {})),
            ClosedSet.from_list(data.get("stop_set", [])),
        )

    def __str__(self) -> str:
        atoms = ", ".join(f"{a:.6g}*d({x:.6g})" for x, a in self.intensity.atoms)
        dens = f" + {len(self.intensity.densities)} density pieces" if self.intensity.densities else ""
        mu = (atoms or "0") + dens
        return f"(mu={mu}, S={self.stop_set})"


@dataclass(frozen=True)
class CsfCurve:
    times: np.ndarray
    # Lambda_t, the conditional probability of stopping strictly after t
    lam: np.ndarray
    tau_S: float
    clamp_count: int = 0

    @property
    def gamma(self) -> np.ndarray:
        return 1.0 - self.lam


def _hit_index(strategy: MarkovStrategy, path: PathSample) -> Optional[int]:
    k, _ = first_hit(path, strategy.stop_set)
    return k


def _finish_curve(
    times: np.ndarray, exponent: np.ndarray, k_hit: Optional[int], logger: logging.Logger
) -> CsfCurve:
    lam = np.exp(-exponent)
    outside = int(np.sum((lam < 0.0) | (lam > 1.0)))
    if outside:
        logger.debug(f"Clamped {outside} survival values into [0, 1]")
    lam = np.clip(lam, 0.0, 1.0)
    if k_hit is not None:
        lam[k_hit:] = 0.0
    tau = float(times[k_hit]) if k_hit is not None else ac.NEVER
    return CsfCurve(times=times, lam=lam, tau_S=tau, clamp_count=outside)


def csf_along_path(
    strategy: MarkovStrategy,
    path: PathSample,
    lt: LocalTimeField,
    logger: Optional[logging.Logger] = None,
) -> CsfCurve:
    """Lambda_t = 1{t < tau_S} exp(-int L^y_t mu(dy)) along one path."""
    logger = logger or logging.getLogger(ac.DEFAULT_LOGGER_NAME)
    mu = strategy.intensity
    exponent = np.zeros(len(path.times))
    for x, a in mu.atoms:
        row = lt.at_level(x)
        if row is None:
            raise InputError(ErrMsg.ATOM_OFF_LEVELS.value.format(x=x))
        exponent += a * row
    if mu.densities:
        lo, hi = float(np.min(lt.levels)), float(np.max(lt.levels))
        for p in mu.densities:
            if p.lower < lo - lt.bandwidth or p.upper > hi + lt.bandwidth:
                raise InputError(
                    ErrMsg.LEVELS_DO_NOT_COVER.value.format(lo=lo, hi=hi, a=p.lower, b=p.upper)
                )
        g = mu.density_at(lt.levels)
        exponent += integrate.trapezoid(g[:, None] * lt.values, lt.levels, axis=0)
    return _finish_curve(path.times, exponent, _hit_index(strategy, path), logger)


def csf_direct(
    strategy: MarkovStrategy,
    path: PathSample,
    model: DiffusionModel,
    logger: Optional[logging.Logger] = None,
) -> CsfCurve:
    """
    Absolutely continuous intensities only: Lambda_t = 1{t < tau_S}
    exp(-int_0^t g(X_s) sigma^2(X_s) ds), integrated directly in time.
    """
    logger = logger or logging.getLogger(ac.DEFAULT_LOGGER_NAME)
    if strategy.intensity.atoms:
        raise InputError(
            ErrMsg.SCENARIO_INVALID.value.format(
                reason="direct time integration needs an intensity without atoms"
            )
        )
    past = path.states[:-1]
    rate = strategy.intensity.density_at(past) * model.volatility_at(past) ** 2
    exponent = np.concatenate([[0.0], np.cumsum(rate * path.dt)])
    return _finish_curve(path.times, exponent, _hit_index(strategy, path), logger)


def sample_stopping(strategy: MarkovStrategy, csf: CsfCurve, u: float) -> float:
    """Inverse rule: the first grid time with Gamma_t > u."""
    if not 0.0 <= u < 1.0:
        raise InputError(ErrMsg.BAD_UNIFORM.value.format(value=u))
    if strategy.is_pure:
        return csf.tau_S
    idx = np.flatnonzero(csf.gamma > u)
    if len(idx) == 0:
        return ac.NEVER
    return float(csf.times[idx[0]])


def multiplicativity_check(
    strategy: MarkovStrategy,
    path: PathSample,
    lt: LocalTimeField,
    tau: float,
    s: float,
    model: DiffusionModel,
) -> float:
    """|Lambda_{tau+s} - Lambda_tau * (Lambda_s o shift_tau)| on one path."""
    dt = path.dt
    k = int(round(tau / dt))
    j = int(round(s / dt))
    if k + j > path.n_steps:
        raise InputError(
            ErrMsg.SCENARIO_INVALID.value.format(reason="tau + s exceeds the horizon")
        )
    full = csf_along_path(strategy, path, lt)
    shifted = path.shifted(k)
    lt_shifted = estimate_local_time(shifted, model, lt.levels, lt.bandwidth)
    fresh = csf_along_path(strategy, shifted, lt_shifted)
    return float(abs(full.lam[k + j] - full.lam[k] * fresh.lam[j]))


class MarkovStopper(object):
    """
    Survival Lambda of a Markov strategy for a block of paths, advanced one
    Euler step at a time. Intensity increments use the window average of mu,
    the streaming counterpart of the local time estimator.
    """

    def __init__(
        self, strategy: MarkovStrategy, model: DiffusionModel, dt: float, bandwidth: float
    ) -> None:
        self.strategy = strategy
        self.model = model
        self.dt = dt
        self.bandwidth = bandwidth
        self._has_intensity = not strategy.intensity.is_zero

    def start(self, x0: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        self.exponent = np.zeros(x0.shape)
        self.hit = self.strategy.stop_set.contains(x0)
        entry = np.where(self.hit, x0, np.nan)
        return np.where(self.hit, 0.0, 1.0), self.hit.copy(), entry

    def step(self, prev: np.ndarray, nxt: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._has_intensity:
            rate = self.strategy.intensity.window_average(prev, self.bandwidth)
            self.exponent = self.exponent + rate * self.model.volatility_at(prev) ** 2 * self.dt
        entry = self.strategy.stop_set.first_entry(prev, nxt)
        hit_now = ~self.hit & ~np.isnan(entry)
        self.hit = self.hit | hit_now
        lam = np.where(self.hit, 0.0, np.exp(-self.exponent))
        return lam, hit_now, entry


class ThreatStopper(object):
    """
    Non-Markov pure rule: stop on the first visit to `own` if it comes
    strictly before the first visit to `threat`, otherwise never stop.
    """

    def __init__(self, own: ClosedSet, threat: ClosedSet) -> None:
        self.own = own
        self.threat = threat

    def start(self, x0: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        in_own = self.own.contains(x0)
        in_threat = self.threat.contains(x0)
        self.stopped = in_own & ~in_threat
        self.disarmed = in_threat
        entry = np.where(self.stopped, x0, np.nan)
        return np.where(self.stopped, 0.0, 1.0), self.stopped.copy(), entry

    def step(self, prev: np.ndarray, nxt: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        live = ~self.stopped & ~self.disarmed
        e_own = self.own.first_entry(prev, nxt)
        e_threat = self.threat.first_entry(prev, nxt)
        h_own = live & ~np.isnan(e_own)
        h_threat = live & ~np.isnan(e_threat)
        with np.errstate(invalid="ignore"):
            own_first = h_own & (~h_threat | (np.abs(e_own - prev) < np.abs(e_threat - prev)))
        self.disarmed = self.disarmed | (h_threat & ~own_first)
        self.stopped = self.stopped | own_first
        return np.where(self.stopped, 0.0, 1.0), own_first, e_own


@dataclass(frozen=True)
class ThreatRule:
    """Path functional behind ThreatStopper; not a Markov strategy."""

    own: ClosedSet
    threat: ClosedSet

    def __str__(self) -> str:
        return f"(stop on {self.own} unless {self.threat} is reached first)"


StoppingRule = Union[MarkovStrategy, ThreatRule]


def new_stopper(rule: StoppingRule, model: DiffusionModel, dt: float, bandwidth: float):
    if isinstance(rule, ThreatRule):
        return ThreatStopper(rule.own, rule.threat)
    return MarkovStopper(rule, model, dt, bandwidth)
