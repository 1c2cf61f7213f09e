"""
Monte Carlo evaluation of the war-of-attrition payoff

    J^i = E[1{tau_i <= tau_j} e^{-r tau_i} R^i(X_tau_i) + 1{tau_i > tau_j} e^{-r tau_j} G^i(X_tau_j)]

for profiles of randomized stopping rules, by a Stieltjes sum over the
survival curves and by sampling stopping times with the inverse rule.
"""
from argparse import Namespace
from configparser import ConfigParser
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple
import json
import logging
import math

import numpy as np  # type: ignore

import attrition.constants as ac
from attrition.diffusion import DiffusionModel, EulerScheme, block_seeds, n_steps_for
from attrition.errors import ErrMsg, InputError, NumericalError
from attrition.strategies import MarkovStrategy, StoppingRule, new_stopper
from attrition.utils.polynomials import PiecewisePolynomial
from attrition.utils.reduction import map_blocks, mean_and_se


@dataclass(frozen=True)
class PayoffSpec:
    R: PiecewisePolynomial
    G: PiecewisePolynomial

    @classmethod
    def zero(cls) -> "PayoffSpec":
        return cls(PiecewisePolynomial.constant(0.0), PiecewisePolynomial.constant(0.0))

    def rewards(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        r, g = np.asarray(self.R(x)), np.asarray(self.G(x))
        for values in (r, g):
            if np.any(np.isnan(values)):
                k = int(np.argmax(np.isnan(np.ravel(values))))
                raise NumericalError(ErrMsg.NAN_REWARD.value.format(x=np.ravel(x)[k]))
        return r, g

    def check(self, points: np.ndarray, tol: float = 1e-12) -> None:
        """Raise unless R <= G on every point."""
        r, g = self.rewards(points)
        bad = np.flatnonzero(r > g + tol)
        if len(bad):
            k = bad[0]
            raise InputError(
                ErrMsg.A0_VIOLATED.value.format(x=points[k], r=r[k], g=g[k])
            )

    def shifted(self, c: float) -> "PayoffSpec":
        return PayoffSpec(self.R, self.G.shifted(c))

    def to_dict(self) -> Dict[str, Any]:
        return {"R": self.R.to_dict(), "G": self.G.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PayoffSpec":
        try:
            return cls(
                PiecewisePolynomial.from_dict(data["R"]),
                PiecewisePolynomial.from_dict(data["G"]),
            )
        except KeyError as exc:
            raise InputError(ErrMsg.SCENARIO_INVALID.value.format(reason=f"missing {exc}"))


# CLI flag -> McConfig field
_CLI_OVERRIDES = {
    "paths": "n_paths",
    "dt": "dt",
    "horizon": "horizon",
    "seed": "seed",
    "workers": "workers",
}


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 4000
    dt: float = 1e-3
    horizon: float = 20.0
    bandwidth: float = 0.02
    levels: Tuple[float, ...] = ()
    seed: int = 0
    block_size: int = 1024
    workers: int = 1
    tail_budget: float = 1e-2
    boundary_clamp: float = ac.BOUNDARY_CLAMP

    def __post_init__(self) -> None:
        for name in ("n_paths", "dt", "horizon", "bandwidth", "block_size", "workers"):
            value = getattr(self, name)
            if not value > 0:
                raise InputError(ErrMsg.NON_POSITIVE.value.format(name=name, value=value))
        n_steps_for(self.dt, self.horizon)

    @property
    def n_steps(self) -> int:
        return n_steps_for(self.dt, self.horizon)

    @classmethod
    def from_config(
        cls, cfg: ConfigParser, cli_args: Optional[Namespace] = None
    ) -> "McConfig":
        values = dict(
            n_paths=cfg.getint("simulation", "paths"),
            dt=cfg.getfloat("simulation", "dt"),
            horizon=cfg.getfloat("simulation", "horizon"),
            bandwidth=cfg.getfloat("simulation", "bandwidth"),
            levels=tuple(json.loads(cfg.get("simulation", "levels"))),
            block_size=cfg.getint("simulation", "block_size"),
            boundary_clamp=cfg.getfloat("simulation", "boundary_clamp"),
            seed=cfg.getint("run", "seed"),
            workers=cfg.getint("run", "workers"),
            tail_budget=cfg.getfloat("verification", "tail_budget"),
        )
        return cls(**values).with_overrides(cli_args)

    def with_overrides(self, cli_args: Optional[Namespace]) -> "McConfig":
        """Copy with every CLI flag that was given taking precedence."""
        if cli_args is None:
            return self
        values = {}
        for arg, name in _CLI_OVERRIDES.items():
            value = getattr(cli_args, arg, None)
            if value is not None:
                values[name] = value
        return replace(self, **values)

    def check_coupling(self, model: DiffusionModel, logger: logging.Logger) -> None:
        bound = 10.0 * model.volatility_bound() * math.sqrt(self.dt)
        if self.bandwidth < bound:
            logger.debug(ErrMsg.COUPLING_VIOLATED.value.format(eps=self.bandwidth, bound=bound))


@dataclass(frozen=True)
class PayoffEstimate:
    mean: float
    se: float
    n: int
    # mean of Lambda^i_T Lambda^j_T
    survival: float = 0.0
    # mean of e^{-rT} max(|R|, |G|)(X_T) Lambda^i_T Lambda^j_T
    tail: float = 0.0
    tail_ok: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            ac.COL_MEAN: self.mean,
            ac.COL_SE: self.se,
            ac.COL_N: self.n,
            ac.COL_SURVIVAL: self.survival,
            ac.COL_TAIL: self.tail,
            ac.COL_TAIL_OK: self.tail_ok,
        }


@dataclass
class PairOutcome:
    """Per-path payoffs of one profile, in block order."""

    stieltjes: Tuple[np.ndarray, np.ndarray]
    sampled: Tuple[np.ndarray, np.ndarray]
    survival: np.ndarray
    tail: Tuple[np.ndarray, np.ndarray]
    clamped: np.ndarray

    def estimate(self, player: int, estimator: str, tail_budget: float) -> PayoffEstimate:
        k = player - 1
        values = self.stieltjes[k] if estimator == ac.ESTIMATOR_STIELTJES else self.sampled[k]
        mean, se = mean_and_se(values)
        tail = float(np.mean(self.tail[k])) if self.tail[k].size else 0.0
        return PayoffEstimate(
            mean=mean,
            se=se,
            n=int(values.size),
            survival=float(np.mean(self.survival)) if self.survival.size else 0.0,
            tail=tail,
            tail_ok=tail <= tail_budget * max(1.0, abs(mean)),
        )


def paired_gain(a: np.ndarray, b: np.ndarray) -> Tuple[float, float]:
    """Mean and standard error of a - b over common paths."""
    return mean_and_se(np.asarray(a) - np.asarray(b))


class GameSimulator(object):
    """
    Streams blocks of Euler paths and evaluates several stopping-rule pairs
    on the same paths (common random numbers). The randomization devices
    u^1, u^2 are shared across pairs as well.
    """

    def __init__(
        self,
        model: DiffusionModel,
        specs: Tuple[PayoffSpec, PayoffSpec],
        cfg: McConfig,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.model = model
        self.specs = specs
        self.cfg = cfg
        if logger is not None:
            self.logger = logger
        else:
            self.logger = logging.getLogger(ac.DEFAULT_LOGGER_NAME)

    def run(
        self, x0: float, pairs: Sequence[Tuple[StoppingRule, StoppingRule]]
    ) -> List[PairOutcome]:
        self.model.state_space.require(x0)
        blocks = block_seeds(self.cfg.seed, self.cfg.n_paths, self.cfg.block_size)
        results = map_blocks(
            lambda block: self._run_block(x0, pairs, block[0], block[1]),
            blocks,
            self.cfg.workers,
        )
        outcomes = []
        for p in range(len(pairs)):
            parts = [r[p] for r in results]
            outcome = PairOutcome(
                stieltjes=tuple(np.concatenate([q["stj"][k] for q in parts]) for k in (0, 1)),
                sampled=tuple(np.concatenate([q["smp"][k] for q in parts]) for k in (0, 1)),
                survival=np.concatenate([q["survival"] for q in parts]),
                tail=tuple(np.concatenate([q["tail"][k] for q in parts]) for k in (0, 1)),
                clamped=np.concatenate([q["clamped"] for q in parts]),
            )
            n_clamped = int(np.sum(outcome.clamped))
            if n_clamped:
                self.logger.warning(f"{n_clamped} paths from x0={x0} were clamped at the boundary")
            outcomes.append(outcome)
        return outcomes

    def _run_block(
        self,
        x0: float,
        pairs: Sequence[Tuple[StoppingRule, StoppingRule]],
        seq: np.random.SeedSequence,
        size: int,
    ) -> List[Dict[str, Any]]:
        cfg = self.cfg
        r = self.model.discount
        path_seq, device_seq = seq.spawn(2)
        devices = np.random.default_rng(device_seq)
        u = (devices.random(size), devices.random(size))
        scheme = EulerScheme(
            self.model, x0, cfg.dt, size, np.random.default_rng(path_seq), cfg.boundary_clamp
        )
        states = [_PairState(self, pair, size, u) for pair in pairs]
        x = scheme.states
        for st in states:
            st.start(x)
        for k in range(1, cfg.n_steps + 1):
            live = [st for st in states if not st.done]
            if not live:
                break
            prev, nxt = scheme.advance()
            disc = math.exp(-r * k * cfg.dt)
            for st in live:
                st.step(prev, nxt, disc)
        disc_T = math.exp(-r * cfg.horizon)
        out = []
        for st in states:
            out.append(st.finish(scheme.states, disc_T, scheme.clamped))
        return out


class _PairState(object):
    """Running sums of one stopping-rule pair over a block of paths."""

    def __init__(self, sim: GameSimulator, pair, size: int, u) -> None:
        cfg = sim.cfg
        self.specs = sim.specs
        self.stoppers = [new_stopper(rule, sim.model, cfg.dt, cfg.bandwidth) for rule in pair]
        self.u = u
        self.stj = [np.zeros(size), np.zeros(size)]
        self.smp = [np.zeros(size), np.zeros(size)]
        self.resolved = np.zeros(size, dtype=bool)
        self.lam_prev = [np.ones(size), np.ones(size)]
        self.done = False

    def start(self, x0: np.ndarray) -> None:
        outs = [s.start(x0) for s in self.stoppers]
        self._accumulate(x0, outs, 1.0)

    def step(self, prev: np.ndarray, nxt: np.ndarray, disc: float) -> None:
        outs = [s.step(prev, nxt) for s in self.stoppers]
        self._accumulate(nxt, outs, disc)

    def _accumulate(self, x: np.ndarray, outs, disc: float) -> None:
        (lam1, hit1, e1), (lam2, hit2, e2) = outs
        s1 = np.where(hit1, e1, x)
        s2 = np.where(hit2, e2, x)
        p1, p2 = self.lam_prev
        d1 = p1 - lam1
        d2 = p2 - lam2
        spec1, spec2 = self.specs

        idx = np.flatnonzero((d1 > 0) | (d2 > 0))
        if idx.size:
            r1, _ = spec1.rewards(s1[idx])
            r2, _ = spec2.rewards(s2[idx])
            _, g1 = spec1.rewards(s2[idx])
            _, g2 = spec2.rewards(s1[idx])
            self.stj[0][idx] += disc * (r1 * p2[idx] * d1[idx] + g1 * lam1[idx] * d2[idx])
            self.stj[1][idx] += disc * (r2 * p1[idx] * d2[idx] + g2 * lam2[idx] * d1[idx])

        open_ = ~self.resolved
        stop1 = open_ & (1.0 - lam1 > self.u[0])
        stop2 = open_ & (1.0 - lam2 > self.u[1])
        ended = np.flatnonzero(stop1 | stop2)
        if ended.size:
            a, b = stop1[ended], stop2[ended]
            r1, _ = spec1.rewards(s1[ended])
            _, g1 = spec1.rewards(s2[ended])
            r2, _ = spec2.rewards(s2[ended])
            _, g2 = spec2.rewards(s1[ended])
            # ties go to the stopper
            self.smp[0][ended] = disc * np.where(a, r1, g1)
            self.smp[1][ended] = disc * np.where(b, r2, g2)
            self.resolved[ended] = True

        self.lam_prev = [lam1, lam2]
        if np.all(self.resolved) and not np.any(lam1 * lam2 > 0):
            self.done = True

    def finish(self, x_T: np.ndarray, disc_T: float, clamped: np.ndarray) -> Dict[str, Any]:
        survival = self.lam_prev[0] * self.lam_prev[1]
        tails = []
        for spec in self.specs:
            r, g = spec.rewards(x_T)
            tails.append(disc_T * np.maximum(np.abs(r), np.abs(g)) * survival)
        return {
            "stj": self.stj,
            "smp": self.smp,
            "survival": survival,
            "tail": tails,
            "clamped": clamped.copy(),
        }


@dataclass(frozen=True)
class ProfileEvaluation:
    x0: float
    # estimates[(player, estimator)]
    estimates: Dict[Tuple[int, str], PayoffEstimate] = field(default_factory=dict)

    def get(self, player: int, estimator: str = ac.ESTIMATOR_STIELTJES) -> PayoffEstimate:
        return self.estimates[(player, estimator)]


def evaluate_profile(
    model: DiffusionModel,
    specs: Tuple[PayoffSpec, PayoffSpec],
    x0: float,
    profile: Tuple[StoppingRule, StoppingRule],
    cfg: McConfig,
    logger: Optional[logging.Logger] = None,
) -> ProfileEvaluation:
    logger = logger or logging.getLogger(ac.DEFAULT_LOGGER_NAME)
    outcome = GameSimulator(model, specs, cfg, logger).run(x0, [profile])[0]
    estimates = {}
    for player in (1, 2):
        for estimator in (ac.ESTIMATOR_STIELTJES, ac.ESTIMATOR_SAMPLED):
            est = outcome.estimate(player, estimator, cfg.tail_budget)
            if not est.tail_ok:
                logger.warning(
                    ErrMsg.TAIL_BUDGET_EXCEEDED.value.format(
                        tail=est.tail, budget=cfg.tail_budget * max(1.0, abs(est.mean))
                    )
                )
            estimates[(player, estimator)] = est
    return ProfileEvaluation(x0=x0, estimates=estimates)


def _single_player(
    model: DiffusionModel,
    spec_i: PayoffSpec,
    x0: float,
    strat_i: MarkovStrategy,
    strat_j: MarkovStrategy,
    cfg: McConfig,
    estimator: str,
) -> PayoffEstimate:
    evaluation = evaluate_profile(model, (spec_i, PayoffSpec.zero()), x0, (strat_i, strat_j), cfg)
    return evaluation.get(1, estimator)


def payoff_stieltjes(
    model: DiffusionModel,
    spec_i: PayoffSpec,
    x0: float,
    strat_i: MarkovStrategy,
    strat_j: MarkovStrategy,
    cfg: McConfig,
) -> PayoffEstimate:
    """
    Per path, sum_k e^{-r t_k} [R^i Lambda^j_{k-1} dGamma^i_k + G^i Lambda^i_k dGamma^j_k]
    with Lambda_{-1} = 1, so a jump at time 0 is counted.
    """
    return _single_player(model, spec_i, x0, strat_i, strat_j, cfg, ac.ESTIMATOR_STIELTJES)


def payoff_sampled(
    model: DiffusionModel,
    spec_i: PayoffSpec,
    x0: float,
    strat_i: MarkovStrategy,
    strat_j: MarkovStrategy,
    cfg: McConfig,
) -> PayoffEstimate:
    """Stopping times drawn by the inverse rule with independent devices u^i, u^j."""
    return _single_player(model, spec_i, x0, strat_i, strat_j, cfg, ac.ESTIMATOR_SAMPLED)


@dataclass(frozen=True)
class AssumptionReport:
    # proxies[name] = (mean sup_t e^{-rt}|f(X_t)|, mean e^{-rT}|f(X_T)|)
    proxies: Dict[str, Tuple[float, float]]
    horizon: float

    def sup_proxy(self, name: str) -> float:
        return self.proxies[name][0]

    def tail_proxy(self, name: str) -> float:
        return self.proxies[name][1]


def check_assumptions(
    model: DiffusionModel, spec: PayoffSpec, x0: float, cfg: McConfig
) -> AssumptionReport:
    """Empirical integrability (sup) and vanishing-tail proxies for R and G."""
    model.state_space.require(x0)
    r = model.discount

    def run_block(block) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
        seq, size = block
        scheme = EulerScheme(
            model, x0, cfg.dt, size, np.random.default_rng(seq.spawn(2)[0]), cfg.boundary_clamp
        )
        vals = spec.rewards(scheme.states)
        sups = [np.abs(v) for v in vals]
        for k in range(1, cfg.n_steps + 1):
            scheme.advance()
            disc = math.exp(-r * k * cfg.dt)
            vals = spec.rewards(scheme.states)
            sups = [np.maximum(s, disc * np.abs(v)) for s, v in zip(sups, vals)]
        disc_T = math.exp(-r * cfg.horizon)
        return {
            "R": (sups[0], disc_T * np.abs(vals[0])),
            "G": (sups[1], disc_T * np.abs(vals[1])),
        }

    blocks = block_seeds(cfg.seed, cfg.n_paths, cfg.block_size)
    parts = map_blocks(run_block, blocks, cfg.workers)
    proxies = {}
    for name in ("R", "G"):
        sup = np.concatenate([p[name][0] for p in parts])
        tail = np.concatenate([p[name][1] for p in parts])
        proxies[name] = (float(np.mean(sup)), float(np.mean(tail)))
    return AssumptionReport(proxies=proxies, horizon=cfg.horizon)
