"""
Markov-perfect equilibrium checks: verification of a profile, pure
best-reply iteration with fixed point and cycle detection, the
no-pure-equilibrium certificate and the non-Markov Nash check.
"""
from argparse import Namespace
from configparser import ConfigParser
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple
import json
import logging
import math

import numpy as np  # type: ignore
from scipy import optimize  # type: ignore

import attrition.constants as ac
from attrition.best_reply import (
    BestReplyResult,
    ConditionResult,
    Grid,
    ObstacleProblem,
    PbrReport,
    SolverTolerances,
    pbr_check,
    solve_best_reply,
)
from attrition.diffusion import DiffusionModel, Interval
from attrition.errors import ErrMsg, InputError, NumericalError
from attrition.measures import ClosedSet
from attrition.payoffs import GameSimulator, McConfig, PayoffSpec, evaluate_profile, paired_gain
from attrition.strategies import MarkovStrategy, StoppingRule, ThreatRule

Specs = Tuple[PayoffSpec, PayoffSpec]
SetPair = Tuple[ClosedSet, ClosedSet]


@dataclass(frozen=True)
class Profile:
    strat_1: MarkovStrategy
    strat_2: MarkovStrategy

    def of(self, player: int) -> MarkovStrategy:
        return self.strat_1 if player == 1 else self.strat_2

    def opponent_of(self, player: int) -> MarkovStrategy:
        return self.strat_2 if player == 1 else self.strat_1

    def special_points(self) -> List[float]:
        return sorted(set(self.strat_1.special_points() + self.strat_2.special_points()))

    @property
    def is_pure(self) -> bool:
        return self.strat_1.is_pure and self.strat_2.is_pure

    def stop_sets(self) -> SetPair:
        return self.strat_1.stop_set, self.strat_2.stop_set

    @classmethod
    def pure(cls, S1: ClosedSet, S2: ClosedSet) -> "Profile":
        return cls(MarkovStrategy.pure(S1), MarkovStrategy.pure(S2))

    def to_dict(self) -> Dict[str, Any]:
        return {"player_1": self.strat_1.to_dict(), "player_2": self.strat_2.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Profile":
        try:
            return cls(
                MarkovStrategy.from_dict(data["player_1"]),
                MarkovStrategy.from_dict(data["player_2"]),
            )
        except KeyError as exc:
            raise InputError(ErrMsg.SCENARIO_INVALID.value.format(reason=f"profile is missing {exc}"))

    def __str__(self) -> str:
        return f"player 1: {self.strat_1}; player 2: {self.strat_2}"


@dataclass(frozen=True)
class VerifyTolerances:
    probes: Tuple[float, ...] = tuple(np.round(np.linspace(0.1, 0.9, 11), 6).tolist())
    # absolute discretization allowance added to se_multiplier * SE
    budget: float = 2e-2
    se_multiplier: float = 3.0
    deviations: int = 20

    def __post_init__(self) -> None:
        if len(self.probes) == 0:
            raise InputError(ErrMsg.SCENARIO_INVALID.value.format(reason="no probe points"))
        for name in ("se_multiplier", "deviations"):
            value = getattr(self, name)
            if not value > 0:
                raise InputError(ErrMsg.NON_POSITIVE.value.format(name=name, value=value))
        if self.budget < 0:
            raise InputError(ErrMsg.NON_POSITIVE.value.format(name="budget", value=self.budget))

    def allowance(self, se: float) -> float:
        return self.se_multiplier * se + self.budget

    @classmethod
    def from_config(
        cls, cfg: ConfigParser, cli_args: Optional[Namespace] = None
    ) -> "VerifyTolerances":
        return cls(
            probes=tuple(float(p) for p in json.loads(cfg.get("verification", "probes"))),
            budget=cfg.getfloat("verification", "budget"),
            se_multiplier=cfg.getfloat("verification", "se_multiplier"),
            deviations=cfg.getint("verification", "deviations"),
        )


@dataclass(frozen=True)
class GapRow:
    x0: float
    player: int
    value: float
    mean: float
    se: float
    gap: float
    allowed: float
    tail_ok: bool

    @property
    def passed(self) -> bool:
        return self.gap <= self.allowed

    def to_dict(self) -> Dict[str, Any]:
        return {
            ac.COL_X0: self.x0,
            ac.COL_PLAYER: self.player,
            ac.COL_VALUE: self.value,
            ac.COL_MEAN: self.mean,
            ac.COL_SE: self.se,
            "gap": self.gap,
            "allowed": self.allowed,
            ac.COL_TAIL_OK: self.tail_ok,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class MpeReport:
    verdict: str
    pbr: Tuple[Optional[PbrReport], Optional[PbrReport]]
    gaps: Tuple[GapRow, ...]
    condition_i: Optional[ConditionResult]
    reasons: Tuple[str, ...] = ()
    replies: Tuple[Optional[BestReplyResult], Optional[BestReplyResult]] = field(
        default=(None, None), repr=False, compare=False
    )

    @property
    def passed(self) -> bool:
        return self.verdict == ac.VERDICT_PASS

    def sup_gap(self, player: int) -> float:
        rows = [r.gap for r in self.gaps if r.player == player]
        return max(rows) if rows else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdict": self.verdict,
            "reasons": list(self.reasons),
            "pbr": {
                f"player_{k + 1}": (rep.to_dict() if rep is not None else None)
                for k, rep in enumerate(self.pbr)
            },
            "condition_i": self.condition_i.to_dict() if self.condition_i else None,
            "sup_gap": {"player_1": self.sup_gap(1), "player_2": self.sup_gap(2)},
            "gaps": [r.to_dict() for r in self.gaps],
            "best_replies": {
                f"player_{k + 1}": (rep.to_dict() if rep is not None else None)
                for k, rep in enumerate(self.replies)
            },
        }


def _condition_i(profile: Profile, specs: Specs, grid: Grid, tol_set: float) -> ConditionResult:
    """S^1 and S^2 may only meet where R^i = G^i for both players."""
    common = profile.strat_1.stop_set.intersection(profile.strat_2.stop_set)
    lo, hi = float(grid.nodes[0]), float(grid.nodes[-1])
    common = common.clipped(lo, hi)
    points = np.asarray(
        sorted(set(common.endpoints()) | set(grid.nodes[common.contains(grid.nodes)].tolist())),
        dtype=float,
    )
    worst = 0.0
    for spec in specs:
        if points.size:
            R, G = spec.rewards(points)
            worst = max(worst, float(np.max(G - R)))
    return ConditionResult(
        "stop_sets_meet_only_where_R_equals_G", worst <= tol_set, worst, tol_set, str(common)
    )


def verify_mpe(
    profile: Profile,
    model: DiffusionModel,
    specs: Specs,
    grid: Grid,
    cfg: McConfig,
    tol: Optional[SolverTolerances] = None,
    vtol: Optional[VerifyTolerances] = None,
    logger: Optional[logging.Logger] = None,
) -> MpeReport:
    """
    Solves both best replies, checks each strategy against them, compares
    Monte Carlo payoffs of the profile to the best-reply values at the
    probe points and checks that the stopping sets only meet where R = G.
    """
    tol = tol or SolverTolerances()
    vtol = vtol or VerifyTolerances()
    logger = logger or logging.getLogger(ac.DEFAULT_LOGGER_NAME)
    grid.require(profile.special_points())
    condition_i = _condition_i(profile, specs, grid, tol.tol_set)

    replies: List[BestReplyResult] = []
    try:
        for player in (1, 2):
            replies.append(
                solve_best_reply(
                    model, specs[player - 1], profile.opponent_of(player), grid, tol,
                    cfg.workers, logger,
                )
            )
    except NumericalError as err:
        logger.warning(f"Best reply failed: {err}")
        return MpeReport(
            verdict=ac.VERDICT_INCONCLUSIVE,
            pbr=(None, None),
            gaps=(),
            condition_i=condition_i,
            reasons=(f"solver: {err}",),
        )

    reports = tuple(
        pbr_check(profile.of(player), replies[player - 1], profile.opponent_of(player), tol)
        for player in (1, 2)
    )

    lo, hi = float(grid.nodes[0]), float(grid.nodes[-1])
    gaps = []
    for x0 in vtol.probes:
        if not lo <= x0 <= hi:
            logger.warning(f"Probe x0={x0} lies outside the grid [{lo:g}, {hi:g}], skipped")
            continue
        evaluation = evaluate_profile(
            model, specs, x0, (profile.strat_1, profile.strat_2), cfg, logger
        )
        for player in (1, 2):
            est = evaluation.get(player, ac.ESTIMATOR_STIELTJES)
            value = float(replies[player - 1].value(x0))
            gaps.append(
                GapRow(
                    x0=x0,
                    player=player,
                    value=value,
                    mean=est.mean,
                    se=est.se,
                    gap=abs(est.mean - value),
                    allowed=vtol.allowance(est.se),
                    tail_ok=est.tail_ok,
                )
            )

    reasons = []
    for player, rep in zip((1, 2), reports):
        for name in rep.failed:
            reasons.append(f"player {player}: {name}")
    if not condition_i.passed:
        reasons.append(condition_i.name)
    for row in gaps:
        if not row.passed:
            reasons.append(f"player {row.player}: payoff gap {row.gap:.3g} at x0={row.x0:g}")
    tails = [f"tail budget at x0={r.x0:g}" for r in gaps if not r.tail_ok]

    if reasons:
        verdict = ac.VERDICT_FAIL
    elif tails:
        verdict = ac.VERDICT_INCONCLUSIVE
        reasons = sorted(set(tails))
    else:
        verdict = ac.VERDICT_PASS
    logger.info(f"MPE verification: {verdict}")
    return MpeReport(
        verdict=verdict,
        pbr=reports,
        gaps=tuple(gaps),
        condition_i=condition_i,
        reasons=tuple(reasons),
        replies=(replies[0], replies[1]),
    )


@dataclass(frozen=True)
class IterationTrace:
    profiles: Tuple[SetPair, ...]
    # movers[k] is the player whose update produced profiles[k + 1]
    movers: Tuple[int, ...]
    fixed_point: bool
    cycle: Optional[Tuple[int, int]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "profiles": [{"S1": a.to_list(), "S2": b.to_list()} for a, b in self.profiles],
            "movers": list(self.movers),
            "fixed_point": self.fixed_point,
            "cycle": list(self.cycle) if self.cycle is not None else None,
        }


def same_set(a: ClosedSet, b: ClosedSet, lo: float, hi: float, tol: float) -> bool:
    return a.hausdorff(b, lo, hi) <= tol


def pure_best_reply_iteration(
    start: Profile,
    model: DiffusionModel,
    specs: Specs,
    grid: Grid,
    tol: Optional[SolverTolerances] = None,
    max_iter: int = 6,
    first_mover: int = 2,
    logger: Optional[logging.Logger] = None,
) -> IterationTrace:
    """
    Alternating pure best replies S^i <- S_bar^i against (0, S^j). Stops at
    a fixed point (two consecutive updates leave the profile unchanged) or
    at a cycle (a profile seen before, up to set_cells grid cells).
    """
    tol = tol or SolverTolerances()
    logger = logger or logging.getLogger(ac.DEFAULT_LOGGER_NAME)
    for player in (1, 2):
        if not start.of(player).is_pure:
            raise InputError(ErrMsg.NOT_PURE.value.format(player=player))
    grid.require(start.special_points())
    lo, hi = float(grid.nodes[0]), float(grid.nodes[-1])
    cell_tol = tol.set_cells * grid.h

    def same(p: SetPair, q: SetPair) -> bool:
        return same_set(p[0], q[0], lo, hi, cell_tol) and same_set(p[1], q[1], lo, hi, cell_tol)

    profiles: List[SetPair] = [start.stop_sets()]
    movers: List[int] = []
    unchanged = 0
    mover = first_mover
    for step in range(1, max_iter + 1):
        current = profiles[-1]
        opp_set = current[1] if mover == 1 else current[0]
        # replies are read off grid nodes, so later opponents need no new nodes
        reply = solve_best_reply(
            model, specs[mover - 1], MarkovStrategy.pure(opp_set), grid, tol, logger=logger
        )
        new = (reply.S_bar, current[1]) if mover == 1 else (current[0], reply.S_bar)
        logger.debug(f"Step {step}: player {mover} moves to {reply.S_bar}")
        movers.append(mover)
        profiles.append(new)
        unchanged = unchanged + 1 if same(new, current) else 0
        if unchanged >= 2:
            return IterationTrace(tuple(profiles), tuple(movers), True, None)
        for k in range(len(profiles) - 2):
            if same(profiles[k], new) and not unchanged:
                return IterationTrace(tuple(profiles), tuple(movers), False, (k, len(profiles) - 1))
        mover = 3 - mover
    raise NumericalError(ErrMsg.NO_CYCLE.value.format(max_iter=max_iter))


def no_pure_certificate(
    trace: IterationTrace, specs: Specs, grid: Grid, tol: Optional[SolverTolerances] = None
) -> Tuple[ConditionResult, ...]:
    """
    Structural checks of the no-pure-equilibrium argument along the visited
    profiles: player 1 only stops inside [1/3, 2/3], player 2 only outside
    (1/3, 2/3), and once player 1 stops somewhere player 2's set is
    (0, x0] u [x1, 1) with x0 in [1/6, 1/4] and x1 in [3/4, 5/6].
    """
    tol = tol or SolverTolerances()
    cell_tol = tol.set_cells * grid.h
    lo, hi = float(grid.nodes[0]), float(grid.nodes[-1])
    middle = ClosedSet(((1.0 / 3.0, 2.0 / 3.0),))
    outside = ClosedSet(((grid.interval.lower, 1.0 / 3.0), (2.0 / 3.0, grid.interval.upper)))

    first = max(S1.clipped(lo, hi).excess(middle) for S1, _ in trace.profiles)
    second = max(S2.clipped(lo, hi).excess(outside) for _, S2 in trace.profiles)

    form_ok = True
    form_detail = []
    for k, mover in enumerate(trace.movers):
        S1, S2 = trace.profiles[k + 1]
        if mover != 2 or S1.is_empty:
            continue
        comps = S2.components
        ok = (
            len(comps) == 2
            and comps[0][0] == grid.interval.lower
            and comps[1][1] == grid.interval.upper
            and 1.0 / 6.0 - cell_tol <= comps[0][1] <= 0.25 + cell_tol
            and 0.75 - cell_tol <= comps[1][0] <= 5.0 / 6.0 + cell_tol
        )
        form_ok &= ok
        form_detail.append(str(S2))

    spec_1 = specs[0]
    g_third, r_half, g_quarter = (
        float(spec_1.G(1.0 / 3.0)),
        float(spec_1.R(0.5)),
        float(spec_1.G(0.25)),
    )
    return (
        ConditionResult("player_1_inside_middle", first <= cell_tol, first, cell_tol),
        ConditionResult("player_2_outside_middle", second <= cell_tol, second, cell_tol),
        ConditionResult(
            "player_2_two_sided_form", form_ok, 0.0 if form_ok else 1.0, 0.0, "; ".join(form_detail)
        ),
        ConditionResult(
            "ordering_G1_third_R1_half_G1_quarter",
            g_third < r_half < g_quarter,
            r_half - g_third,
            0.0,
            f"{g_third:g} < {r_half:g} < {g_quarter:g}",
        ),
        ConditionResult(
            "cycle_without_fixed_point",
            trace.cycle is not None and not trace.fixed_point,
            0.0,
            0.0,
            str(trace.cycle),
        ),
    )


@dataclass(frozen=True)
class DeviationRow:
    x0: float
    player: int
    label: str
    gain: float
    se: float
    allowed: float

    @property
    def passed(self) -> bool:
        return self.gain <= self.allowed

    def to_dict(self) -> Dict[str, Any]:
        return {
            ac.COL_X0: self.x0,
            ac.COL_PLAYER: self.player,
            "deviation": self.label,
            "gain": self.gain,
            ac.COL_SE: self.se,
            "allowed": self.allowed,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class NashReport:
    # (x0, player) -> payoff mean of the threat profile
    payoffs: Tuple[Tuple[float, int, float, float], ...]
    # (x0, on-path gap, se, allowed) between the threat rule and plain stopping on S^1
    equivalence: Tuple[Tuple[float, float, float, float], ...]
    deviations: Tuple[DeviationRow, ...]

    @property
    def passed(self) -> bool:
        return all(d.passed for d in self.deviations) and all(
            abs(gap) <= allowed for _, gap, _, allowed in self.equivalence
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "payoffs": [
                {ac.COL_X0: x0, ac.COL_PLAYER: p, ac.COL_MEAN: m, ac.COL_SE: se}
                for x0, p, m, se in self.payoffs
            ],
            "equivalence": [
                {ac.COL_X0: x0, "gap": g, ac.COL_SE: se, "allowed": a}
                for x0, g, se, a in self.equivalence
            ],
            "deviations": [d.to_dict() for d in self.deviations],
        }


def _deviation_families(
    interval: Interval, count: int
) -> Tuple[List[Tuple[str, MarkovStrategy]], List[Tuple[str, MarkovStrategy]]]:
    lo, hi = interval.lower, interval.upper
    first: List[Tuple[str, MarkovStrategy]] = [
        ("never", MarkovStrategy.never()),
        ("stop-now", MarkovStrategy.pure(ClosedSet(((lo, hi),)))),
    ]
    for d in np.linspace(0.0, 0.3, max(count - 2, 1)):
        S = ClosedSet(((0.5 - d, 0.5 + d),))
        first.append((f"stop on {S}", MarkovStrategy.pure(S)))
    second: List[Tuple[str, MarkovStrategy]] = [("never", MarkovStrategy.never())]
    for a in np.linspace(0.05, 0.45, max(count - 1, 1)):
        S = ClosedSet(((lo, a), (1.0 - a, hi)))
        second.append((f"stop on {S}", MarkovStrategy.pure(S)))
    return first, second


def check_nonmarkov_nash(
    model: DiffusionModel,
    specs: Specs,
    x0s: Sequence[float],
    cfg: McConfig,
    S1: ClosedSet,
    S2: ClosedSet,
    vtol: Optional[VerifyTolerances] = None,
    logger: Optional[logging.Logger] = None,
) -> NashReport:
    """
    Player 1 stops on S^1 only if S^1 is reached before S^2, player 2 stops
    on S^2. Each x0 shares one path set across the profile, its on-path
    twin and every pure deviation, so gains come with paired errors.
    """
    vtol = vtol or VerifyTolerances()
    logger = logger or logging.getLogger(ac.DEFAULT_LOGGER_NAME)
    threat: StoppingRule = ThreatRule(S1, S2)
    stop_2 = MarkovStrategy.pure(S2)
    dev_1, dev_2 = _deviation_families(model.state_space, vtol.deviations)

    pairs: List[Tuple[StoppingRule, StoppingRule]] = [(threat, stop_2), (MarkovStrategy.pure(S1), stop_2)]
    pairs += [(rule, stop_2) for _, rule in dev_1]
    pairs += [(threat, rule) for _, rule in dev_2]

    simulator = GameSimulator(model, specs, cfg, logger)
    payoffs, equivalence, deviations = [], [], []
    for x0 in x0s:
        outcomes = simulator.run(x0, pairs)
        base = outcomes[0]
        for player in (1, 2):
            est = base.estimate(player, ac.ESTIMATOR_STIELTJES, cfg.tail_budget)
            payoffs.append((x0, player, est.mean, est.se))
        gap, se = paired_gain(outcomes[1].stieltjes[0], base.stieltjes[0])
        equivalence.append((x0, gap, se, vtol.allowance(se)))
        offset = 2
        for player, family in ((1, dev_1), (2, dev_2)):
            k = player - 1
            for label, _ in family:
                gain, se = paired_gain(outcomes[offset].stieltjes[k], base.stieltjes[k])
                deviations.append(DeviationRow(x0, player, label, gain, se, vtol.allowance(se)))
                offset += 1
    report = NashReport(tuple(payoffs), tuple(equivalence), tuple(deviations))
    logger.info(f"Non-Markov Nash check passed: {report.passed}")
    return report


def calibrate_atom_mass(
    model: DiffusionModel,
    spec: PayoffSpec,
    location: float,
    target: float,
    grid: Grid,
    tol: Optional[SolverTolerances] = None,
    bracket: Tuple[float, float] = (1e-2, 1e2),
    xtol: float = 1e-8,
) -> float:
    """
    Experimental. Atom mass at `location` for which the reply's stopping
    region ends at `target`: the value at the atom is matched with the
    tangent of R at `target`. Only meaningful for driftless undiscounted
    models with concave R left of the contact point.
    """
    tol = tol or SolverTolerances()
    grid.require([location])
    slope = float(spec.R.deriv()(target))
    line = float(spec.R(target)) + slope * (location - target)

    def mismatch(mass: float) -> float:
        opp = MarkovStrategy.atom(location, mass)
        v, _, _ = ObstacleProblem(model, spec, opp, grid, tol).solve()
        return float(np.interp(location, grid.nodes, v)) - line

    a, b = bracket
    fa, fb = mismatch(a), mismatch(b)
    if fa * fb > 0 or math.isnan(fa * fb):
        raise NumericalError(
            ErrMsg.NO_SIGN_CHANGE.value.format(name="atom mass mismatch", a=a, b=b)
        )
    return float(optimize.brentq(mismatch, a, b, xtol=xtol))
