"""
The worked example on dX = X(1-X)dW, r = 0: a game without pure
Markov-perfect equilibrium, and its mixed equilibrium

    (mu^1, S^1) = (alpha delta_{1/2}, {}),  (mu^2, S^2) = (0, (0, x*] u [1-x*, 1)).

The rewards are piecewise cubics, written in u = 12x and rescaled to x.
"""
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np  # type: ignore
from numpy.polynomial import Polynomial  # type: ignore
from scipy import optimize  # type: ignore

import attrition.constants as ac
from attrition.best_reply import BestReplyResult, Grid, SolverTolerances, ValueFunction, solve_best_reply
from attrition.diffusion import DiffusionModel
from attrition.equilibrium import Profile
from attrition.errors import ErrMsg, NumericalError
from attrition.measures import ClosedSet
from attrition.payoffs import PayoffSpec
from attrition.strategies import MarkovStrategy
from attrition.utils.polynomials import PiecewisePolynomial, in_scaled_variable

U_SCALE = 12.0
THIRD = 1.0 / 3.0
# points every example grid carries as nodes
LANDMARKS = (1.0 / 6.0, 0.25, THIRD, 0.5, 2.0 * THIRD, 0.75, 5.0 / 6.0)


def _shift(c: float) -> Polynomial:
    return Polynomial([-c, 1.0])


def _cubic(c3: float, c1: float, center: float, c0: float = 0.0) -> Polynomial:
    """c3 (u - center)^3 + c1 (u - center) + c0"""
    s = _shift(center)
    return c3 * s ** 3 + c1 * s + c0


def _r2_edge(u: Polynomial) -> Polynomial:
    return 0.00625 * (5.0 * u ** 3 - 62.0 * u ** 2 + 256.0 * u)


def _g2_edge(u: Polynomial) -> Polynomial:
    return 0.6875 * (-0.25 * u ** 3 + 3.0 * u)


def example_pieces_u() -> Dict[str, Tuple[List[float], List[Polynomial]]]:
    """Knots and pieces of R^1, G^1, R^2, G^2 in the variable u = 12x."""
    u = Polynomial([0.0, 1.0])
    mirror = Polynomial([12.0, -1.0])
    return OrderedDict(
        [
            (
                "R1",
                (
                    [0.0, 2.0, 6.0, 10.0, 12.0],
                    [
                        _cubic(0.125, -1.5, 0.0),
                        _cubic(-0.125, 1.5, 4.0),
                        _cubic(0.125, -1.5, 8.0),
                        _cubic(-0.125, 1.5, 12.0),
                    ],
                ),
            ),
            (
                "G1",
                (
                    [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
                    [
                        _cubic(-0.25, 3.0, 0.0),
                        _cubic(0.75, -2.25, 3.0, 2.5),
                        _cubic(-0.5, 1.5, 5.0, 2.0),
                        _cubic(0.5, -1.5, 7.0, 2.0),
                        _cubic(-0.75, 2.25, 9.0, 2.5),
                        _cubic(0.25, -3.0, 12.0),
                    ],
                ),
            ),
            (
                "R2",
                (
                    [0.0, 4.0, 6.0, 8.0, 12.0],
                    [
                        _r2_edge(u),
                        _cubic(0.5, -1.5, 5.0, 1.2),
                        _cubic(-0.5, 1.5, 7.0, 1.2),
                        _r2_edge(mirror),
                    ],
                ),
            ),
            (
                "G2",
                (
                    [0.0, 2.0, 10.0, 12.0],
                    [
                        _g2_edge(u),
                        Polynomial([2.75]),
                        _g2_edge(mirror),
                    ],
                ),
            ),
        ]
    )


def _to_x(knots_u: Sequence[float], pieces_u: Sequence[Polynomial]) -> PiecewisePolynomial:
    return PiecewisePolynomial(
        [k / U_SCALE for k in knots_u], [in_scaled_variable(p, U_SCALE) for p in pieces_u]
    )


def example_record() -> Dict[str, Any]:
    """Coefficients (lowest degree first) of every piece, in u and in x."""
    record: Dict[str, Any] = OrderedDict()
    for name, (knots, pieces) in example_pieces_u().items():
        record[name] = {
            "knots_u": list(knots),
            "pieces_u": [p.coef.tolist() for p in pieces],
            "knots_x": [k / U_SCALE for k in knots],
            "pieces_x": [in_scaled_variable(p, U_SCALE).coef.tolist() for p in pieces],
        }
    return record


def _property_grid(step: float, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    x = np.arange(lo, hi + 0.5 * step, step)
    return x[(x > lo) & (x < hi)]


def _c2_across_knots(f: PiecewisePolynomial, lo: float, hi: float, tol: float) -> bool:
    for k, knot in enumerate(f.knots[1:-1], start=1):
        if not lo < knot < hi:
            continue
        left, right = f.pieces[k - 1], f.pieces[k]
        for m in range(3):
            if abs(left.deriv(m)(knot) - right.deriv(m)(knot)) > tol:
                return False
    return True


def check_example_properties(
    spec_1: PayoffSpec, spec_2: PayoffSpec, step: float = 1e-4, tol: float = 1e-10
) -> Dict[str, bool]:
    """Named table of the shape properties the no-pure-equilibrium argument uses."""
    x = _property_grid(step)
    R1, G1, R2, G2 = spec_1.R, spec_1.G, spec_2.R, spec_2.G
    dR2 = R2.deriv()

    def gap_from(points: np.ndarray, margin: float) -> np.ndarray:
        keep = np.ones(len(x), dtype=bool)
        for p in points:
            keep &= np.abs(x - p) > margin
        return x[keep]

    away = gap_from(np.asarray([THIRD, 2.0 * THIRD]), step / 2.0)
    outer = away[(away < THIRD) | (away > 2.0 * THIRD)]
    inner = away[(away > THIRD) & (away < 2.0 * THIRD)]
    dec = _property_grid(step, 1.0 / 6.0, THIRD)
    flat = x[(x >= 1.0 / 6.0) & (x <= 5.0 / 6.0)]
    left = x[x <= THIRD]

    out: Dict[str, bool] = OrderedDict()
    out["symmetry"] = all(
        float(np.max(np.abs(f(x) - f(1.0 - x)))) <= tol for f in (R1, G1, R2, G2)
    )
    out["G1_above_R1"] = bool(np.all(G1(x) > R1(x)))
    out["R1_sign"] = bool(np.all(R1(outer) < 0) and np.all(R1(inner) > 0))
    out["G1_decreasing"] = bool(np.all(np.diff(G1(dec)) <= tol))
    out["G1_ordering"] = bool(G1(0.25) > R1(0.5) > G1(THIRD))
    out["G2_above_R2"] = bool(np.all(G2(x) > R2(x)))
    out["G2_concave"] = bool(np.all(np.diff(G2(x), 2) <= tol))
    out["G2_constant"] = bool(np.max(np.abs(G2(flat) - G2(0.5))) <= tol)
    out["R2_strictly_concave"] = bool(np.all(np.diff(R2(left), 2) < 0))
    out["R2_smooth"] = _c2_across_knots(R2, 0.0, THIRD, tol)
    out["R2_flat_at_third"] = bool(abs(dR2(THIRD)) <= tol)
    out["R2_below_peak"] = bool(np.all(R2(inner) < R2(THIRD)))
    out["tangent_sixth"] = bool(
        abs(R2(1.0 / 6.0) + dR2(1.0 / 6.0) * (THIRD - 1.0 / 6.0) - G2(THIRD)) <= tol
    )
    out["tangent_quarter"] = bool(
        abs(R2(0.25) + dR2(0.25) * (2.0 * THIRD - 0.25) - G2(2.0 * THIRD)) <= tol
    )
    return out


def build_example_payoffs(
    step: float = 1e-4, check: bool = True
) -> Tuple[PayoffSpec, PayoffSpec]:
    pieces = {name: _to_x(*kp) for name, kp in example_pieces_u().items()}
    spec_1 = PayoffSpec(pieces["R1"], pieces["G1"])
    spec_2 = PayoffSpec(pieces["R2"], pieces["G2"])
    if check:
        for name, ok in check_example_properties(spec_1, spec_2, step).items():
            if not ok:
                raise NumericalError(ErrMsg.EXAMPLE_PROPERTY_FAILED.value.format(name=name))
    return spec_1, spec_2


def find_x_star(spec_1: PayoffSpec, xtol: float = 1e-13) -> float:
    """The root of G^1(x) = R^1(1/2) in (1/4, 1/3)."""
    target = float(spec_1.R(0.5))

    def f(x: float) -> float:
        return float(spec_1.G(x)) - target

    a, b = 0.25, THIRD
    if f(a) * f(b) >= 0:
        raise NumericalError(
            ErrMsg.NO_SIGN_CHANGE.value.format(name="G1 - R1(1/2)", a=a, b=b)
        )
    return float(optimize.bisect(f, a, b, xtol=xtol))


def atom_mass_for(spec_2: PayoffSpec, x_star: float) -> float:
    """
    alpha = (R^2)'(x*) / (G^2(1/2) - R^2(x*) - (R^2)'(x*)(1/2 - x*)),
    derivatives taken in x.
    """
    slope = float(spec_2.R.deriv()(x_star))
    tangent_at_half = float(spec_2.R(x_star)) + slope * (0.5 - x_star)
    return slope / (float(spec_2.G(0.5)) - tangent_at_half)


def example_equilibrium_profile(x_star: float, alpha: float) -> Profile:
    return Profile(
        MarkovStrategy.atom(0.5, alpha),
        MarkovStrategy.pure(ClosedSet(((0.0, x_star), (1.0 - x_star, 1.0)))),
    )


def w2_closed_form(spec_2: PayoffSpec, x_star: float) -> Callable[[np.ndarray], np.ndarray]:
    """R^2 on (0, x*] u [1-x*, 1), tangent lines from x* and 1-x* in between."""
    slope = float(spec_2.R.deriv()(x_star))
    base = float(spec_2.R(x_star))

    def w2(x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        left = base + slope * (x - x_star)
        right = base + slope * ((1.0 - x_star) - x)
        middle = np.where(x <= 0.5, left, right)
        outside = (x <= x_star) | (x >= 1.0 - x_star)
        return np.where(outside, spec_2.R(x), middle)

    return w2


def example_grid(n: int, x_star: float) -> Grid:
    model = DiffusionModel.logistic_martingale()
    return Grid.covering(model.state_space, n, LANDMARKS + (x_star, 1.0 - x_star))


@dataclass(frozen=True)
class ExampleSolution:
    x_star: float
    alpha: float
    record: Dict[str, Any]
    reply_1: BestReplyResult
    reply_2: BestReplyResult
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def w1(self) -> ValueFunction:
        return self.reply_1.value

    @property
    def w2(self) -> ValueFunction:
        return self.reply_2.value

    @property
    def profile(self) -> Profile:
        return example_equilibrium_profile(self.x_star, self.alpha)

    def failed_checks(self, residual_tol: float = 1e-6, flat_tol: float = 1e-6) -> List[str]:
        d = self.diagnostics
        failed = []
        if not 0.25 < self.x_star < THIRD:
            failed.append("x_star_bracket")
        if d["x_star_residual"] > 1e-9:
            failed.append("x_star_residual")
        if not self.alpha > 0:
            failed.append("alpha_positive")
        for name in ("w2_residual", "w2_atom_residual"):
            if d[name] > residual_tol:
                failed.append(name)
        if d["w1_flatness"] > flat_tol:
            failed.append("w1_flatness")
        return failed

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x_star": self.x_star,
            "alpha": self.alpha,
            "payoffs": self.record,
            "profile": self.profile.to_dict(),
            "w1": self.reply_1.to_dict(),
            "w2": self.reply_2.to_dict(),
            "diagnostics": dict(self.diagnostics),
            "failed_checks": self.failed_checks(),
        }


def solve_example(
    grid: Optional[Grid] = None,
    tol: Optional[SolverTolerances] = None,
    n: int = 4000,
    workers: int = 1,
    logger: Optional[logging.Logger] = None,
) -> ExampleSolution:
    logger = logger or logging.getLogger(ac.DEFAULT_LOGGER_NAME)
    # rewards vanish at both natural endpoints
    tol = replace(tol or SolverTolerances(), closure=ac.CLOSURE_ZERO)
    model = DiffusionModel.logistic_martingale()
    spec_1, spec_2 = build_example_payoffs()
    x_star = find_x_star(spec_1)
    alpha = atom_mass_for(spec_2, x_star)
    if not alpha > 0:
        raise NumericalError(ErrMsg.EXAMPLE_PROPERTY_FAILED.value.format(name="alpha > 0"))
    logger.info(f"x* = {x_star:.12f}, alpha = {alpha:.12f}")

    profile = example_equilibrium_profile(x_star, alpha)
    if grid is None:
        grid = example_grid(n, x_star)
    reply_2 = solve_best_reply(model, spec_2, profile.strat_1, grid, tol, workers, logger)
    reply_1 = solve_best_reply(model, spec_1, profile.strat_2, grid, tol, workers, logger)

    x = grid.nodes
    h = grid.h
    w2_exact = w2_closed_form(spec_2, x_star)
    band = (x >= x_star + h) & (x <= 1.0 - x_star - h)
    plateau = float(spec_1.R(0.5))
    diagnostics = OrderedDict(
        [
            ("x_star_residual", abs(float(spec_1.G(x_star)) - plateau)),
            ("w2_residual", reply_2.value.max_residual()),
            ("w2_atom_residual", reply_2.value.max_atom_residual()),
            ("w2_gap_closed_form", float(np.max(np.abs(reply_2.value.values - w2_exact(x))))),
            ("w1_residual", reply_1.value.max_residual()),
            ("w1_flatness", float(np.max(np.abs(reply_1.value.values[band] - plateau)))),
            ("h", h),
        ]
    )
    for name, value in diagnostics.items():
        logger.debug(f"{name}: {value:.3g}")
    return ExampleSolution(
        x_star=x_star,
        alpha=alpha,
        record=example_record(),
        reply_1=reply_1,
        reply_2=reply_2,
        diagnostics=diagnostics,
    )


def x_star_closed_form() -> float:
    """G^1 = 2 on [1/6, 1/3] reduces to s^3 - 3s + 2/3 = 0 with s = 12x - 3."""
    s = 2.0 * math.cos(math.acos(-1.0 / 3.0) / 3.0 + 4.0 * math.pi / 3.0)
    return (3.0 + s) / U_SCALE
