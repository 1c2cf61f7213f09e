from enum import Enum


class ErrMsg(Enum):
    NA = "N/A"
    POINT_OUTSIDE_INTERVAL = "Point {x} is not inside the state space {interval}"
    EMPTY_INTERVAL = "Interval lower bound {lower} must be smaller than {upper}"
    NON_POSITIVE = "{name} must be positive, got {value}"
    NEGATIVE_DISCOUNT = "Discount rate must be non-negative, got {value}"
    HORIZON_NOT_MULTIPLE = "Horizon {horizon} is not a multiple of dt={dt}"
    NON_FINITE_COEFFICIENT = (
        "Non-finite {name} coefficient encountered at x={x}. "
        "Check the model definition."
    )
    DEGENERATE_VOLATILITY = (
        "Volatility must be positive on the state space, got {value} at x={x}"
    )
    EMPTY_LEVELS = "Local time estimation needs at least one level"
    BAD_BANDWIDTH = "Bandwidth must be positive, got {value}"
    BAD_COMPONENT = "Closed set component [{a}, {b}] is malformed"
    OVERLAPPING_COMPONENTS = "Closed set components [{a}, {b}] and [{c}, {d}] overlap"
    DUPLICATE_ATOM = "Atom location {x} appears more than once"
    BAD_ATOM_MASS = "Atom mass at {x} must be positive, got {mass}"
    BAD_DENSITY_PIECE = "Density piece on [{a}, {b}] is malformed"
    NEGATIVE_DENSITY = "Density piece on [{a}, {b}] takes negative values"
    CARRIER_OVERLAP = (
        "Intensity carrier meets the stopping set near x={x}. "
        "A strategy needs an intensity carried off its stopping set."
    )
    BAD_EPS = "Mollification parameter must lie in [0, 1], got {value}"
    PROBE_ON_EXPLOSION = (
        "Probe support [{a}, {b}] meets the explosion set of the limit measure"
    )
    ATOM_OFF_LEVELS = (
        "Atom at {x} is not a level of the local time field. "
        "The level grid must contain every atom location."
    )
    LEVELS_DO_NOT_COVER = (
        "Local time levels [{lo}, {hi}] do not cover the intensity carrier [{a}, {b}]"
    )
    BAD_UNIFORM = "Randomization draw must lie in [0, 1), got {value}"
    NAN_REWARD = "Reward function returned NaN at x={x}"
    A0_VIOLATED = "R > G at x={x} (R={r}, G={g}); rewards must satisfy R <= G"
    GRID_MISSING_POINT = "Grid has no node at special point {x}"
    GRID_TOO_SMALL = "Grid needs at least {n} nodes, got {got}"
    NOT_CONVERGED = "Policy iteration did not converge within {max_iter} iterations"
    NOT_DRIFTLESS = (
        "The concave envelope method needs a driftless, undiscounted model "
        "(max |b|={drift}, r={discount})"
    )
    NOT_PURE = "Best reply iteration needs pure strategies, player {player} is mixed"
    NO_CYCLE = "No fixed point or cycle detected within {max_iter} updates"
    NO_SIGN_CHANGE = "No sign change of {name} on [{a}, {b}]"
    EXAMPLE_PROPERTY_FAILED = "Example payoff property '{name}' does not hold"
    SCENARIO_INVALID = "Scenario file is invalid: {reason}"
    SCENARIO_MISSING = "Scenario file {path} does not exist"
    TAIL_BUDGET_EXCEEDED = (
        "Truncation tail {tail:.3g} exceeds the budget {budget:.3g}; "
        "increase the horizon"
    )
    COUPLING_VIOLATED = (
        "Bandwidth {eps} is below 10*sigma_max*sqrt(dt)={bound:.3g}; "
        "local time estimates will be noisy"
    )


class AttritionError(Exception):
    """Base class of all errors raised by the package."""


class InputError(AttritionError, ValueError):
    """Malformed input: schema violations, points outside I, bad parameters."""


class NumericalError(AttritionError, ArithmeticError):
    """Numerical failure: non-finite values, solver non-convergence."""
