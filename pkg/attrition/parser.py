from typing import Tuple
import argparse

import attrition.constants as ac

_help_scenario_arg = (
    "Path to a scenario JSON file bundling model, rewards, strategies, grid and "
    "simulation settings. "
    "Without a scenario the worked example and its mixed equilibrium are used."
)


def get_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        "attrition",
        description=(
            "Solver and Monte Carlo simulator for wars of attrition on "
            "one-dimensional diffusions."
        ),
    )
    parser.add_argument("-v", "--verbose", dest="verbosity", action="count", default=0)

    subparsers = parser.add_subparsers(dest="subcmd")

    _add_simulate_parser(subparsers)
    _add_payoff_parser(subparsers)
    _add_best_reply_parser(subparsers)
    _add_verify_parser(subparsers)
    _add_example_parser(subparsers)
    _add_mollify_parser(subparsers)

    return parser


def _add_simulate_parser(subparsers: argparse._SubParsersAction):
    simulate_parser = subparsers.add_parser(
        ac.SUBCMD_SIMULATE,
        description=(
            "Simulates Euler-Maruyama paths from every starting point of the scenario "
            "and writes times, states and local time estimates at the configured "
            "levels to paths.csv."
        ),
    )
    _add_shared_args(simulate_parser)
    simulate_parser.add_argument(
        "--stride",
        type=_positive_int,
        default=None,
        help="Write every n-th time step only. Defaults to [output] stride.",
    )


def _add_payoff_parser(subparsers: argparse._SubParsersAction):
    payoff_parser = subparsers.add_parser(
        ac.SUBCMD_PAYOFF,
        description=(
            "Estimates both players' payoffs of the scenario profile with the "
            "Stieltjes and the sampled estimator on common random numbers. "
            "Results go to payoff.csv, integrability proxies to assumptions.json."
        ),
    )
    _add_shared_args(payoff_parser)


def _add_best_reply_parser(subparsers: argparse._SubParsersAction):
    best_reply_parser = subparsers.add_parser(
        ac.SUBCMD_BEST_REPLY,
        description=(
            "Solves each player's best reply against the opponent's strategy of the "
            "scenario profile. Writes the value functions to best_reply_<i>.csv and "
            "the stopping sets with the perfect best reply check to best_reply.json."
        ),
    )
    _add_shared_args(best_reply_parser)


def _add_verify_parser(subparsers: argparse._SubParsersAction):
    verify_parser = subparsers.add_parser(
        ac.SUBCMD_VERIFY,
        description=(
            "Verifies that the scenario profile is a Markov-perfect equilibrium. "
            "Exits with 1 if the verdict is not 'pass'."
        ),
    )
    _add_shared_args(verify_parser)


def _add_example_parser(subparsers: argparse._SubParsersAction):
    example_parser = subparsers.add_parser(
        ac.SUBCMD_EXAMPLE,
        description=(
            "Builds the worked example, solves x* and the atom mass, verifies the "
            "mixed equilibrium and certifies that pure best replies cycle."
        ),
    )
    _add_shared_args(example_parser)
    example_parser.add_argument(
        "--nash",
        action="store_true",
        help="Also check the non-Markov Nash equilibrium built from the iteration.",
    )


def _add_mollify_parser(subparsers: argparse._SubParsersAction):
    mollify_parser = subparsers.add_parser(
        ac.SUBCMD_MOLLIFY,
        description=(
            "Samples the density of the mollified measure H(m, eps) for plotting. "
            "The measure is given by atoms on the command line or by player 1's "
            "strategy of the scenario."
        ),
    )
    _add_shared_args(mollify_parser)
    mollify_parser.add_argument(
        "--eps",
        type=_unit_float,
        required=True,
        help="Homotopy parameter in [0, 1].",
    )
    mollify_parser.add_argument(
        "--atom",
        type=_atom,
        action="append",
        default=None,
        metavar="X:MASS",
        help="Atom of the measure, can be repeated.",
    )
    mollify_parser.add_argument(
        "--samples",
        type=_positive_int,
        default=2001,
        help="Number of sample points of the density.",
    )


def _add_shared_args(parser: argparse.ArgumentParser):
    parser.add_argument("--scenario", type=str, default=None, help=_help_scenario_arg)
    parser.add_argument("--seed", type=int, default=None, help="Master seed.")
    parser.add_argument(
        "--workers", type=_positive_int, default=None, help="Number of worker threads."
    )
    parser.add_argument(
        "--out", type=str, default=".", help="Output directory, created if missing."
    )
    parser.add_argument("--dt", type=_positive_float, default=None, help="Time step.")
    parser.add_argument(
        "--horizon", type=_positive_float, default=None, help="Truncation horizon T."
    )
    parser.add_argument(
        "--paths", type=_positive_int, default=None, help="Number of Monte Carlo paths."
    )
    parser.add_argument(
        "--grid-n", type=_positive_int, default=None, help="Number of grid nodes."
    )
    parser.add_argument(
        "--tol", type=_positive_float, default=None, help="Value tolerance tol_v."
    )


def _positive_int(value: str) -> int:
    value_int = int(value)
    if value_int <= 0:
        raise argparse.ArgumentTypeError(f"{value} is not a positive int value.")
    return value_int


def _positive_float(value: str) -> float:
    value_float = float(value)
    if not value_float > 0:
        raise argparse.ArgumentTypeError(f"{value} is not a positive float value.")
    return value_float


def _unit_float(value: str) -> float:
    value_float = float(value)
    if not 0.0 <= value_float <= 1.0:
        raise argparse.ArgumentTypeError(f"{value} does not lie in [0, 1].")
    return value_float


def _atom(value: str) -> Tuple[float, float]:
    parts = value.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"{value} is not in the format X:MASS")
    try:
        x, mass = float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"{value} is not in the format X:MASS")
    if not mass > 0:
        raise argparse.ArgumentTypeError(f"Atom mass in {value} must be positive.")
    return x, mass
