"""
Scenario files: one JSON document bundling model, rewards, strategies, grid
and simulation overrides for the CLI commands.
"""
from argparse import Namespace
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple
import json
import logging

import attrition.constants as ac
from attrition.best_reply import Grid, SolverTolerances, fit_truncation
from attrition.diffusion import DiffusionModel, Interval
from attrition.equilibrium import Profile
from attrition.errors import AttritionError, ErrMsg, InputError
from attrition.example import (
    atom_mass_for,
    build_example_payoffs,
    example_equilibrium_profile,
    find_x_star,
    LANDMARKS,
)
from attrition.payoffs import McConfig, PayoffSpec

# scenario key -> McConfig field
_SIMULATION_KEYS = {
    "paths": "n_paths",
    "dt": "dt",
    "horizon": "horizon",
    "bandwidth": "bandwidth",
    "levels": "levels",
    "block_size": "block_size",
}

DEFAULT_X0S = (0.2, 0.35, 0.5, 0.65, 0.8)


def _invalid(reason: str) -> InputError:
    return InputError(ErrMsg.SCENARIO_INVALID.value.format(reason=reason))


def _interval_from(data: Any) -> Interval:
    try:
        lo, hi = data
        return Interval(float(lo), float(hi))
    except (TypeError, ValueError):
        raise _invalid(f"interval must be a pair [lower, upper], got {data!r}")


def model_from_dict(data: Dict[str, Any]) -> DiffusionModel:
    preset = data.get("preset")
    if preset == ac.PRESET_LOGISTIC_MARTINGALE:
        return DiffusionModel.logistic_martingale()
    if preset == ac.PRESET_BROWNIAN:
        return DiffusionModel.brownian(float(data.get("discount", 0.0)))
    if preset is not None:
        raise _invalid(f"unknown model preset '{preset}'")
    try:
        model = DiffusionModel.from_coefficients(
            _interval_from(data["interval"]),
            data.get("drift", [0.0]),
            data["volatility"],
            discount=float(data.get("discount", 0.0)),
            degenerate=bool(data.get("degenerate", False)),
        )
    except KeyError as exc:
        raise _invalid(f"model is missing {exc}")
    return replace(model, name=str(data.get("name", model.name)))


def model_to_dict(model: DiffusionModel) -> Dict[str, Any]:
    if model.name in (ac.PRESET_LOGISTIC_MARTINGALE, ac.PRESET_BROWNIAN):
        return {"preset": model.name, "discount": model.discount}
    return {
        "name": model.name,
        "interval": [model.state_space.lower, model.state_space.upper],
        "drift": model.drift.coef.tolist(),
        "volatility": model.volatility.coef.tolist(),
        "discount": model.discount,
        "degenerate": model.degenerate,
    }


def _payoffs_from(data: Any) -> Tuple[PayoffSpec, PayoffSpec]:
    if data == ac.PRESET_EXAMPLE_PAYOFFS or (
        isinstance(data, dict) and data.get("preset") == ac.PRESET_EXAMPLE_PAYOFFS
    ):
        return build_example_payoffs()
    if not isinstance(data, list) or len(data) != 2:
        raise _invalid("payoffs must be the example preset or a list of two R/G specs")
    return PayoffSpec.from_dict(data[0]), PayoffSpec.from_dict(data[1])


def _profile_from(data: Any, specs: Tuple[PayoffSpec, PayoffSpec]) -> Optional[Profile]:
    if data is None:
        return None
    if data == ac.PRESET_EXAMPLE_PAYOFFS or (
        isinstance(data, dict) and data.get("preset") == ac.PRESET_EXAMPLE_PAYOFFS
    ):
        x_star = find_x_star(specs[0])
        return example_equilibrium_profile(x_star, atom_mass_for(specs[1], x_star))
    if not isinstance(data, dict):
        raise _invalid("profile must be an object with player_1 and player_2")
    return Profile.from_dict(data)


@dataclass(frozen=True)
class ScenarioFile:
    name: str
    model: DiffusionModel
    specs: Tuple[PayoffSpec, PayoffSpec]
    profile: Optional[Profile] = None
    x0s: Tuple[float, ...] = DEFAULT_X0S
    grid_n: Optional[int] = None
    grid_bounds: Tuple[Optional[float], Optional[float]] = (None, None)
    grid_points: Tuple[float, ...] = ()
    simulation: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    method: str = "policy-iteration"

    def __post_init__(self) -> None:
        interval = self.model.state_space
        for x0 in self.x0s:
            interval.require(x0)
        if self.profile is not None:
            # stopping sets may reach the endpoints of I, as in (0, x]
            for x in self.profile.special_points():
                if x not in (interval.lower, interval.upper):
                    interval.require(x)
        unknown = set(self.simulation) - set(_SIMULATION_KEYS)
        if unknown:
            raise _invalid(f"unknown simulation keys {sorted(unknown)}")
        if self.method not in ("policy-iteration", "concave-envelope"):
            raise _invalid(f"unknown best reply method '{self.method}'")

    @classmethod
    def default(cls) -> "ScenarioFile":
        """The worked example with its mixed equilibrium."""
        specs = build_example_payoffs()
        return cls(
            name=ac.PRESET_EXAMPLE_PAYOFFS,
            model=DiffusionModel.logistic_martingale(),
            specs=specs,
            profile=_profile_from(ac.PRESET_EXAMPLE_PAYOFFS, specs),
            grid_points=LANDMARKS,
        )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScenarioFile":
        if not isinstance(data, dict):
            raise _invalid("top level must be an object")
        try:
            model = model_from_dict(data["model"])
            specs = _payoffs_from(data["payoffs"])
        except KeyError as exc:
            raise _invalid(f"missing key {exc}")
        grid = data.get("grid", {})
        try:
            return cls(
                name=str(data.get("name", "scenario")),
                model=model,
                specs=specs,
                profile=_profile_from(data.get("profile"), specs),
                x0s=tuple(float(x) for x in data.get("x0", DEFAULT_X0S)),
                grid_n=int(grid["n"]) if "n" in grid else None,
                grid_bounds=(grid.get("lower"), grid.get("upper")),
                grid_points=tuple(float(x) for x in grid.get("points", ())),
                simulation=dict(data.get("simulation", {})),
                seed=int(data["seed"]) if "seed" in data else None,
                method=str(data.get("method", "policy-iteration")),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, AttritionError):
                raise
            raise _invalid(str(exc))

    @classmethod
    def load(cls, path: str) -> "ScenarioFile":
        fp = Path(path)
        if not fp.is_file():
            raise InputError(ErrMsg.SCENARIO_MISSING.value.format(path=path))
        try:
            data = json.loads(fp.read_text())
        except json.JSONDecodeError as exc:
            raise _invalid(f"{path}: {exc}")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "name": self.name,
            "model": model_to_dict(self.model),
            "payoffs": [spec.to_dict() for spec in self.specs],
            "x0": list(self.x0s),
            "grid": {"points": list(self.grid_points)},
            "simulation": dict(self.simulation),
            "method": self.method,
        }
        if self.profile is not None:
            data["profile"] = self.profile.to_dict()
        if self.grid_n is not None:
            data["grid"]["n"] = self.grid_n
        lower, upper = self.grid_bounds
        if lower is not None:
            data["grid"]["lower"] = lower
        if upper is not None:
            data["grid"]["upper"] = upper
        if self.seed is not None:
            data["seed"] = self.seed
        return data

    def require_profile(self) -> Profile:
        if self.profile is None:
            raise _invalid(f"scenario '{self.name}' has no profile")
        return self.profile

    def mc_config(self, base: McConfig, cli_args: Optional[Namespace] = None) -> McConfig:
        """Scenario keys override the config file, CLI flags override both."""
        values = {_SIMULATION_KEYS[k]: v for k, v in self.simulation.items()}
        if "levels" in values:
            values["levels"] = tuple(float(y) for y in values["levels"])
        if self.seed is not None:
            values["seed"] = self.seed
        return replace(base, **values).with_overrides(cli_args)

    def special_points(self) -> List[float]:
        points = set(self.grid_points)
        if self.profile is not None:
            points |= set(self.profile.special_points())
        return sorted(points)

    def grid(
        self,
        n: int,
        tol: Optional[SolverTolerances] = None,
        logger: Optional[logging.Logger] = None,
    ) -> Grid:
        """
        Covering grid with every special point as a node. An unbounded state
        space without explicit bounds gets a truncation fitted for player 1.
        """
        n = self.grid_n or n
        interval = self.model.state_space
        lower, upper = self.grid_bounds
        if interval.is_bounded or (lower is not None and upper is not None):
            return Grid.covering(interval, n, self.special_points(), lower, upper)
        profile = self.require_profile()
        return fit_truncation(
            self.model,
            self.specs[0],
            profile.strat_2,
            n,
            list(self.x0s) + self.special_points(),
            tol,
            logger=logger,
        )
