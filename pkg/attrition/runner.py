from argparse import Namespace
from configparser import ConfigParser
from pathlib import Path
from typing import Any, Dict, List, Optional
import logging

import numpy as np  # type: ignore
import pandas as pd  # type: ignore
from scipy import integrate  # type: ignore

import attrition.constants as ac
from attrition.best_reply import (
    BestReplyResult,
    SolverTolerances,
    concave_envelope_best_reply,
    pbr_check,
    solve_best_reply,
    value_frame,
)
from attrition.diffusion import EulerScheme, Interval, block_seeds, seed_sequence
from attrition.equilibrium import (
    Profile,
    VerifyTolerances,
    check_nonmarkov_nash,
    no_pure_certificate,
    pure_best_reply_iteration,
    verify_mpe,
)
from attrition.errors import ErrMsg, InputError
from attrition.example import build_example_payoffs, solve_example
from attrition.measures import ExtendedMeasure, LocallyFiniteMeasure, mollify
from attrition.payoffs import McConfig, check_assumptions, evaluate_profile
from attrition.scenario import ScenarioFile
from attrition.strategies import MarkovStrategy
from attrition.utils.formatting import dump_json, format_estimate
from attrition.utils.schema import (
    DENSITY_SCHEMA,
    GAP_SCHEMA,
    PAYOFF_SCHEMA,
    df_from_rows,
    local_time_col,
    path_schema,
)


class Runner(object):
    """
    Executes the CLI commands and writes their artifacts to the output
    directory. Every command returns the process exit code.
    """

    def __init__(
        self,
        out_dir: str,
        mc: McConfig,
        tol: SolverTolerances,
        vtol: VerifyTolerances,
        grid_n: int,
        cli_args: Optional[Namespace] = None,
        float_format: str = "%.10g",
        stride: int = 10,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.out_dir = Path(out_dir)
        self.mc = mc
        self.tol = tol
        self.vtol = vtol
        self.grid_n = grid_n
        self.cli_args = cli_args
        self.float_format = float_format
        self.stride = stride
        if logger is not None:
            self.logger = logger
        else:
            self.logger = logging.getLogger(ac.DEFAULT_LOGGER_NAME)

    @classmethod
    def from_config(
        cls, cfg: ConfigParser, cli_args: Namespace, logger: Optional[logging.Logger] = None
    ) -> "Runner":
        grid_n = cfg.getint("solver", "grid_n")
        if getattr(cli_args, "grid_n", None) is not None:
            grid_n = cli_args.grid_n
        stride = cfg.getint("output", "stride")
        if getattr(cli_args, "stride", None) is not None:
            stride = cli_args.stride
        return cls(
            out_dir=getattr(cli_args, "out", "."),
            # scenario keys go between the config file and the CLI flags
            mc=McConfig.from_config(cfg),
            tol=SolverTolerances.from_config(cfg, cli_args),
            vtol=VerifyTolerances.from_config(cfg, cli_args),
            grid_n=grid_n,
            cli_args=cli_args,
            float_format=cfg.get("output", "float_format", raw=True),
            stride=stride,
            logger=logger,
        )

    def load_scenario(self, path: Optional[str]) -> ScenarioFile:
        if path is None:
            self.logger.debug("No scenario given, using the worked example")
            return ScenarioFile.default()
        return ScenarioFile.load(path)

    def mc_for(self, scenario: ScenarioFile) -> McConfig:
        mc = scenario.mc_config(self.mc, self.cli_args)
        mc.check_coupling(scenario.model, self.logger)
        return mc

    def _write_csv(self, df: pd.DataFrame, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        fp = self.out_dir / name
        df.to_csv(fp, index=False, float_format=self.float_format)
        self.logger.info(f"Wrote {fp}")
        return fp

    def _write_json(self, data: Any, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        fp = self.out_dir / name
        fp.write_text(dump_json(data))
        self.logger.info(f"Wrote {fp}")
        return fp

    def cmd_simulate(self, scenario: ScenarioFile) -> int:
        """Paths and local times from every x0, thinned to every stride-th step."""
        mc = self.mc_for(scenario)
        model = scenario.model
        levels = np.asarray(mc.levels, dtype=float)
        for y in levels:
            model.state_space.require(float(y))
        n = mc.n_steps
        kept = np.arange(0, n + 1, self.stride)
        children = seed_sequence(mc.seed).spawn(len(scenario.x0s))
        frames = []
        for x0, child in zip(scenario.x0s, children):
            offset = 0
            for seq, size in block_seeds(child, mc.n_paths, mc.block_size):
                scheme = EulerScheme(
                    model, x0, mc.dt, size, np.random.default_rng(seq), mc.boundary_clamp
                )
                states = np.empty((len(kept), size))
                local = np.zeros((len(kept), size, len(levels)))
                acc = np.zeros((size, len(levels)))
                row = 0
                for k in range(n + 1):
                    if row < len(kept) and kept[row] == k:
                        states[row] = scheme.states
                        local[row] = acc
                        row += 1
                    if k == n:
                        break
                    x = scheme.states
                    if len(levels):
                        w = model.volatility_at(x) ** 2 * mc.dt / (2.0 * mc.bandwidth)
                        acc += (np.abs(x[:, None] - levels[None, :]) < mc.bandwidth) * w[:, None]
                    scheme.advance()
                n_clamped = int(np.sum(scheme.clamped))
                if n_clamped:
                    self.logger.warning(f"{n_clamped} paths from x0={x0} were clamped")
                data: Dict[str, Any] = {
                    ac.COL_SCENARIO: scenario.name,
                    ac.COL_X0: x0,
                    ac.COL_PATH: np.repeat(np.arange(offset, offset + size), len(kept)),
                    ac.COL_TIME: np.tile(kept * mc.dt, size),
                    ac.COL_STATE: states.T.ravel(),
                }
                for j, y in enumerate(levels):
                    data[local_time_col(y)] = local[:, :, j].T.ravel()
                frames.append(pd.DataFrame(data))
                offset += size
        df = pd.concat(frames, ignore_index=True)
        schema = path_schema(levels)
        self._write_csv(df[[c for c, _ in schema]].astype(dict(schema)), "paths.csv")
        return ac.EXIT_OK

    def cmd_payoff(self, scenario: ScenarioFile) -> int:
        mc = self.mc_for(scenario)
        profile = scenario.require_profile()
        rows: List[Dict[str, Any]] = []
        assumptions: Dict[str, Any] = {}
        for x0 in scenario.x0s:
            evaluation = evaluate_profile(
                scenario.model, scenario.specs, x0, (profile.strat_1, profile.strat_2), mc, self.logger
            )
            for (player, estimator), est in sorted(evaluation.estimates.items()):
                row = est.to_dict()
                row.update(
                    {
                        ac.COL_SCENARIO: scenario.name,
                        ac.COL_X0: x0,
                        ac.COL_PLAYER: player,
                        ac.COL_ESTIMATOR: estimator,
                    }
                )
                rows.append(row)
                print(
                    f"x0={x0:g} player {player} {estimator}: "
                    f"{format_estimate(est.mean, est.se)}"
                )
            for player, spec in zip((1, 2), scenario.specs):
                report = check_assumptions(scenario.model, spec, x0, mc)
                assumptions[f"x0={x0:g}/player_{player}"] = {
                    name: {"sup": sup, "tail": tail} for name, (sup, tail) in report.proxies.items()
                }
        self._write_csv(df_from_rows(rows, PAYOFF_SCHEMA), "payoff.csv")
        self._write_json({"horizon": mc.horizon, "proxies": assumptions}, "assumptions.json")
        return ac.EXIT_OK

    def _best_reply(
        self, scenario: ScenarioFile, player: int, profile: Profile, grid
    ) -> BestReplyResult:
        opp = profile.opponent_of(player)
        spec = scenario.specs[player - 1]
        if scenario.method == "concave-envelope":
            if not opp.is_pure:
                raise InputError(ErrMsg.NOT_PURE.value.format(player=3 - player))
            return concave_envelope_best_reply(
                spec, opp.stop_set, grid, self.tol, scenario.model, self.mc.workers, self.logger
            )
        return solve_best_reply(
            scenario.model, spec, opp, grid, self.tol, self.mc.workers, self.logger
        )

    def cmd_best_reply(self, scenario: ScenarioFile) -> int:
        profile = scenario.require_profile()
        grid = scenario.grid(self.grid_n, self.tol, self.logger)
        report: Dict[str, Any] = {"scenario": scenario.name}
        for player in (1, 2):
            result = self._best_reply(scenario, player, profile, grid)
            check = pbr_check(profile.of(player), result, profile.opponent_of(player), self.tol)
            self._write_csv(value_frame(result), f"best_reply_{player}.csv")
            report[f"player_{player}"] = dict(result.to_dict(), pbr=check.to_dict())
            print(f"player {player}: S_bar = {result.S_bar}, S_under = {result.S_under}")
        self._write_json(report, "best_reply.json")
        return ac.EXIT_OK

    def cmd_verify(self, scenario: ScenarioFile) -> int:
        mc = self.mc_for(scenario)
        profile = scenario.require_profile()
        grid = scenario.grid(self.grid_n, self.tol, self.logger)
        report = verify_mpe(
            profile, scenario.model, scenario.specs, grid, mc, self.tol, self.vtol, self.logger
        )
        self._write_json(dict(report.to_dict(), scenario=scenario.name), "mpe_report.json")
        self._write_csv(df_from_rows([r.to_dict() for r in report.gaps], GAP_SCHEMA), "gaps.csv")
        print(f"verdict: {report.verdict}")
        for reason in report.reasons:
            print(f"  {reason}")
        return ac.EXIT_OK if report.passed else ac.EXIT_VERIFICATION_FAILED

    def cmd_example(self, nash: bool = False) -> int:
        """
        Solves the worked example and writes example_solution.json, w1.csv,
        w2.csv, mpe_report.json and iteration.json (nash_report.json with
        --nash).
        """
        scenario = ScenarioFile.default()
        mc = self.mc_for(scenario)
        solution = solve_example(
            tol=self.tol, n=self.grid_n, workers=mc.workers, logger=self.logger
        )
        self._write_json(solution.to_dict(), "example_solution.json")
        self._write_csv(value_frame(solution.reply_1), "w1.csv")
        self._write_csv(value_frame(solution.reply_2), "w2.csv")

        model = scenario.model
        specs = build_example_payoffs()
        grid = solution.w2.grid
        tol = solution.reply_2.tolerances
        report = verify_mpe(solution.profile, model, specs, grid, mc, tol, self.vtol, self.logger)
        self._write_json(report.to_dict(), "mpe_report.json")

        never = MarkovStrategy.never()
        trace = pure_best_reply_iteration(Profile(never, never), model, specs, grid, tol, logger=self.logger)
        certificate = no_pure_certificate(trace, specs, grid, tol)
        self._write_json(
            {"trace": trace.to_dict(), "certificate": [c.to_dict() for c in certificate]},
            "iteration.json",
        )

        failed = solution.failed_checks()
        failed += [c.name for c in certificate if not c.passed]
        if not report.passed:
            failed.append(f"mpe verdict {report.verdict}")
        if nash:
            # the threat uses player 1's first reply and player 2's reply to never
            S1, S2 = trace.profiles[2][0], trace.profiles[1][1]
            nash_report = check_nonmarkov_nash(
                model, specs, self.vtol.probes, mc, S1, S2, self.vtol, self.logger
            )
            self._write_json(nash_report.to_dict(), "nash_report.json")
            if not nash_report.passed:
                failed.append("nonmarkov_nash")

        print(f"x* = {solution.x_star:.10f}, alpha = {solution.alpha:.10f}")
        print(f"verdict: {report.verdict}")
        for name in failed:
            print(f"  failed: {name}")
        return ac.EXIT_VERIFICATION_FAILED if failed else ac.EXIT_OK

    def cmd_mollify(
        self,
        scenario: Optional[ScenarioFile],
        eps: float,
        atoms: Optional[List] = None,
        samples: int = 2001,
    ) -> int:
        """
        Density samples of H(m, eps). Atoms given on the command line live on
        the real line unless a scenario names the state space.
        """
        if atoms:
            interval = scenario.model.state_space if scenario is not None else Interval()
            m = ExtendedMeasure(LocallyFiniteMeasure(atoms=tuple(atoms)))
        else:
            scenario = scenario or ScenarioFile.default()
            interval = scenario.model.state_space
            m = scenario.require_profile().strat_1.to_extended()
        result = mollify(m, eps, interval)
        mu = result.finite_part
        xs = interval.interior_points(samples)
        if mu.densities:
            lo = min(p.lower for p in mu.densities)
            hi = max(p.upper for p in mu.densities)
            knots = [x for p in mu.densities for x in (p.lower, p.upper)]
            xs = np.unique(np.concatenate([np.linspace(lo, hi, samples), knots]))
        density = mu.density_at(xs)
        rows = [{ac.COL_STATE: x, ac.COL_DENSITY: d} for x, d in zip(xs, density)]
        self._write_csv(df_from_rows(rows, DENSITY_SCHEMA), "mollify.csv")
        summary = {
            "eps": eps,
            "measure": result.to_dict(),
            "total_mass": mu.total_mass(),
            "trapezoid_mass": float(integrate.trapezoid(density, xs)),
        }
        self._write_json(summary, "mollify.json")
        print(f"mass of H(m, {eps:g}): {mu.total_mass():.10g}")
        return ac.EXIT_OK
