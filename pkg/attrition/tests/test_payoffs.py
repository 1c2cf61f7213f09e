import unittest
from argparse import Namespace
from dataclasses import replace
from configparser import ConfigParser
import math

import numpy as np

import attrition.constants as ac
from attrition.best_reply import Grid, SolverTolerances, solve_best_reply
from attrition.diffusion import DiffusionModel, Interval
from attrition.errors import InputError, NumericalError
from attrition.example import build_example_payoffs
from attrition.measures import ClosedSet, LocallyFiniteMeasure
from attrition.payoffs import (
    GameSimulator,
    McConfig,
    PayoffSpec,
    check_assumptions,
    evaluate_profile,
    paired_gain,
    payoff_sampled,
    payoff_stieltjes,
)
from attrition.strategies import MarkovStrategy
from attrition.utils.polynomials import PiecewisePolynomial


def _constant_spec(r, g):
    return PayoffSpec(PiecewisePolynomial.constant(r), PiecewisePolynomial.constant(g))


def _frozen_model():
    return DiffusionModel.from_coefficients(Interval(0.0, 1.0), [0.0], [0.0], degenerate=True)


class TestPayoffSpec(unittest.TestCase):
    def test_check_rejects_R_above_G(self):
        spec = PayoffSpec(PiecewisePolynomial.single([0.0, 2.0]), PiecewisePolynomial.constant(1.0))
        spec.check(np.array([0.1, 0.5]))
        with self.assertRaises(InputError):
            spec.check(np.array([0.1, 0.9]))

    def test_nan_reward(self):
        with self.assertRaises(NumericalError):
            _constant_spec(0.0, 1.0).rewards(np.array([np.nan]))

    def test_shifted_moves_G_only(self):
        spec = _constant_spec(1.0, 2.0).shifted(0.5)
        r, g = spec.rewards(np.array([0.3]))
        self.assertEqual(r[0], 1.0)
        self.assertEqual(g[0], 2.5)

    def test_dict_form(self):
        spec = PayoffSpec.from_dict({"R": {"poly": [0.0, 1.0]}, "G": {"constant": 2.0}})
        self.assertDictEqual(spec.to_dict(), {"R": {"poly": [0.0, 1.0]}, "G": {"constant": 2.0}})
        with self.assertRaises(InputError):
            PayoffSpec.from_dict({"R": {"constant": 1.0}})


class TestMcConfig(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(InputError):
            McConfig(n_paths=0)
        with self.assertRaises(InputError):
            McConfig(dt=0.3, horizon=1.0)

    def test_from_config(self):
        cfg = ConfigParser(interpolation=None)
        cfg.read(ac.CONFIG_FILES[0])
        mc = McConfig.from_config(cfg)
        self.assertEqual(mc.n_paths, 4000)
        self.assertEqual(mc.dt, 0.001)
        self.assertEqual(mc.n_steps, 20000)
        self.assertTupleEqual(mc.levels, (0.5,))

    def test_cli_flags_take_precedence(self):
        cfg = ConfigParser(interpolation=None)
        cfg.read(ac.CONFIG_FILES[0])
        ns = Namespace(paths=10, dt=None, horizon=None, seed=5, workers=None)
        mc = McConfig.from_config(cfg, ns)
        self.assertEqual(mc.n_paths, 10)
        self.assertEqual(mc.seed, 5)
        self.assertEqual(mc.dt, 0.001)
        self.assertEqual(mc.workers, 1)

    def test_with_overrides_without_args(self):
        mc = McConfig()
        self.assertIs(mc.with_overrides(None), mc)


class TestExactPayoffs(unittest.TestCase):
    def setUp(self):
        self.cfg = McConfig(n_paths=8, dt=0.01, horizon=1.0, block_size=4)
        self.specs = (_constant_spec(1.0, 2.0), _constant_spec(3.0, 4.0))
        self.stop_now = MarkovStrategy.pure(ClosedSet.of([(0.4, 0.6)]))

    def test_a_tie_goes_to_each_stopper(self):
        evaluation = evaluate_profile(
            _frozen_model(), self.specs, 0.5, (self.stop_now, self.stop_now), self.cfg
        )
        for estimator in (ac.ESTIMATOR_STIELTJES, ac.ESTIMATOR_SAMPLED):
            self.assertEqual(evaluation.get(1, estimator).mean, 1.0)
            self.assertEqual(evaluation.get(2, estimator).mean, 3.0)
            self.assertEqual(evaluation.get(1, estimator).se, 0.0)

    def test_the_waiting_player_collects_G(self):
        evaluation = evaluate_profile(
            _frozen_model(), self.specs, 0.5, (self.stop_now, MarkovStrategy.never()), self.cfg
        )
        self.assertEqual(evaluation.get(1).mean, 1.0)
        self.assertEqual(evaluation.get(2).mean, 4.0)
        self.assertEqual(evaluation.get(2).survival, 0.0)
        self.assertTrue(evaluation.get(2).tail_ok)

    def test_discounted_hit_of_a_moving_state(self):
        model = DiffusionModel.from_coefficients(
            Interval(), [1.0], [0.0], discount=0.5, degenerate=True
        )
        spec = PayoffSpec(PiecewisePolynomial.single([0.0, 1.0]), PiecewisePolynomial.single([1.0, 1.0]))
        cfg = McConfig(n_paths=4, dt=1e-3, horizon=2.0, block_size=4)
        stop_above_one = MarkovStrategy.pure(ClosedSet(((1.0, math.inf),)))
        stj = payoff_stieltjes(model, spec, 0.0, stop_above_one, MarkovStrategy.never(), cfg)
        smp = payoff_sampled(model, spec, 0.0, stop_above_one, MarkovStrategy.never(), cfg)
        # R(1) at time 1, discounted at rate 1/2
        self.assertAlmostEqual(stj.mean, math.exp(-0.5), places=3)
        self.assertAlmostEqual(smp.mean, stj.mean)

    def test_tail_budget_warning(self):
        with self.assertLogs(ac.DEFAULT_LOGGER_NAME, level="WARNING") as logs:
            evaluation = evaluate_profile(
                _frozen_model(),
                self.specs,
                0.5,
                (MarkovStrategy.never(), MarkovStrategy.never()),
                self.cfg,
            )
        self.assertFalse(evaluation.get(1).tail_ok)
        self.assertEqual(evaluation.get(1).tail, 2.0)
        self.assertEqual(evaluation.get(1).survival, 1.0)
        self.assertTrue(any("Truncation tail" in line for line in logs.output))


class TestMonteCarloPayoffs(unittest.TestCase):
    def setUp(self):
        self.model = DiffusionModel.logistic_martingale()
        self.cfg = McConfig(n_paths=2000, dt=1e-3, horizon=10.0, block_size=500, seed=17)

    def test_optional_stopping_of_the_martingale(self):
        spec = PayoffSpec(PiecewisePolynomial.single([0.0, 1.0]), PiecewisePolynomial.single([1.0, 1.0]))
        outer = MarkovStrategy.pure(ClosedSet(((0.0, 0.25), (0.75, 1.0))))
        evaluation = evaluate_profile(
            self.model, (spec, PayoffSpec.zero()), 0.5, (outer, MarkovStrategy.never()), self.cfg
        )
        est = evaluation.get(1)
        self.assertLess(abs(est.mean - 0.5), 3 * est.se + 0.02)
        self.assertTrue(est.tail_ok)

    def test_results_do_not_depend_on_workers(self):
        cfg = McConfig(n_paths=300, dt=0.01, horizon=1.0, block_size=100, seed=3)
        specs = (_constant_spec(0.0, 1.0), _constant_spec(0.0, 1.0))
        pair = (MarkovStrategy.atom(0.5, 5.0), MarkovStrategy.pure(ClosedSet.point(0.7)))
        serial = GameSimulator(self.model, specs, cfg).run(0.5, [pair])[0]
        parallel = GameSimulator(self.model, specs, replace(cfg, workers=3)).run(
            0.5, [pair]
        )[0]
        np.testing.assert_array_equal(serial.stieltjes[0], parallel.stieltjes[0])
        np.testing.assert_array_equal(serial.sampled[1], parallel.sampled[1])

    def test_paired_gain(self):
        mean, se = paired_gain(np.array([1.0, 2.0, 3.0]), np.array([1.0, 1.0, 1.0]))
        self.assertAlmostEqual(mean, 1.0)
        self.assertAlmostEqual(se, 1.0 / math.sqrt(3.0))

    def test_assumption_proxies(self):
        cfg = McConfig(n_paths=50, dt=0.01, horizon=1.0)
        report = check_assumptions(self.model, _constant_spec(1.0, 2.0), 0.5, cfg)
        self.assertTupleEqual(report.proxies["R"], (1.0, 1.0))
        self.assertEqual(report.sup_proxy("G"), 2.0)
        self.assertEqual(report.tail_proxy("G"), 2.0)


def _outer(a, b):
    return MarkovStrategy.pure(ClosedSet(((0.0, a), (b, 1.0))))


class TestEstimatorAgreement(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.model = DiffusionModel.logistic_martingale()
        cls.specs = build_example_payoffs()
        cls.cfg = McConfig(n_paths=1000, dt=2e-3, horizon=4.0, block_size=500, seed=23)
        cls.pairs = [
            (MarkovStrategy.atom(0.5, 2.5), _outer(0.27, 0.73)),
            (MarkovStrategy.never(), _outer(0.3, 0.7)),
            (MarkovStrategy.pure(ClosedSet.of([(0.45, 0.55)])), MarkovStrategy.atom(0.3, 1.0)),
            (
                MarkovStrategy(LocallyFiniteMeasure.uniform(0.35, 0.65, 4.0), ClosedSet.empty()),
                _outer(0.2, 0.8),
            ),
            (MarkovStrategy.atom(0.4, 1.5), MarkovStrategy.atom(0.6, 1.5)),
        ]
        cls.outcomes = GameSimulator(cls.model, cls.specs, cls.cfg).run(0.4, cls.pairs)

    def test_stieltjes_and_sampled_agree(self):
        for k, outcome in enumerate(self.outcomes):
            for player in (1, 2):
                with self.subTest(pair=k, player=player):
                    stj = outcome.estimate(player, ac.ESTIMATOR_STIELTJES, self.cfg.tail_budget)
                    smp = outcome.estimate(player, ac.ESTIMATOR_SAMPLED, self.cfg.tail_budget)
                    # same-step ties are settled differently by the two estimators
                    self.assertLessEqual(
                        abs(stj.mean - smp.mean), 3 * (stj.se + smp.se) + 1e-3
                    )

    def test_stieltjes_has_the_smaller_spread(self):
        # conditioning on the path removes the noise of the devices
        for k, outcome in enumerate(self.outcomes):
            with self.subTest(pair=k):
                stj = outcome.estimate(1, ac.ESTIMATOR_STIELTJES, self.cfg.tail_budget)
                smp = outcome.estimate(1, ac.ESTIMATOR_SAMPLED, self.cfg.tail_budget)
                self.assertLessEqual(stj.se, smp.se + 1e-12)

    def test_raising_G_adds_the_discounted_waiting_mass(self):
        spec_1, spec_2 = self.specs
        c = 0.25
        waiting = PayoffSpec(PiecewisePolynomial.constant(0.0), PiecewisePolynomial.constant(1.0))
        pair = [self.pairs[0]]
        base = GameSimulator(self.model, self.specs, self.cfg).run(0.4, pair)[0]
        raised = GameSimulator(self.model, (spec_1.shifted(c), spec_2), self.cfg).run(0.4, pair)[0]
        mass = GameSimulator(self.model, (waiting, spec_2), self.cfg).run(0.4, pair)[0]

        np.testing.assert_allclose(
            raised.stieltjes[0] - base.stieltjes[0], c * mass.stieltjes[0], rtol=0.0, atol=1e-12
        )
        self.assertGreater(float(np.mean(mass.stieltjes[0])), 0.0)
        self.assertTrue(np.all(raised.sampled[0] >= base.sampled[0] - 1e-12))
        # player 2 is untouched
        np.testing.assert_array_equal(raised.stieltjes[1], base.stieltjes[1])


class TestAgainstTheBestReply(unittest.TestCase):
    """
    Discounted Brownian motion, R = 1/2 and G = 1 against an opponent who
    stops at 0: v = cosh(sqrt(2) (b - |x|)) / 2 below b = arccosh(2) / sqrt(2).
    """

    X0S = (0.2, 0.5, 0.8, -0.5, 1.5)

    @classmethod
    def setUpClass(cls):
        cls.model = DiffusionModel.brownian(discount=1.0)
        cls.spec = _constant_spec(0.5, 1.0)
        cls.opp = MarkovStrategy.pure(ClosedSet.point(0.0))
        grid = Grid.covering(Interval(), 799, (0.0,) + cls.X0S, -4.0, 4.0)
        cls.result = solve_best_reply(cls.model, cls.spec, cls.opp, grid, SolverTolerances())
        cls.cfg = McConfig(n_paths=2000, dt=2.5e-4, horizon=3.0, block_size=1000, seed=29)
        cls.b = math.acosh(2.0) / math.sqrt(2.0)

    def _v(self, x):
        return 0.5 * math.cosh(math.sqrt(2.0) * max(self.b - abs(x), 0.0))

    def test_solver_matches_the_closed_form(self):
        for x0 in self.X0S:
            self.assertAlmostEqual(float(self.result.value(x0)), self._v(x0), delta=1e-3)

    def test_greedy_stopping_attains_the_value(self):
        greedy = MarkovStrategy.pure(self.result.S_bar)
        sim = GameSimulator(self.model, (self.spec, PayoffSpec.zero()), self.cfg)
        for x0 in self.X0S:
            with self.subTest(x0=x0):
                est = sim.run(x0, [(greedy, self.opp)])[0].estimate(
                    1, ac.ESTIMATOR_STIELTJES, self.cfg.tail_budget
                )
                v = float(self.result.value(x0))
                self.assertLessEqual(abs(est.mean - v), 3 * est.se + 0.03)

    def test_no_strategy_beats_the_value(self):
        x0 = 0.5
        v = float(self.result.value(x0))
        candidates = [
            MarkovStrategy.never(),
            MarkovStrategy.pure(ClosedSet(((0.3, math.inf),))),
            MarkovStrategy.atom(1.0, 2.0),
            MarkovStrategy.pure(ClosedSet.point(0.8)),
            MarkovStrategy.atom(0.5, 3.0),
        ]
        sim = GameSimulator(self.model, (self.spec, PayoffSpec.zero()), self.cfg)
        outcomes = sim.run(x0, [(s, self.opp) for s in candidates])
        for s, outcome in zip(candidates, outcomes):
            with self.subTest(strategy=str(s)):
                est = outcome.estimate(1, ac.ESTIMATOR_STIELTJES, self.cfg.tail_budget)
                self.assertLessEqual(est.mean, v + 3 * est.se + 0.03)
