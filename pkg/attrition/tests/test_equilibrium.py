import unittest
from unittest.mock import patch
from configparser import ConfigParser

import numpy as np

import attrition.constants as ac
from attrition.best_reply import Grid, SolverTolerances
from attrition.diffusion import DiffusionModel, Interval
from attrition.equilibrium import (
    Profile,
    VerifyTolerances,
    calibrate_atom_mass,
    check_nonmarkov_nash,
    no_pure_certificate,
    pure_best_reply_iteration,
    same_set,
    verify_mpe,
)
from attrition.errors import InputError, NumericalError
from attrition.example import (
    atom_mass_for,
    build_example_payoffs,
    example_equilibrium_profile,
    example_grid,
    find_x_star,
)
from attrition.measures import ClosedSet
from attrition.payoffs import McConfig, PayoffSpec
from attrition.strategies import MarkovStrategy
from attrition.utils.polynomials import PiecewisePolynomial

UNIT = Interval(0.0, 1.0)
THIRD = 1.0 / 3.0


class ExampleMixin(object):
    @classmethod
    def setUpClass(cls):
        cls.model = DiffusionModel.logistic_martingale()
        cls.specs = build_example_payoffs()
        cls.x_star = find_x_star(cls.specs[0])
        cls.alpha = atom_mass_for(cls.specs[1], cls.x_star)
        cls.tol = SolverTolerances(closure=ac.CLOSURE_ZERO)


class TestProfile(unittest.TestCase):
    def test_special_points(self):
        profile = Profile(
            MarkovStrategy.atom(0.5, 1.0), MarkovStrategy.pure(ClosedSet(((0.0, 0.25), (0.75, 1.0))))
        )
        self.assertListEqual(profile.special_points(), [0.0, 0.25, 0.5, 0.75, 1.0])
        self.assertFalse(profile.is_pure)
        self.assertIs(profile.opponent_of(1), profile.strat_2)
        self.assertIs(profile.of(1), profile.strat_1)

    def test_dict_form(self):
        profile = Profile.pure(ClosedSet.point(0.5), ClosedSet.empty())
        self.assertEqual(Profile.from_dict(profile.to_dict()), profile)
        with self.assertRaises(InputError):
            Profile.from_dict({"player_1": {}})

    def test_str(self):
        profile = Profile.pure(ClosedSet.point(0.5), ClosedSet.empty())
        self.assertEqual(str(profile), "player 1: (mu=0, S={0.5}); player 2: (mu=0, S={})")


class TestVerifyTolerances(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(InputError):
            VerifyTolerances(probes=())
        with self.assertRaises(InputError):
            VerifyTolerances(budget=-1.0)

    def test_allowance(self):
        vtol = VerifyTolerances(budget=0.02, se_multiplier=3.0)
        self.assertAlmostEqual(vtol.allowance(0.01), 0.05)

    def test_from_config(self):
        cfg = ConfigParser(interpolation=None)
        cfg.read(ac.CONFIG_FILES[0])
        vtol = VerifyTolerances.from_config(cfg)
        self.assertTupleEqual(vtol.probes, (0.2, 0.35, 0.5, 0.65, 0.8))
        self.assertEqual(vtol.deviations, 20)


class TestSameSet(unittest.TestCase):
    def test_same_set_up_to_tolerance(self):
        a = ClosedSet.of([(0.2, 0.4)])
        b = ClosedSet.of([(0.2, 0.401)])
        self.assertTrue(same_set(a, b, 0.0, 1.0, 0.005))
        self.assertFalse(same_set(a, b, 0.0, 1.0, 0.0005))


class TestIteration(ExampleMixin, unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.grid = example_grid(600, cls.x_star)
        start = Profile.pure(ClosedSet.empty(), ClosedSet.empty())
        cls.trace = pure_best_reply_iteration(start, cls.model, cls.specs, cls.grid, cls.tol)

    def test_cycle_without_fixed_point(self):
        self.assertFalse(self.trace.fixed_point)
        self.assertTupleEqual(self.trace.cycle, (1, 5))
        self.assertTupleEqual(self.trace.movers, (2, 1, 2, 1, 2))

    def test_visited_profiles(self):
        cell = 2 * self.grid.h
        S1_2 = self.trace.profiles[2][0]
        S2_1 = self.trace.profiles[1][1]
        S2_3 = self.trace.profiles[3][1]

        self.assertTrue(self.trace.profiles[1][0].is_empty)
        self.assertTrue(
            same_set(S2_1, ClosedSet(((0.0, THIRD), (2.0 * THIRD, 1.0))), 0.0, 1.0, cell)
        )
        self.assertEqual(len(S1_2.components), 1)
        a, b = S1_2.components[0]
        self.assertAlmostEqual(a, 0.4656, delta=0.005)
        self.assertAlmostEqual(b, 0.5344, delta=0.005)
        x0 = S2_3.components[0][1]
        self.assertTrue(1.0 / 6.0 <= x0 <= 0.25)
        self.assertTrue(self.trace.profiles[4][0].is_empty)

    def test_certificate(self):
        conditions = no_pure_certificate(self.trace, self.specs, self.grid, self.tol)
        self.assertEqual(len(conditions), 5)
        failed = [c.name for c in conditions if not c.passed]
        self.assertListEqual(failed, [])

    def test_dict_form(self):
        data = self.trace.to_dict()
        self.assertListEqual(data["cycle"], [1, 5])
        self.assertEqual(len(data["profiles"]), 6)

    def test_needs_pure_start(self):
        start = example_equilibrium_profile(self.x_star, self.alpha)
        with self.assertRaises(InputError):
            pure_best_reply_iteration(start, self.model, self.specs, self.grid, self.tol)

    def test_gives_up_without_cycle(self):
        start = Profile.pure(ClosedSet.empty(), ClosedSet.empty())
        with self.assertRaises(NumericalError):
            pure_best_reply_iteration(
                start, self.model, self.specs, self.grid, self.tol, max_iter=2
            )


class TestFixedPoint(unittest.TestCase):
    def test_convex_rewards_reach_a_fixed_point(self):
        spec = PayoffSpec(
            PiecewisePolynomial.single([0.25, -1.0, 1.0]), PiecewisePolynomial.constant(1.0)
        )
        grid = Grid.covering(UNIT, 199)
        tol = SolverTolerances(closure=ac.CLOSURE_ZERO)
        start = Profile.pure(ClosedSet.empty(), ClosedSet.empty())
        trace = pure_best_reply_iteration(
            start, DiffusionModel.logistic_martingale(), (spec, spec), grid, tol
        )
        self.assertTrue(trace.fixed_point)
        self.assertIsNone(trace.cycle)
        self.assertEqual(len(trace.profiles), 4)


class TestVerify(ExampleMixin, unittest.TestCase):
    def test_mixed_equilibrium_passes(self):
        grid = example_grid(800, self.x_star)
        profile = example_equilibrium_profile(self.x_star, self.alpha)
        cfg = McConfig(n_paths=400, dt=2e-3, horizon=10.0, seed=1, block_size=200)
        report = verify_mpe(
            profile, self.model, self.specs, grid, cfg, self.tol, VerifyTolerances(probes=(0.5,))
        )
        self.assertEqual(report.verdict, ac.VERDICT_PASS, report.reasons)
        self.assertTrue(report.condition_i.passed)
        self.assertEqual(len(report.gaps), 2)
        self.assertTrue(report.pbr[0].passed)
        self.assertTrue(report.pbr[1].passed)
        self.assertAlmostEqual(report.gaps[0].value, 2.0, places=4)
        self.assertIn("sup_gap", report.to_dict())

    def test_pure_profile_fails(self):
        grid = example_grid(400, self.x_star)
        profile = Profile.pure(ClosedSet.empty(), ClosedSet(((0.0, THIRD), (2.0 * THIRD, 1.0))))
        cfg = McConfig(n_paths=20, dt=0.01, horizon=1.0)
        report = verify_mpe(
            profile, self.model, self.specs, grid, cfg, self.tol, VerifyTolerances(probes=(0.5,))
        )
        self.assertEqual(report.verdict, ac.VERDICT_FAIL)
        self.assertIn("player 1: lower_inclusion", report.reasons)

    def test_halved_atom_fails(self):
        grid = example_grid(800, self.x_star)
        profile = example_equilibrium_profile(self.x_star, 0.5 * self.alpha)
        cfg = McConfig(n_paths=20, dt=0.01, horizon=1.0)
        report = verify_mpe(
            profile, self.model, self.specs, grid, cfg, self.tol, VerifyTolerances(probes=(0.5,))
        )
        self.assertEqual(report.verdict, ac.VERDICT_FAIL)
        self.assertIn("player 2: lower_inclusion", report.reasons)
        # player 1 still faces the same stopping set of player 2
        self.assertTrue(report.pbr[0].passed)
        self.assertFalse(report.pbr[1].passed)

    def test_overlapping_stop_sets_fail_where_G_exceeds_R(self):
        grid = example_grid(400, self.x_star)
        S = ClosedSet.of([(0.45, 0.55)])
        cfg = McConfig(n_paths=20, dt=0.01, horizon=1.0)
        report = verify_mpe(
            Profile.pure(S, S), self.model, self.specs, grid, cfg, self.tol,
            VerifyTolerances(probes=(0.5,)),
        )
        self.assertFalse(report.condition_i.passed)
        self.assertIn(report.condition_i.name, report.reasons)

    @patch("attrition.equilibrium.solve_best_reply", side_effect=NumericalError("singular"))
    def test_solver_failure_is_inconclusive(self, mock_solve):
        grid = example_grid(100, self.x_star)
        profile = example_equilibrium_profile(self.x_star, self.alpha)
        report = verify_mpe(profile, self.model, self.specs, grid, McConfig(), self.tol)
        self.assertEqual(report.verdict, ac.VERDICT_INCONCLUSIVE)
        self.assertListEqual(list(report.reasons), ["solver: singular"])
        self.assertTupleEqual(report.gaps, ())


class TestNonMarkovNash(ExampleMixin, unittest.TestCase):
    def test_threat_profile_at_the_middle(self):
        S1 = ClosedSet.of([(0.4656, 0.5344)])
        S2 = ClosedSet(((0.0, THIRD), (2.0 * THIRD, 1.0)))
        cfg = McConfig(n_paths=200, dt=0.01, horizon=5.0, seed=2, block_size=100)
        vtol = VerifyTolerances(deviations=4)
        report = check_nonmarkov_nash(self.model, self.specs, [0.5], cfg, S1, S2, vtol)

        self.assertEqual(len(report.deviations), 8)
        # both stop rules of player 1 stop at once in the middle
        self.assertTupleEqual(report.equivalence[0][:2], (0.5, 0.0))
        payoffs = {(x0, p): m for x0, p, m, _ in report.payoffs}
        self.assertAlmostEqual(payoffs[(0.5, 1)], 2.0, places=9)
        self.assertAlmostEqual(payoffs[(0.5, 2)], 2.75, places=9)

        never = [d for d in report.deviations if d.player == 1 and d.label == "never"][0]
        # waiting for player 2 at 1/3 or 2/3 collects G^1 = 1
        self.assertAlmostEqual(never.gain, -1.0, places=2)
        self.assertTrue(report.passed)
        self.assertIn("deviations", report.to_dict())


class TestCalibration(ExampleMixin, unittest.TestCase):
    def test_recovers_the_equilibrium_atom(self):
        grid = example_grid(800, self.x_star)
        mass = calibrate_atom_mass(
            self.model, self.specs[1], 0.5, self.x_star, grid, self.tol
        )
        self.assertAlmostEqual(mass, self.alpha, delta=0.05)

    def test_needs_a_sign_change(self):
        grid = example_grid(200, self.x_star)
        with self.assertRaises(NumericalError):
            calibrate_atom_mass(
                self.model, self.specs[1], 0.5, self.x_star, grid, self.tol, bracket=(50.0, 100.0)
            )
