import unittest

import numpy as np

from attrition.example import (
    LANDMARKS,
    atom_mass_for,
    build_example_payoffs,
    check_example_properties,
    example_equilibrium_profile,
    example_grid,
    example_record,
    find_x_star,
    solve_example,
    w2_closed_form,
    x_star_closed_form,
)

THIRD = 1.0 / 3.0


class TestExamplePayoffs(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.spec_1, cls.spec_2 = build_example_payoffs()

    def test_properties_hold(self):
        props = check_example_properties(self.spec_1, self.spec_2)
        self.assertEqual(len(props), 14)
        self.assertListEqual([name for name, ok in props.items() if not ok], [])

    def test_landmark_values(self):
        self.assertAlmostEqual(float(self.spec_1.R(0.5)), 2.0, places=9)
        self.assertAlmostEqual(float(self.spec_1.G(1.0 / 6.0)), 4.0, places=9)
        self.assertAlmostEqual(float(self.spec_1.G(0.25)), 2.5, places=9)
        self.assertAlmostEqual(float(self.spec_1.G(THIRD)), 1.0, places=9)
        self.assertAlmostEqual(float(self.spec_2.R(THIRD)), 2.2, places=9)
        self.assertAlmostEqual(float(self.spec_2.G(0.5)), 2.75, places=9)

    def test_record(self):
        record = example_record()
        self.assertListEqual(list(record), ["R1", "G1", "R2", "G2"])
        self.assertEqual(record["G2"]["knots_u"], [0.0, 2.0, 10.0, 12.0])
        self.assertAlmostEqual(record["G2"]["knots_x"][1], 1.0 / 6.0)
        for entry in record.values():
            self.assertEqual(len(entry["pieces_u"]), len(entry["knots_u"]) - 1)


class TestEquilibriumParameters(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.spec_1, cls.spec_2 = build_example_payoffs()
        cls.x_star = find_x_star(cls.spec_1)

    def test_x_star(self):
        self.assertTrue(0.25 < self.x_star < THIRD)
        self.assertAlmostEqual(self.x_star, 0.26884, places=4)
        self.assertAlmostEqual(self.x_star, x_star_closed_form(), places=10)
        self.assertAlmostEqual(float(self.spec_1.G(self.x_star)), 2.0, places=10)

    def test_alpha(self):
        alpha = atom_mass_for(self.spec_2, self.x_star)
        self.assertTrue(2.4 < alpha < 2.6)

    def test_w2_closed_form(self):
        w2 = w2_closed_form(self.spec_2, self.x_star)
        self.assertAlmostEqual(float(w2(0.5)), 2.38743, places=4)
        self.assertAlmostEqual(float(w2(0.1)), float(self.spec_2.R(0.1)))
        self.assertAlmostEqual(float(w2(0.4)), float(w2(0.6)))

    def test_profile(self):
        alpha = atom_mass_for(self.spec_2, self.x_star)
        profile = example_equilibrium_profile(self.x_star, alpha)
        self.assertListEqual(profile.strat_1.special_points(), [0.5])
        self.assertTrue(profile.strat_1.stop_set.is_empty)
        self.assertTrue(profile.strat_2.is_pure)

    def test_grid_carries_landmarks(self):
        grid = example_grid(50, self.x_star)
        for x in LANDMARKS + (self.x_star, 1.0 - self.x_star):
            self.assertIsNotNone(grid.index_of(x))


class TestSolveExample(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.solution = solve_example(n=400)

    def test_checks_pass(self):
        self.assertListEqual(self.solution.failed_checks(), [])

    def test_w1_flat_on_the_band(self):
        self.assertAlmostEqual(float(self.solution.w1(0.4)), 2.0, places=6)
        self.assertAlmostEqual(float(self.solution.w1(0.5)), 2.0, places=6)

    def test_w2_matches_closed_form(self):
        self.assertLess(self.solution.diagnostics["w2_gap_closed_form"], 1e-3)
        self.assertAlmostEqual(float(self.solution.w2(0.5)), 2.38743, places=3)

    def test_stop_region_of_player_2(self):
        S = self.solution.reply_2.S_bar
        h = self.solution.diagnostics["h"]
        self.assertEqual(len(S.components), 2)
        self.assertAlmostEqual(S.components[0][1], self.solution.x_star, delta=2 * h)
        self.assertAlmostEqual(S.components[1][0], 1.0 - self.solution.x_star, delta=2 * h)

    def test_dict_form(self):
        data = self.solution.to_dict()
        self.assertSetEqual(
            set(data),
            {"x_star", "alpha", "payoffs", "profile", "w1", "w2", "diagnostics", "failed_checks"},
        )
        self.assertEqual(data["failed_checks"], [])
        self.assertTrue(np.isfinite(data["diagnostics"]["w1_residual"]))
