import unittest
import math

import numpy as np

import attrition.constants as ac
from attrition.diffusion import (
    DiffusionModel,
    EulerScheme,
    Interval,
    PathSample,
    block_seeds,
    estimate_local_time,
    estimate_local_time_batch,
    first_hit,
    hitting_time,
    n_steps_for,
    simulate_path,
    simulate_terminal,
)
from attrition.errors import InputError, NumericalError
from attrition.measures import ClosedSet


def _path(states, dt=1.0):
    states = np.asarray(states, dtype=float)
    return PathSample(times=np.arange(len(states)) * dt, states=states, seed=(0, ()))


class TestInterval(unittest.TestCase):
    def test_empty_interval(self):
        with self.assertRaises(InputError):
            Interval(1.0, 0.0)

    def test_contains_is_open(self):
        unit = Interval(0.0, 1.0)
        np.testing.assert_array_equal(
            unit.contains([0.0, 0.5, 1.0]), [False, True, False]
        )

    def test_require(self):
        with self.assertRaises(InputError):
            Interval(0.0, 1.0).require(1.5)

    def test_clamp(self):
        x, flags = Interval(0.0, 1.0).clamp(np.array([-0.1, 0.5, 1.2]), 1e-6)
        np.testing.assert_allclose(x, [1e-6, 0.5, 1.0 - 1e-6])
        np.testing.assert_array_equal(flags, [True, False, True])

    def test_interior_points_of_the_line(self):
        pts = Interval().interior_points(3, -1.0, 1.0)
        np.testing.assert_allclose(pts, [-0.5, 0.0, 0.5])


class TestModel(unittest.TestCase):
    def test_negative_discount(self):
        with self.assertRaises(InputError):
            DiffusionModel.brownian(discount=-1.0)

    def test_zero_volatility_needs_degenerate_flag(self):
        model = DiffusionModel.from_coefficients(Interval(0.0, 1.0), [0.0], [0.0])
        with self.assertRaises(InputError):
            model.volatility_at(np.array([0.5]))

    def test_non_finite_coefficient(self):
        model = DiffusionModel.from_coefficients(Interval(), [0.0], [1.0])
        with self.assertRaises(NumericalError):
            model.drift_at(np.array([np.inf]))

    def test_logistic_martingale_coefficients(self):
        model = DiffusionModel.logistic_martingale()
        self.assertAlmostEqual(float(model.volatility_at(np.array([0.5]))[0]), 0.25)
        self.assertTrue(model.is_driftless(np.linspace(0.1, 0.9, 9)))
        self.assertAlmostEqual(model.volatility_bound(), 0.25, places=5)


class TestSeeds(unittest.TestCase):
    def test_n_steps_for(self):
        self.assertEqual(n_steps_for(1e-3, 20.0), 20000)

    def test_horizon_must_be_a_multiple_of_dt(self):
        with self.assertRaises(InputError):
            n_steps_for(0.3, 1.0)

    def test_non_positive_dt(self):
        with self.assertRaises(InputError):
            n_steps_for(0.0, 1.0)

    def test_block_partition(self):
        blocks = block_seeds(7, 2500, 1024)
        self.assertListEqual([size for _, size in blocks], [1024, 1024, 452])

    def test_block_seeds_are_reproducible(self):
        a = [seq.generate_state(2).tolist() for seq, _ in block_seeds(7, 100, 10)]
        b = [seq.generate_state(2).tolist() for seq, _ in block_seeds(7, 100, 10)]
        self.assertListEqual(a, b)


class TestSimulation(unittest.TestCase):
    def test_same_seed_same_path(self):
        model = DiffusionModel.logistic_martingale()
        a = simulate_path(model, 0.5, 1e-2, 1.0, seed=3)
        b = simulate_path(model, 0.5, 1e-2, 1.0, seed=3)
        np.testing.assert_array_equal(a.states, b.states)
        self.assertEqual(a.states[0], 0.5)
        self.assertEqual(len(a.times), 101)
        self.assertEqual(a.scheme, ac.SCHEME_EULER_MARUYAMA)

    def test_paths_stay_inside_the_state_space(self):
        model = DiffusionModel.logistic_martingale()
        path = simulate_path(model, 0.05, 1e-2, 5.0, seed=11)
        self.assertTrue(np.all(model.state_space.contains(path.states)))

    def test_x0_outside(self):
        with self.assertRaises(InputError):
            simulate_path(DiffusionModel.logistic_martingale(), 1.0, 1e-2, 1.0, seed=0)

    def test_zero_noise_follows_the_drift(self):
        model = DiffusionModel.from_coefficients(Interval(), [1.0], [0.0], degenerate=True)
        path = simulate_path(model, 0.0, 0.1, 1.0, seed=0)
        np.testing.assert_allclose(path.states, np.linspace(0.0, 1.0, 11), atol=1e-12)

    def test_terminal_mean_of_a_martingale(self):
        x_T = simulate_terminal(
            DiffusionModel.logistic_martingale(), 0.3, 1e-2, 2.0, n_paths=4000, seed=5
        )
        se = np.std(x_T, ddof=1) / math.sqrt(len(x_T))
        self.assertLess(abs(np.mean(x_T) - 0.3), 4 * se + 1e-3)

    def test_scheme_keeps_previous_state(self):
        model = DiffusionModel.brownian()
        scheme = EulerScheme(model, 0.0, 1e-2, 5, np.random.default_rng(0))
        prev, nxt = scheme.advance()
        np.testing.assert_array_equal(prev, np.zeros(5))
        np.testing.assert_array_equal(scheme.states, nxt)
        self.assertEqual(scheme.k, 1)


class TestLocalTime(unittest.TestCase):
    def test_constant_path(self):
        model = DiffusionModel.logistic_martingale()
        path = _path(np.full(11, 0.5), dt=0.01)
        lt = estimate_local_time(path, model, [0.5, 0.8], bandwidth=0.1)
        # sigma^2(0.5) = 1/16, ten steps of 0.01 inside the window
        self.assertAlmostEqual(lt.at_level(0.5)[-1], 10 * 0.01 * 0.0625 / 0.2)
        self.assertEqual(lt.at_level(0.8)[-1], 0.0)
        self.assertEqual(lt.values[0, 0], 0.0)
        self.assertIsNone(lt.at_level(0.3))

    def test_levels_must_lie_inside(self):
        with self.assertRaises(InputError):
            estimate_local_time(_path([0.5, 0.5]), DiffusionModel.logistic_martingale(), [1.0], 0.1)

    def test_bandwidth_must_be_positive(self):
        with self.assertRaises(InputError):
            estimate_local_time(_path([0.5, 0.5]), DiffusionModel.logistic_martingale(), [0.5], 0.0)

    def test_occupation_identity(self):
        # windows of half-width 0.01 around levels 0.02 apart tile (0, 1)
        model = DiffusionModel.logistic_martingale()
        path = simulate_path(model, 0.5, 1e-3, 2.0, seed=11)
        levels = np.linspace(0.01, 0.99, 50)
        lt = estimate_local_time(path, model, levels, bandwidth=0.01)
        occupation = float(np.sum(lt.values[:, -1]) * 0.02)
        clock = float(np.sum(model.volatility_at(path.states[:-1]) ** 2) * path.dt)
        self.assertAlmostEqual(occupation / clock, 1.0, delta=1e-9)


class TestBrownianLocalTime(unittest.TestCase):
    """L^0_1 of a standard Brownian motion from 0 has the law of |N(0, 1)|."""

    @classmethod
    def setUpClass(cls):
        cls.values = estimate_local_time_batch(
            DiffusionModel.brownian(), 0.0, [0.0], 0.02, 1e-4, 1.0, n_paths=40000, seed=1
        )[:, 0]

    def test_shape(self):
        self.assertTupleEqual(self.values.shape, (40000,))
        self.assertTrue(np.all(self.values >= 0.0))

    def test_mean(self):
        expected = math.sqrt(2.0 / math.pi)
        self.assertAlmostEqual(float(np.mean(self.values)) / expected, 1.0, delta=0.02)

    def test_laplace_transform(self):
        # E[exp(-|Z|)] = 2 e^{1/2} Phi(-1)
        expected = math.exp(0.5) * math.erfc(1.0 / math.sqrt(2.0))
        observed = float(np.mean(np.exp(-self.values)))
        self.assertAlmostEqual(observed / expected, 1.0, delta=0.02)


class TestHitting(unittest.TestCase):
    def test_segment_crossing_hits_a_point(self):
        path = _path([0.1, 0.3, 0.6])
        k, entry = first_hit(path, ClosedSet.point(0.5))
        self.assertEqual(k, 2)
        self.assertEqual(entry, 0.5)
        self.assertEqual(hitting_time(path, ClosedSet.point(0.5)), 2.0)

    def test_start_inside(self):
        path = _path([0.45, 0.3])
        self.assertEqual(hitting_time(path, ClosedSet.of([(0.4, 0.6)])), 0.0)

    def test_downward_entry(self):
        path = _path([0.9, 0.7, 0.2])
        k, entry = first_hit(path, ClosedSet.of([(0.1, 0.5)]))
        self.assertEqual(k, 2)
        self.assertEqual(entry, 0.5)

    def test_never(self):
        path = _path([0.1, 0.2, 0.3])
        self.assertEqual(hitting_time(path, ClosedSet.point(0.5)), ac.NEVER)
        self.assertEqual(hitting_time(path, ClosedSet.empty()), ac.NEVER)
