import unittest
import json
import tempfile
from argparse import Namespace
from pathlib import Path

import attrition.constants as ac
from attrition.diffusion import DiffusionModel
from attrition.errors import InputError
from attrition.example import LANDMARKS, find_x_star
from attrition.payoffs import McConfig
from attrition.scenario import ScenarioFile, model_from_dict, model_to_dict


class TestDataMixin(object):
    def _get_testdata_fp(self, name):
        return Path("attrition", "tests", "data", f"{name}.json").absolute().as_posix()


def _cli(**kwargs):
    values = dict(paths=None, dt=None, horizon=None, seed=None, workers=None)
    values.update(kwargs)
    return Namespace(**values)


class TestModelDict(unittest.TestCase):
    def test_presets(self):
        model = model_from_dict({"preset": ac.PRESET_BROWNIAN, "discount": 0.5})
        self.assertEqual(model.name, ac.PRESET_BROWNIAN)
        self.assertEqual(model.discount, 0.5)
        self.assertDictEqual(model_to_dict(model), {"preset": ac.PRESET_BROWNIAN, "discount": 0.5})

    def test_unknown_preset(self):
        with self.assertRaises(InputError):
            model_from_dict({"preset": "ornstein-uhlenbeck"})

    def test_custom_round_trip(self):
        data = {
            "name": "quadratic",
            "interval": [0.0, 2.0],
            "drift": [0.0],
            "volatility": [0.0, 2.0, -1.0],
            "discount": 0.1,
            "degenerate": False,
        }
        model = model_from_dict(data)
        self.assertAlmostEqual(float(model.volatility_at(1.0)), 1.0)
        self.assertDictEqual(model_to_dict(model), data)

    def test_missing_volatility(self):
        with self.assertRaises(InputError):
            model_from_dict({"interval": [0.0, 1.0]})

    def test_bad_interval(self):
        with self.assertRaises(InputError):
            model_from_dict({"interval": 1.0, "volatility": [1.0]})


class TestScenarioFile(unittest.TestCase, TestDataMixin):
    def test_default_is_the_example(self):
        scenario = ScenarioFile.default()
        self.assertEqual(scenario.name, ac.PRESET_EXAMPLE_PAYOFFS)
        self.assertEqual(scenario.model.name, ac.PRESET_LOGISTIC_MARTINGALE)
        self.assertTupleEqual(scenario.grid_points, LANDMARKS)
        profile = scenario.require_profile()
        self.assertListEqual(profile.strat_1.special_points(), [0.5])
        x_star = find_x_star(scenario.specs[0])
        self.assertAlmostEqual(profile.strat_2.stop_set.components[0][1], x_star)

    def test_load_example_small(self):
        scenario = ScenarioFile.load(self._get_testdata_fp("example_small"))
        self.assertEqual(scenario.name, "example-small")
        self.assertTupleEqual(scenario.x0s, (0.5,))
        self.assertEqual(scenario.grid_n, 200)
        self.assertEqual(scenario.seed, 7)
        self.assertIsNotNone(scenario.profile)

    def test_load_custom_model(self):
        scenario = ScenarioFile.load(self._get_testdata_fp("custom_model"))
        self.assertEqual(scenario.model.name, "custom")
        self.assertEqual(scenario.method, "concave-envelope")
        self.assertIsNone(scenario.profile)
        self.assertTupleEqual(scenario.x0s, (0.2, 0.35, 0.5, 0.65, 0.8))
        self.assertAlmostEqual(float(scenario.specs[0].R(0.5)), 0.0)
        with self.assertRaises(InputError):
            scenario.require_profile()

    def test_dict_round_trip(self):
        scenario = ScenarioFile.load(self._get_testdata_fp("brownian_pure"))
        data = scenario.to_dict()
        self.assertDictEqual(ScenarioFile.from_dict(data).to_dict(), data)
        self.assertDictEqual(data["grid"], {"points": [], "n": 119, "lower": -3.0, "upper": 3.0})

    def test_missing_file(self):
        with self.assertRaises(InputError):
            ScenarioFile.load(self._get_testdata_fp("does_not_exist"))

    def test_bad_json(self):
        with self.assertRaises(InputError):
            ScenarioFile.load(self._get_testdata_fp("bad_json"))

    def test_unknown_simulation_key(self):
        with self.assertRaises(InputError):
            ScenarioFile.load(self._get_testdata_fp("unknown_key"))

    def test_invalid_documents(self):
        base = {"model": {"preset": ac.PRESET_LOGISTIC_MARTINGALE}, "payoffs": "example"}
        invalid = [
            [],
            {"payoffs": "example"},
            dict(base, payoffs=[{"R": {"constant": 0.0}, "G": {"constant": 1.0}}]),
            dict(base, x0=[1.5]),
            dict(base, method="value-iteration"),
            dict(base, profile="mixed"),
            dict(base, profile={"player_1": {}}),
            dict(base, grid={"n": "many"}),
        ]
        for data in invalid:
            with self.subTest(data=data):
                with self.assertRaises(InputError):
                    ScenarioFile.from_dict(data)

    def test_written_file_loads(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            fp = Path(tmpdir, "scenario.json")
            fp.write_text(json.dumps(ScenarioFile.default().to_dict()))
            scenario = ScenarioFile.load(fp.as_posix())
            self.assertEqual(scenario.name, ac.PRESET_EXAMPLE_PAYOFFS)
            self.assertEqual(len(scenario.profile.strat_1.intensity.atoms), 1)


class TestMcConfig(unittest.TestCase, TestDataMixin):
    def test_scenario_overrides_base(self):
        scenario = ScenarioFile.load(self._get_testdata_fp("example_small"))
        cfg = scenario.mc_config(McConfig())
        self.assertEqual(cfg.n_paths, 64)
        self.assertEqual(cfg.dt, 0.01)
        self.assertEqual(cfg.horizon, 2.0)
        self.assertTupleEqual(cfg.levels, (0.5,))
        self.assertEqual(cfg.block_size, 32)
        self.assertEqual(cfg.seed, 7)
        self.assertEqual(cfg.bandwidth, McConfig().bandwidth)

    def test_cli_overrides_scenario(self):
        scenario = ScenarioFile.load(self._get_testdata_fp("example_small"))
        cfg = scenario.mc_config(McConfig(), _cli(paths=10, seed=11))
        self.assertEqual(cfg.n_paths, 10)
        self.assertEqual(cfg.seed, 11)
        self.assertEqual(cfg.dt, 0.01)

    def test_default_keeps_base(self):
        base = McConfig(n_paths=12)
        self.assertEqual(ScenarioFile.default().mc_config(base), base)


class TestGrid(unittest.TestCase, TestDataMixin):
    def test_bounded_grid_carries_special_points(self):
        scenario = ScenarioFile.load(self._get_testdata_fp("example_small"))
        grid = scenario.grid(999)
        x_star = find_x_star(scenario.specs[0])
        for x in (0.5, x_star, 1.0 - x_star):
            self.assertIsNotNone(grid.index_of(x))
        self.assertLess(len(grid), 210)

    def test_explicit_bounds(self):
        scenario = ScenarioFile.load(self._get_testdata_fp("brownian_pure"))
        grid = scenario.grid(10)
        self.assertEqual(grid.nodes[0], -3.0)
        self.assertEqual(grid.nodes[-1], 3.0)
        self.assertIsNotNone(grid.index_of(0.0))

    def test_unbounded_without_profile(self):
        scenario = ScenarioFile(
            name="bare",
            model=DiffusionModel.brownian(1.0),
            specs=ScenarioFile.load(self._get_testdata_fp("brownian_pure")).specs,
            x0s=(0.0,),
        )
        with self.assertRaises(InputError):
            scenario.grid(50)
