from pathlib import Path
from unittest import mock
import math
import tempfile

from rest_framework.serializers import ValidationError
import numpy as np
import yaml

from .. import settings as pkgsettings
from ..assets import save_point_cloud, save_sdf_grid
from ..exceptions import AssetFormatError
from ..scenarios import load_scenario, resolve_asset
from ..serializers import AngleField, StocsConfigSerializer
from .base import FIXTURES, HALF, BaseTest, box_cloud, plane_grid

SHIPPED = ("box2d_pivot", "box2d_rest", "dented_uneven", "tilted_peg", "bean_curve", "sphere_roll")


def scenario_data(**changes):
    data = {
        "name": "pushed_box",
        "dim": 2,
        "object": {"cloud": "box.txt", "mass": 1.0, "inertia": 0.0067},
        "environment": {"sdf": "floor.sdf"},
        "friction": {"environment": 0.5, "manipulator": 1.0},
        "manipulator": [{"point": [-HALF, 0.0], "normal": [1.0, 0.0]}],
        "start": {"translation": [0.0, HALF], "rotation": 0.0},
        "goal": {"translation": [0.05, HALF], "rotation": "10 deg"},
        "horizon": {"steps": 4, "dt": 0.1},
    }
    data.update(changes)
    return data


class ShippedScenarioTest(BaseTest):
    def test_all_load(self):
        for name in SHIPPED:
            with self.subTest(name=name):
                scenario = load_scenario(FIXTURES / f"{name}.yaml")
                self.assertEqual(scenario.name, name)
                self.assertEqual(len(scenario.manipulators), 1)

    def test_box_pivot(self):
        scenario = load_scenario(FIXTURES / "box2d_pivot.yaml")
        self.assertEqual(scenario.dim, 2)
        self.assertEqual(len(scenario.cloud), 212)
        self.assertAlmostEqual(scenario.goal.rotation[0], -math.pi / 2)
        np.testing.assert_allclose(scenario.goal.translation, [0.212, 0.106])
        self.assertEqual(dict(scenario.solver), {"oracle": "mvo"})
        self.assertEqual(scenario.bounds.force_upper, 50.0)
        self.assertEqual(scenario.steps, 20)

    def test_sphere(self):
        scenario = load_scenario(FIXTURES / "sphere_roll.yaml")
        self.assertEqual(scenario.dim, 3)
        self.assertEqual(scenario.cone_directions, 4)
        np.testing.assert_allclose(scenario.inertia, np.diag([0.0005] * 3))
        np.testing.assert_allclose(np.linalg.norm(scenario.manipulators[0].normal), 1.0)


class LoadScenarioTest(BaseTest):
    def setUp(self):
        super().setUp()
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        save_point_cloud(self.dir / "box.txt", box_cloud())
        save_sdf_grid(self.dir / "floor.sdf", plane_grid())

    def tearDown(self):
        self.tmp.cleanup()
        super().tearDown()

    def write(self, data, name="scenario.yaml"):
        path = self.dir / name
        path.write_text(yaml.safe_dump(data))
        return path

    def test_load(self):
        scenario = load_scenario(self.write(scenario_data()))
        self.assertEqual(scenario.name, "pushed_box")
        self.assertEqual(len(scenario.cloud), 16)
        self.assertAlmostEqual(scenario.goal.rotation[0], math.radians(10))
        np.testing.assert_array_equal(scenario.com, [0.0, 0.0])
        np.testing.assert_array_equal(scenario.inertia, [[0.0067]])
        self.assertEqual(scenario.cone_directions, 2)
        self.assertEqual(scenario.gravity, 9.81)
        self.assertEqual(scenario.solver, {})
        self.assertTrue(np.all(np.isinf(scenario.bounds.q_upper)))

    def test_name_defaults_to_the_file(self):
        data = scenario_data()
        del data["name"]
        self.assertEqual(load_scenario(self.write(data, "slide.yaml")).name, "slide")

    def test_bounds(self):
        bounds = {"configuration": {"lower": [-1, 0, -3.2], "upper": [1, 1, 3.2]}, "force": 20}
        scenario = load_scenario(self.write(scenario_data(bounds=bounds)))
        np.testing.assert_array_equal(scenario.bounds.q_lower, [-1.0, 0.0, -3.2])
        self.assertEqual(scenario.bounds.force_upper, 20.0)
        with self.assertRaises(ValidationError):
            load_scenario(self.write(scenario_data(bounds={"configuration": {"lower": [0, 0]}})))

    def test_asset_root(self):
        other = self.dir / "assets"
        other.mkdir()
        save_point_cloud(other / "box.txt", box_cloud(half=0.2))
        save_sdf_grid(other / "floor.sdf", plane_grid())
        data = scenario_data(manipulator=[])
        self.assertAlmostEqual(float(np.max(load_scenario(self.write(data), asset_root=other).cloud.points)), 0.2)
        with mock.patch.object(pkgsettings, "STOCS_ASSETS", str(other)):
            self.assertEqual(resolve_asset("box.txt", self.dir), other / "box.txt")
        self.assertEqual(resolve_asset("/abs/box.txt", self.dir, other), Path("/abs/box.txt"))

    def test_manipulator_must_touch_the_cloud(self):
        data = scenario_data(manipulator=[{"point": [-0.3, 0.0], "normal": [1.0, 0.0]}])
        with self.assertRaises(ValidationError) as cm:
            load_scenario(self.write(data))
        self.assertIn("manipulator.0.point", cm.exception.detail)

    def test_zero_manipulator_normal(self):
        data = scenario_data(manipulator=[{"point": [-HALF, 0.0], "normal": [0.0, 0.0]}])
        with self.assertRaises(ValidationError):
            load_scenario(self.write(data))

    def test_declared_point_count(self):
        data = scenario_data()
        data["object"]["points"] = 17
        with self.assertRaises(ValidationError):
            load_scenario(self.write(data))

    def test_dimension_mismatch(self):
        data = scenario_data(dim=3, start={"translation": [0, 0, HALF], "rotation": [0, 0, 0]}, goal={"translation": [0, 0, HALF], "rotation": [0, 0, 0]})
        data["manipulator"] = []
        data["object"]["inertia"] = [0.0067] * 3
        with self.assertRaises(ValidationError):
            load_scenario(self.write(data))

    def test_start_size(self):
        with self.assertRaises(ValidationError):
            load_scenario(self.write(scenario_data(start={"translation": [0.0], "rotation": 0.0})))

    def test_cone_directions(self):
        data = scenario_data()
        data["friction"]["cone_directions"] = 4
        with self.assertRaises(ValidationError):
            load_scenario(self.write(data))

    def test_odd_spatial_cone_directions(self):
        data = scenario_data(dim=3, start={"translation": [0, 0, HALF], "rotation": [0, 0, 0]}, goal={"translation": [0, 0, HALF], "rotation": [0, 0, 0]})
        data["manipulator"] = []
        data["friction"]["cone_directions"] = 3
        with self.assertRaises(ValidationError) as cm:
            load_scenario(self.write(data))
        self.assertIn("friction.cone_directions", cm.exception.detail)

    def test_unknown_oracle(self):
        with self.assertRaises(ValidationError):
            load_scenario(self.write(scenario_data(solver={"oracle": "nope"})))

    def test_solver_overrides(self):
        scenario = load_scenario(self.write(scenario_data(solver={"oracle": "all", "sigma0": 0.05, "weights": {"u": 3}})))
        self.assertEqual(scenario.solver, {"oracle": "all", "sigma0": 0.05, "weight_u": 3.0})

    def test_missing_asset(self):
        with self.assertRaises(AssetFormatError):
            load_scenario(self.write(scenario_data(environment={"sdf": "missing.sdf"})))

    def test_missing_file(self):
        with self.assertRaises(AssetFormatError):
            load_scenario(self.dir / "missing.yaml")

    def test_bad_yaml(self):
        path = self.dir / "bad.yaml"
        path.write_text("dim: 2\nobject: [unclosed\n")
        with self.assertRaises(AssetFormatError) as cm:
            load_scenario(path)
        self.assertIsNotNone(cm.exception.line)

    def test_not_a_mapping(self):
        path = self.dir / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with self.assertRaises(AssetFormatError):
            load_scenario(path)


class StocsConfigSerializerTest(BaseTest):
    def test_disturbances_must_be_positive(self):
        serializer = StocsConfigSerializer(data={"disturbances": [0.01, -1]})
        self.assertFalse(serializer.is_valid())
        self.assertIn("disturbances", serializer.errors)


class AngleFieldTest(BaseTest):
    def test_parse(self):
        field = AngleField()
        self.assertEqual(field.to_internal_value(1.5), 1.5)
        self.assertEqual(field.to_internal_value(2), 2.0)
        self.assertAlmostEqual(field.to_internal_value("-90 deg"), -math.pi / 2)
        self.assertEqual(field.to_internal_value("0.25 rad"), 0.25)
        self.assertEqual(field.to_internal_value(" 1e-1 "), 0.1)

    def test_reject(self):
        field = AngleField()
        for value in ("ninety", True, "1.0 grad", float("inf"), None):
            with self.subTest(value=value):
                with self.assertRaises(ValidationError):
                    field.to_internal_value(value)
