"""
End-to-end runs over the shipped scenarios. Full solves carry the ``slow`` tag and are
left out of the default test run; ``tox -e slow`` runs them.
"""

import time

from django.test import tag
import numpy as np

from ..bench import bench_scenario, single_variant, suite_variants
from ..contact import ManipulatorContact
from ..geometry import Configuration, SurfaceCloud
from ..oracles import IndexSet, get_oracle
from ..program import complementarity_census, vanilla_census
from ..scenarios import Bounds, load_scenario
from ..solver import StocsConfig, initialize_trajectory, solve
from ..verifier import verify
from .base import FIXTURES, HALF, BaseTest, box_cloud, make_scenario, plane_grid

# Cloud indices of the fixture box's corners: 53 points per side, counter-clockwise from the lower left
BOX_CORNERS = {0, 53, 106, 159}


def objective_value(config, result):
    weights = config.weights
    traj = result.trajectory
    d = traj.u.shape[-1] - 1
    z = sum(float(np.sum(block[:, : 1 + d] ** 2)) for block in result.forces.values)
    return weights.u * float(np.sum(traj.u**2)) + weights.v * float(np.sum(traj.v**2)) + weights.z * z


def embedded_box_scenario():
    """The planar test box placed in the x-z plane of a 3D scene with a two-direction cone."""
    planar = box_cloud().points
    rest = Configuration(3, [0.0, 0.0, HALF], [0.0, 0.0, 0.0])
    return make_scenario(
        dim=3,
        cloud=SurfaceCloud(np.column_stack([planar[:, 0], np.zeros(len(planar)), planar[:, 1]])),
        grid=plane_grid(3),
        com=np.zeros(3),
        inertia=np.diag([0.0067, 0.0067, 0.0067]),
        manipulators=(ManipulatorContact(point=np.array([-HALF, 0.0, 0.0]), normal=np.array([1.0, 0.0, 0.0]), friction=1.0),),
        start=rest,
        goal=rest,
        bounds=Bounds.unbounded(3),
        cone_directions=2,
        name="embedded_box",
    )


class CensusTest(BaseTest):
    def test_pivot_warm_start_stays_on_the_corners(self):
        scenario = load_scenario(FIXTURES / "box2d_pivot.yaml")
        oracle = get_oracle("mvo", scenario.cloud, scenario.grid, StocsConfig.build(scenario.solver).oracle_config)
        base = initialize_trajectory(scenario.start, scenario.goal, scenario.steps, scenario.dt).q
        rng = np.random.default_rng(8)
        index_set = IndexSet.empty(scenario.steps)
        for k in range(1, 9):
            jitter = base.copy()
            jitter[1:, 2] += 1e-12 * rng.standard_normal(scenario.steps)
            index_set = oracle.update(jitter, index_set, k)
        instantiated = {p.index for points in index_set for p in points}
        self.assertLessEqual(instantiated, BOX_CORNERS)
        self.assertLessEqual(index_set.mean_size, 6.0)
        ratio = vanilla_census(scenario) / complementarity_census(index_set.counts, scenario.cone_directions)
        self.assertGreaterEqual(ratio, 30.0)


class PlanarEmbeddingTest(BaseTest):
    def test_objective_matches(self):
        config = StocsConfig.build({"oracle": "tamvo", "max_outer": 4, "inner_iters": 10})
        planar = solve(make_scenario(), config)
        spatial = solve(embedded_box_scenario(), config)
        self.assertTrue(planar.converged, planar.message)
        self.assertTrue(spatial.converged, spatial.message)
        self.assertAlmostEqual(objective_value(config, planar), objective_value(config, spatial), delta=1e-6)


@tag("slow")
class ShippedScenarioTest(BaseTest):
    def run_scenario(self, name):
        scenario = load_scenario(FIXTURES / f"{name}.yaml")
        began = time.perf_counter()
        result = solve(scenario)
        return scenario, result, time.perf_counter() - began

    def test_box_pivot(self):
        scenario, result, elapsed = self.run_scenario("box2d_pivot")
        self.assertTrue(result.converged, result.message)
        self.assertLessEqual(result.outer_iterations, 8)
        self.assertLessEqual(result.mean_index_points, 6.0)
        self.assertTrue(verify(scenario, result).passed)
        self.assertLessEqual(elapsed, 300.0)

    def test_dented_uneven(self):
        scenario, result, _elapsed = self.run_scenario("dented_uneven")
        self.assertTrue(result.converged, result.message)
        self.assertLessEqual(result.outer_iterations, 8)
        self.assertLessEqual(result.mean_index_points, 18.1)
        self.assertTrue(verify(scenario, result).passed)

    def test_tilted_peg(self):
        scenario, result, _elapsed = self.run_scenario("tilted_peg")
        self.assertTrue(result.converged, result.message)
        self.assertLessEqual(result.outer_iterations, 8)
        self.assertLessEqual(result.mean_index_points, 25.86)
        self.assertTrue(verify(scenario, result).passed)

    def test_sphere_roll(self):
        scenario, result, _elapsed = self.run_scenario("sphere_roll")
        self.assertLessEqual(len(scenario.cloud), 500)
        self.assertTrue(result.converged, result.message)
        self.assertTrue(verify(scenario, result).passed)

    def test_pivot_census_ratio(self):
        row = bench_scenario(load_scenario(FIXTURES / "box2d_pivot.yaml"), single_variant(None))
        self.assertEqual(row.status, "converged")
        self.assertTrue(row.verified)
        self.assertGreaterEqual(row.cc_ratio, 30.0)

    def test_disturbed_smoothed_oracle_beats_plain_mvo(self):
        variants = {variant.label: variant for variant in suite_variants()}
        for name in ("box2d_pivot", "dented_uneven", "tilted_peg"):
            scenario = load_scenario(FIXTURES / f"{name}.yaml")
            plain = bench_scenario(scenario, variants["mvo"])
            if plain.status != "converged":
                continue
            full = bench_scenario(scenario, variants["tamvo-sd-ts"])
            with self.subTest(scenario=name):
                self.assertEqual(full.status, "converged")
                self.assertLessEqual(full.mean_index_points, plain.mean_index_points)
