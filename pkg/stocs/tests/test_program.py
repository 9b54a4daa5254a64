import numpy as np

from ..exceptions import ConfigurationError
from ..oracles import IndexPoint, IndexSet
from ..program import (
    ForceVars,
    ObjectiveWeights,
    RelaxationSchedule,
    ResidualReport,
    VariableLayout,
    assemble,
    complementarity_census,
    relax,
    vanilla_census,
)
from ..solver import initialize_trajectory
from ..states import BalanceMode
from .base import (
    LEFT_CORNER,
    RIGHT_CORNER,
    BaseTest,
    corner_index_set,
    make_cube_scenario,
    make_scenario,
)


def moving_trajectory(scenario, shift=0.05):
    goal = scenario.goal.coords.copy()
    goal[0] += shift
    goal[scenario.dim] += 0.2
    return initialize_trajectory(
        scenario.start,
        goal,
        scenario.steps,
        scenario.dt,
        len(scenario.manipulators),
        scenario.cone_directions,
    )


def finite_difference(fn, x, h=1e-6):
    base = fn(x)
    jac = np.zeros((base.shape[0], x.shape[0]))
    for j in range(x.shape[0]):
        step = np.zeros_like(x)
        step[j] = h
        jac[:, j] = (fn(x + step) - fn(x - step)) / (2 * h)
    return jac


class VariableLayoutTest(BaseTest):
    def test_blocks_are_contiguous(self):
        layout = VariableLayout(dim=2, steps=2, manipulators=1, d=2, counts=(2, 0, 1))
        self.assertEqual(layout.size, 2 * 3 * 3 + 3 * 1 * 3 + 3 * 4)
        used = np.concatenate([layout.q_idx.ravel(), layout.v_idx.ravel(), layout.u_idx.ravel(), layout.z_idx.ravel()])
        np.testing.assert_array_equal(np.sort(used), np.arange(layout.size))
        self.assertEqual(list(layout.slot_range(2)), [2])
        np.testing.assert_array_equal(layout.slot_steps, [0, 0, 2])


class AssembleTest(BaseTest):
    def test_census(self):
        scenario = make_scenario()
        problem = assemble(scenario, corner_index_set(scenario), moving_trajectory(scenario))
        self.assertEqual(problem.complementarity_rows, 6 * 4)
        self.assertEqual(complementarity_census(problem.index_set.counts, 2), 24)
        self.assertEqual(vanilla_census(scenario), len(scenario.cloud) * 3 * 4)

    def test_terminal_bounds(self):
        scenario = make_scenario()
        problem = assemble(scenario, corner_index_set(scenario), moving_trajectory(scenario), goal_tol_pos=1e-3, goal_tol_rot=1e-2)
        q_idx = problem.layout.q_idx
        np.testing.assert_array_equal(problem.lower[q_idx[0]], scenario.start.coords)
        np.testing.assert_array_equal(problem.upper[q_idx[0]], scenario.start.coords)
        np.testing.assert_allclose(problem.upper[q_idx[-1]] - problem.lower[q_idx[-1]], [2e-3, 2e-3, 2e-2])
        self.assertTrue(np.all(problem.lower[problem.layout.z_idx] == 0.0))
        self.assertTrue(np.all(problem.lower[problem.layout.u_idx] == 0.0))

    def test_new_points_share_the_weight(self):
        scenario = make_scenario()
        problem = assemble(scenario, corner_index_set(scenario), moving_trajectory(scenario))
        z = problem.x0[problem.layout.z_idx]
        np.testing.assert_allclose(z[:, 0], scenario.mass * scenario.gravity / 2)
        np.testing.assert_array_equal(z[:, 1:], 0.0)

    def test_warm_start_forces_are_kept(self):
        scenario = make_scenario()
        index_set = corner_index_set(scenario)
        d = scenario.cone_directions
        warm = np.array([[1.0, 0.2, 0.0, 0.1], [2.0, 0.0, 0.3, 0.0]])
        forces = ForceVars(
            tuple(index_set.indices(t) for t in range(scenario.steps + 1)),
            tuple(warm.copy() for _ in range(scenario.steps + 1)),
        )
        problem = assemble(scenario, index_set, moving_trajectory(scenario), forces)
        _trajectory, unpacked = problem.unpack(problem.x0)
        np.testing.assert_array_equal(unpacked.values[1], warm)
        self.assertEqual(unpacked.values[0].shape, (2, d + 2))
        np.testing.assert_array_equal(unpacked.get(1, RIGHT_CORNER), warm[1])

    def test_rejects_mismatched_inputs(self):
        scenario = make_scenario()
        with self.assertRaises(ConfigurationError):
            assemble(scenario, IndexSet.empty(5), moving_trajectory(scenario))
        with self.assertRaises(ConfigurationError):
            outside = IndexSet.empty(scenario.steps)
            outside.add(IndexPoint(step=1, index=999, coords=np.zeros(2), iteration=1))
            assemble(scenario, outside, moving_trajectory(scenario))
        with self.assertRaises(ConfigurationError):
            assemble(make_scenario(inertia=None), corner_index_set(scenario), moving_trajectory(scenario), mode=BalanceMode.QUASIDYNAMIC)

    def test_unpack_inverts_pack(self):
        scenario = make_scenario()
        trajectory = moving_trajectory(scenario)
        problem = assemble(scenario, corner_index_set(scenario), trajectory)
        unpacked, _forces = problem.unpack(problem.x0)
        np.testing.assert_array_equal(unpacked.q[1:-1], trajectory.q[1:-1])
        np.testing.assert_array_equal(unpacked.v, trajectory.v)


class ObjectiveTest(BaseTest):
    def test_quadratic_objective(self):
        scenario = make_scenario()
        problem = assemble(scenario, corner_index_set(scenario), moving_trajectory(scenario), weights=ObjectiveWeights(u=2.0, v=0.0, z=0.0))
        x = problem.x0.copy()
        x[problem.layout.u_idx[1, 0, 0]] = 3.0
        value, grad = problem.objective(x)
        self.assertAlmostEqual(value, 18.0)
        self.assertAlmostEqual(grad[problem.layout.u_idx[1, 0, 0]], 12.0)

    def test_constant_forces_are_penalized(self):
        scenario = make_scenario()
        problem = assemble(scenario, corner_index_set(scenario), moving_trajectory(scenario), weights=ObjectiveWeights(u=0.0, v=0.0, z=1.0))
        x = np.zeros(problem.n)
        rows = problem.layout.z_idx[:, 0]
        x[rows] = 2.0
        value, grad = problem.objective(x)
        self.assertAlmostEqual(value, 4.0 * len(rows))
        np.testing.assert_allclose(grad[rows], 4.0)

    def test_gamma_is_not_penalized(self):
        scenario = make_scenario()
        problem = assemble(scenario, corner_index_set(scenario), moving_trajectory(scenario), weights=ObjectiveWeights(u=0.0, v=0.0, z=1.0))
        x = np.zeros(problem.n)
        x[problem.layout.z_idx[:, -1]] = 5.0
        self.assertEqual(problem.objective(x)[0], 0.0)


class RelaxationTest(BaseTest):
    def test_schedule(self):
        schedule = RelaxationSchedule(sigma0=1e-2, decay=0.1, sigma_min=1e-4)
        self.assertEqual(schedule.sigma(1), 1e-2)
        self.assertAlmostEqual(schedule.sigma(2), 1e-3)
        self.assertEqual(schedule.sigma(10), 1e-4)
        with self.assertRaises(ConfigurationError):
            RelaxationSchedule(sigma0=1e-4, decay=0.5, sigma_min=1e-2)

    def test_relaxed_rows(self):
        scenario = make_scenario()
        problem = relax(assemble(scenario, corner_index_set(scenario), moving_trajectory(scenario)), 0.25)
        self.assertEqual(problem.sigma, 0.25)
        x = problem.x0
        values, _jac = problem.inequalities(x)
        products = problem.family_values(x)["complementarity"][0]
        np.testing.assert_allclose(values[-products.shape[0] :], 0.25 - products)
        with self.assertRaises(ConfigurationError):
            relax(problem, -1.0)


class ResidualReportTest(BaseTest):
    def test_norms(self):
        report = ResidualReport({"a": np.array([1.0, -3.0]), "b": np.zeros(0)})
        self.assertEqual(report.norms, {"a": 3.0, "b": 0.0})
        self.assertEqual(report.l1(), 4.0)
        self.assertEqual(report.l1(exclude=["a"]), 0.0)

    def test_resting_start_has_no_dynamics_or_terminal_residual(self):
        scenario = make_scenario()
        trajectory = initialize_trajectory(scenario.start, scenario.goal, scenario.steps, scenario.dt, 1, 2)
        problem = assemble(scenario, corner_index_set(scenario), trajectory)
        report = problem.residuals(problem.x0)
        self.assertEqual(report.norms["dynamics"], 0.0)
        self.assertEqual(report.norms["terminal"], 0.0)
        self.assertAlmostEqual(report.norms["balance"], 0.0, places=9)
        self.assertAlmostEqual(report.norms["complementarity"], 0.0, places=9)


class JacobianTest(BaseTest):
    def check_jacobians(self, scenario, mode):
        index_set = corner_index_set(scenario, (LEFT_CORNER, RIGHT_CORNER, 5))
        problem = relax(assemble(scenario, index_set, moving_trajectory(scenario), mode=mode), 1e-3)
        rng = np.random.default_rng(7)
        x = problem.x0 + 0.05 * rng.standard_normal(problem.n)
        for method in (problem.equalities, problem.inequalities):
            _values, jac = method(x)
            numeric = finite_difference(lambda z, method=method: method(z)[0], x)
            np.testing.assert_allclose(jac.toarray(), numeric, atol=1e-6)

    def test_planar_quasistatic(self):
        self.check_jacobians(make_scenario(), BalanceMode.QUASISTATIC)

    def test_planar_quasidynamic(self):
        self.check_jacobians(make_scenario(), BalanceMode.QUASIDYNAMIC)

    def test_spatial(self):
        self.check_jacobians(make_cube_scenario(), BalanceMode.QUASISTATIC)

    def test_spatial_quasidynamic(self):
        self.check_jacobians(make_cube_scenario(), BalanceMode.QUASIDYNAMIC)
