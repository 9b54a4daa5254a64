import math

import numpy as np

from ..exceptions import ConfigurationError
from ..geometry import (
    Configuration,
    SdfGrid,
    closest_point,
    euler_rate_matrices,
    min_distance,
    pose_from_config,
    rotation_matrices,
    rotation_matrix_derivatives,
    signed_distances,
    surface_normals,
)
from ..utils import configuration_error, format_float, unwrap_goal, wrap_angle
from .base import HALF, LEFT_CORNER, PER_SIDE, RIGHT_CORNER, BaseTest, box_cloud, plane_grid


class ConfigurationTest(BaseTest):
    def test_from_coords(self):
        planar = Configuration.from_coords([1, 2, 0.5])
        self.assertEqual(planar.dim, 2)
        np.testing.assert_array_equal(planar.translation, [1, 2])
        np.testing.assert_array_equal(planar.rotation, [0.5])

        spatial = Configuration.from_coords([1, 2, 3, 0.1, 0.2, 0.3])
        self.assertEqual(spatial.dim, 3)
        np.testing.assert_array_equal(spatial.coords, [1, 2, 3, 0.1, 0.2, 0.3])

    def test_rejects_bad_sizes(self):
        with self.assertRaises(ConfigurationError):
            Configuration.from_coords([1, 2, 3, 4])
        with self.assertRaises(ConfigurationError):
            Configuration(2, [0, 0], [0, 0, 0])
        with self.assertRaises(ConfigurationError):
            Configuration(2, [0, math.inf], [0])


class RotationTest(BaseTest):
    def test_planar_quarter_turn(self):
        rot = rotation_matrices([[math.pi / 2]])[0]
        np.testing.assert_allclose(rot, [[0, -1], [1, 0]], atol=1e-15)

    def test_spatial_rotations_are_proper(self):
        rot = rotation_matrices([[0.3, -0.4, 1.2]])[0]
        np.testing.assert_allclose(rot @ rot.T, np.eye(3), atol=1e-12)
        self.assertAlmostEqual(float(np.linalg.det(rot)), 1.0, places=12)

    def test_yaw_only_matches_planar(self):
        spatial = rotation_matrices([[0.0, 0.0, 0.7]])[0]
        planar = rotation_matrices([[0.7]])[0]
        np.testing.assert_allclose(spatial[:2, :2], planar, atol=1e-15)

    def test_derivatives_match_finite_differences(self):
        angles = np.array([0.3, -0.4, 1.2])
        analytic = rotation_matrix_derivatives(angles[None, :])[0]
        h = 1e-6
        for k in range(3):
            step = np.zeros(3)
            step[k] = h
            numeric = (rotation_matrices((angles + step)[None, :])[0] - rotation_matrices((angles - step)[None, :])[0]) / (2 * h)
            np.testing.assert_allclose(analytic[k], numeric, atol=1e-8)

    def test_euler_rates_at_identity(self):
        np.testing.assert_allclose(euler_rate_matrices([[0.0, 0.0, 0.0]])[0], np.eye(3))

    def test_pose_applies_rotation_then_translation(self):
        pose = pose_from_config([1.0, 2.0, math.pi / 2])
        np.testing.assert_allclose(pose.apply([[1.0, 0.0]]), [[1.0, 3.0]], atol=1e-15)


class SdfGridTest(BaseTest):
    def test_plane_values_and_gradients(self):
        grid = plane_grid()
        value, grad = grid.evaluate([[0.13, 0.27], [-0.4, -0.11]], gradient=True)
        np.testing.assert_allclose(value, [0.27, -0.11], atol=1e-12)
        np.testing.assert_allclose(grad, [[0.0, 1.0], [0.0, 1.0]], atol=1e-9)

    def test_outside_the_box_adds_distance(self):
        grid = plane_grid()
        value, grad = grid.evaluate([[0.0, 2.0]], gradient=True)
        self.assertAlmostEqual(float(value[0]), 2.0, places=9)
        np.testing.assert_allclose(grad[0], [0.0, 1.0], atol=1e-9)

    def test_trilinear_plane(self):
        grid = plane_grid(3)
        value, grad = grid.evaluate([[0.05, -0.33, 0.21]], gradient=True)
        self.assertAlmostEqual(float(value[0]), 0.21, places=12)
        np.testing.assert_allclose(grad[0], [0.0, 0.0, 1.0], atol=1e-9)

    def test_rejects_inconsistent_grids(self):
        with self.assertRaises(ConfigurationError):
            SdfGrid(origin=np.zeros(2), cell_size=0.1, dims=(3, 3), values=np.zeros(8))
        with self.assertRaises(ConfigurationError):
            SdfGrid(origin=np.zeros(2), cell_size=0.0, dims=(3, 3), values=np.zeros(9))
        with self.assertRaises(ConfigurationError):
            SdfGrid(origin=np.zeros(2), cell_size=0.1, dims=(1, 3), values=np.zeros(3))

    def test_normals_flag_flat_fields(self):
        grid = SdfGrid(origin=np.zeros(2), cell_size=0.1, dims=(3, 3), values=np.zeros(9))
        normals, degenerate = surface_normals(grid, [[0.05, 0.05]])
        self.assertTrue(degenerate[0])
        np.testing.assert_array_equal(normals[0], [0.0, 1.0])


class SemiInfiniteConstraintTest(BaseTest):
    def test_closest_point_ties_go_to_lowest_index(self):
        found = closest_point([0.0, HALF, 0.0], box_cloud(), plane_grid())
        self.assertEqual(found.index, LEFT_CORNER)
        self.assertAlmostEqual(found.distance, 0.0, places=12)

    def test_round_off_ties_go_to_lowest_index(self):
        # Quarter turn: the right face lies on the floor up to cos(pi/2) round-off
        found = closest_point([0.0, HALF, -math.pi / 2], box_cloud(), plane_grid())
        self.assertEqual(found.index, RIGHT_CORNER)

    def test_real_tilts_pick_the_lower_corner(self):
        self.assertEqual(closest_point([0.0, HALF, -math.pi / 2 + 1e-3], box_cloud(), plane_grid()).index, RIGHT_CORNER)
        self.assertEqual(closest_point([0.0, HALF, -math.pi / 2 - 1e-3], box_cloud(), plane_grid()).index, 2 * PER_SIDE)

    def test_min_distance_of_raised_box(self):
        self.assertAlmostEqual(min_distance([0.0, HALF + 0.03, 0.0], box_cloud(), plane_grid()), 0.03, places=9)

    def test_jacobian_matches_finite_differences(self):
        grid = plane_grid()
        points = box_cloud().points[:5]
        q = np.array([0.1, 0.3, 0.4])
        _value, jac = signed_distances(q, points, grid)
        h = 1e-6
        for k in range(3):
            step = np.zeros(3)
            step[k] = h
            numeric = (signed_distances(q + step, points, grid)[0] - signed_distances(q - step, points, grid)[0]) / (2 * h)
            np.testing.assert_allclose(jac[:, k], numeric, atol=1e-7)


class AngleUtilsTest(BaseTest):
    def test_wrap_angle(self):
        self.assertAlmostEqual(float(wrap_angle(3 * math.pi / 2)), -math.pi / 2)
        self.assertAlmostEqual(float(wrap_angle(math.pi)), -math.pi)

    def test_unwrap_goal_takes_shorter_arc(self):
        goal = unwrap_goal([0.0, 0.0, 3.0], [1.0, 0.0, -3.0])
        self.assertAlmostEqual(goal[2], 2 * math.pi - 3.0)
        self.assertEqual(goal[0], 1.0)

    def test_configuration_error_wraps_angles(self):
        diff = configuration_error([0.0, 0.0, math.pi - 0.01], [0.0, 0.0, -math.pi + 0.01])
        self.assertAlmostEqual(diff[2], -0.02)

    def test_format_float_drops_negative_zero(self):
        self.assertEqual(format_float(-0.00001, 3), "0.000")
        self.assertEqual(format_float(-1.5, 2), "-1.50")
