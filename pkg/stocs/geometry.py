"""
Rigid transforms, surface point clouds and signed-distance-field grids.

Configurations are flat coordinate vectors ``[translation, rotation]``: ``(x, y, theta)``
in 2D and ``(x, y, z, roll, pitch, yaw)`` in 3D, where the 3D rotation is
``Rz(yaw) @ Ry(pitch) @ Rx(roll)``. The ZYX parameterization is singular at
``pitch = ±pi/2``; scenarios are expected to stay clear of it.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Self

from numpy.typing import ArrayLike, NDArray
import numpy as np

from .exceptions import ConfigurationError

type FloatArray = NDArray[np.float64]
type IntArray = NDArray[np.intp]


def rotation_size(dim: int) -> int:
    if dim == 2:
        return 1
    if dim == 3:
        return 3
    raise ConfigurationError(f"Unsupported dimension {dim}; expected 2 or 3.")


def config_size(dim: int) -> int:
    return dim + rotation_size(dim)


def dim_from_config_size(size: int) -> int:
    if size == 3:
        return 2
    if size == 6:
        return 3
    raise ConfigurationError(f"Configuration vectors have 3 (2D) or 6 (3D) entries, got {size}.")


@dataclass(frozen=True)
class Configuration:
    dim: int
    translation: FloatArray
    rotation: FloatArray

    def __post_init__(self) -> None:
        translation = np.asarray(self.translation, dtype=float).reshape(-1)
        rotation = np.asarray(self.rotation, dtype=float).reshape(-1)
        if translation.shape != (self.dim,) or rotation.shape != (rotation_size(self.dim),):
            raise ConfigurationError(f"Configuration shapes {translation.shape}/{rotation.shape} do not match dim={self.dim}.")
        if not (np.all(np.isfinite(translation)) and np.all(np.isfinite(rotation))):
            raise ConfigurationError("Configuration entries must be finite.")
        object.__setattr__(self, "translation", translation)
        object.__setattr__(self, "rotation", rotation)

    @classmethod
    def from_coords(cls, coords: ArrayLike) -> Self:
        vec = np.asarray(coords, dtype=float).reshape(-1)
        dim = dim_from_config_size(vec.size)
        return cls(dim, vec[:dim], vec[dim:])

    @classmethod
    def identity(cls, dim: int) -> Self:
        return cls(dim, np.zeros(dim), np.zeros(rotation_size(dim)))

    @property
    def coords(self) -> FloatArray:
        return np.concatenate([self.translation, self.rotation])


@dataclass(frozen=True)
class SpatialVelocity:
    dim: int
    linear: FloatArray
    angular: FloatArray

    def __post_init__(self) -> None:
        linear = np.asarray(self.linear, dtype=float).reshape(-1)
        angular = np.asarray(self.angular, dtype=float).reshape(-1)
        if linear.shape != (self.dim,) or angular.shape != (rotation_size(self.dim),):
            raise ConfigurationError(f"Velocity shapes {linear.shape}/{angular.shape} do not match dim={self.dim}.")
        if not (np.all(np.isfinite(linear)) and np.all(np.isfinite(angular))):
            raise ConfigurationError("Velocity entries must be finite.")
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "angular", angular)

    @classmethod
    def from_coords(cls, coords: ArrayLike) -> Self:
        vec = np.asarray(coords, dtype=float).reshape(-1)
        dim = dim_from_config_size(vec.size)
        return cls(dim, vec[:dim], vec[dim:])

    @property
    def coords(self) -> FloatArray:
        return np.concatenate([self.linear, self.angular])


# Rotations ------------------------------------------------------------------


def rotation_matrices(rotations: ArrayLike) -> FloatArray:
    """Batch of rotation matrices, ``(K, nr) -> (K, D, D)``."""
    rot = np.atleast_2d(np.asarray(rotations, dtype=float))
    if rot.shape[1] == 1:
        c, s = np.cos(rot[:, 0]), np.sin(rot[:, 0])
        return np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)
    rx, ry, rz = _axis_rotations(rot)
    return rz @ ry @ rx


def rotation_matrix_derivatives(rotations: ArrayLike) -> FloatArray:
    """Partial derivatives of each rotation matrix, ``(K, nr) -> (K, nr, D, D)``."""
    rot = np.atleast_2d(np.asarray(rotations, dtype=float))
    if rot.shape[1] == 1:
        c, s = np.cos(rot[:, 0]), np.sin(rot[:, 0])
        d = np.stack([np.stack([-s, -c], axis=-1), np.stack([c, -s], axis=-1)], axis=-2)
        return d[:, None, :, :]
    rx, ry, rz = _axis_rotations(rot)
    drx, dry, drz = _axis_rotation_derivatives(rot)
    return np.stack([rz @ ry @ drx, rz @ dry @ rx, drz @ ry @ rx], axis=1)


def _axis_rotations(rot: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
    k = rot.shape[0]
    cr, sr = np.cos(rot[:, 0]), np.sin(rot[:, 0])
    cp, sp = np.cos(rot[:, 1]), np.sin(rot[:, 1])
    cy, sy = np.cos(rot[:, 2]), np.sin(rot[:, 2])
    rx = np.zeros((k, 3, 3))
    rx[:, 0, 0] = 1.0
    rx[:, 1, 1], rx[:, 1, 2], rx[:, 2, 1], rx[:, 2, 2] = cr, -sr, sr, cr
    ry = np.zeros((k, 3, 3))
    ry[:, 1, 1] = 1.0
    ry[:, 0, 0], ry[:, 0, 2], ry[:, 2, 0], ry[:, 2, 2] = cp, sp, -sp, cp
    rz = np.zeros((k, 3, 3))
    rz[:, 2, 2] = 1.0
    rz[:, 0, 0], rz[:, 0, 1], rz[:, 1, 0], rz[:, 1, 1] = cy, -sy, sy, cy
    return rx, ry, rz


def _axis_rotation_derivatives(rot: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
    k = rot.shape[0]
    cr, sr = np.cos(rot[:, 0]), np.sin(rot[:, 0])
    cp, sp = np.cos(rot[:, 1]), np.sin(rot[:, 1])
    cy, sy = np.cos(rot[:, 2]), np.sin(rot[:, 2])
    drx = np.zeros((k, 3, 3))
    drx[:, 1, 1], drx[:, 1, 2], drx[:, 2, 1], drx[:, 2, 2] = -sr, -cr, cr, -sr
    dry = np.zeros((k, 3, 3))
    dry[:, 0, 0], dry[:, 0, 2], dry[:, 2, 0], dry[:, 2, 2] = -sp, cp, -cp, -sp
    drz = np.zeros((k, 3, 3))
    drz[:, 0, 0], drz[:, 0, 1], drz[:, 1, 0], drz[:, 1, 1] = -sy, -cy, cy, -sy
    return drx, dry, drz


def euler_rate_matrices(rotations: ArrayLike) -> FloatArray:
    """
    Maps ZYX Euler-angle rates ``(roll, pitch, yaw)`` to world angular velocity,
    ``(K, 3) -> (K, 3, 3)``.
    """
    rot = np.atleast_2d(np.asarray(rotations, dtype=float))
    cp, sp = np.cos(rot[:, 1]), np.sin(rot[:, 1])
    cy, sy = np.cos(rot[:, 2]), np.sin(rot[:, 2])
    e = np.zeros((rot.shape[0], 3, 3))
    e[:, 0, 0], e[:, 1, 0], e[:, 2, 0] = cy * cp, sy * cp, -sp
    e[:, 0, 1], e[:, 1, 1] = -sy, cy
    e[:, 2, 2] = 1.0
    return e


def euler_rate_matrix_derivatives(rotations: ArrayLike) -> FloatArray:
    """``(K, 3) -> (K, 3, 3, 3)``; axis 1 indexes the Euler angle differentiated."""
    rot = np.atleast_2d(np.asarray(rotations, dtype=float))
    cp, sp = np.cos(rot[:, 1]), np.sin(rot[:, 1])
    cy, sy = np.cos(rot[:, 2]), np.sin(rot[:, 2])
    d = np.zeros((rot.shape[0], 3, 3, 3))
    # pitch
    d[:, 1, 0, 0], d[:, 1, 1, 0], d[:, 1, 2, 0] = -cy * sp, -sy * sp, -cp
    # yaw
    d[:, 2, 0, 0], d[:, 2, 1, 0] = -sy * cp, cy * cp
    d[:, 2, 0, 1], d[:, 2, 1, 1] = -cy, -sy
    return d


def cross(a: FloatArray, b: FloatArray) -> FloatArray:
    """Cross product that returns the scalar z-component for 2D inputs."""
    if a.shape[-1] == 2:
        return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return np.cross(a, b)


def perp(a: FloatArray) -> FloatArray:
    """``z_hat x a`` for 2D vectors: the derivative of ``w x a`` with respect to scalar ``w``."""
    return np.stack([-a[..., 1], a[..., 0]], axis=-1)


def skew(a: FloatArray) -> FloatArray:
    """Batch of 3x3 cross-product matrices with ``skew(a) @ b == a x b``."""
    s = np.zeros(a.shape[:-1] + (3, 3))
    s[..., 0, 1], s[..., 0, 2] = -a[..., 2], a[..., 1]
    s[..., 1, 0], s[..., 1, 2] = a[..., 2], -a[..., 0]
    s[..., 2, 0], s[..., 2, 1] = -a[..., 1], a[..., 0]
    return s


@dataclass(frozen=True)
class RigidTransform:
    rotation: FloatArray
    translation: FloatArray

    @classmethod
    def identity(cls, dim: int) -> Self:
        return cls(np.eye(dim), np.zeros(dim))

    @property
    def dim(self) -> int:
        return int(self.translation.shape[0])

    @property
    def matrix(self) -> FloatArray:
        m = np.eye(self.dim + 1)
        m[: self.dim, : self.dim] = self.rotation
        m[: self.dim, self.dim] = self.translation
        return m

    def apply(self, points: ArrayLike) -> FloatArray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)


def pose_from_config(q: Configuration | ArrayLike) -> RigidTransform:
    config = q if isinstance(q, Configuration) else Configuration.from_coords(q)
    return RigidTransform(rotation_matrices(config.rotation)[0], config.translation.copy())


# Point clouds -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SurfaceCloud:
    points: FloatArray
    normals: FloatArray | None = None

    def __post_init__(self) -> None:
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if points.shape[0] == 0 or points.shape[1] not in (2, 3):
            raise ConfigurationError(f"Surface clouds need at least one 2D or 3D point, got shape {points.shape}.")
        if not np.all(np.isfinite(points)):
            raise ConfigurationError("Surface cloud contains non-finite coordinates.")
        object.__setattr__(self, "points", points)
        if self.normals is not None:
            normals = np.asarray(self.normals, dtype=float)
            if normals.shape != points.shape:
                raise ConfigurationError(f"Normals shape {normals.shape} does not match points shape {points.shape}.")
            lengths = np.linalg.norm(normals, axis=1)
            lengths[lengths == 0.0] = 1.0
            object.__setattr__(self, "normals", normals / lengths[:, None])

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])


# Signed distance fields --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SdfGrid:
    """
    Signed distances sampled at the vertices of a uniform grid. ``values`` are stored
    row-major with x varying fastest. Queries inside the grid use bilinear/trilinear
    interpolation; queries outside are clamped to the boundary cell and the Euclidean
    distance to the grid box is added.
    """

    origin: FloatArray
    cell_size: float
    dims: tuple[int, ...]
    values: FloatArray
    lattice: FloatArray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        origin = np.asarray(self.origin, dtype=float).reshape(-1)
        dims = tuple(int(n) for n in self.dims)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(dims) not in (2, 3) or origin.shape != (len(dims),):
            raise ConfigurationError(f"SDF grid origin {origin.shape} and dims {dims} must both be 2D or 3D.")
        if any(n < 2 for n in dims):
            raise ConfigurationError(f"SDF grid needs at least 2 vertices per axis, got {dims}.")
        if not self.cell_size > 0:
            raise ConfigurationError(f"SDF cell size must be positive, got {self.cell_size}.")
        if values.size != int(np.prod(dims)):
            raise ConfigurationError(f"SDF grid has {values.size} values but dims {dims} require {int(np.prod(dims))}.")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("SDF grid values must be finite.")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "cell_size", float(self.cell_size))
        object.__setattr__(self, "lattice", values.reshape(dims, order="F"))

    @classmethod
    def from_function(
        cls,
        fn: Callable[[FloatArray], FloatArray],
        origin: Sequence[float],
        cell_size: float,
        dims: Sequence[int],
    ) -> Self:
        """Sample an analytic distance function at the grid vertices."""
        axes = [origin[i] + cell_size * np.arange(n) for i, n in enumerate(dims)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.reshape(-1, order="F") for m in mesh], axis=1)
        return cls(np.asarray(origin, dtype=float), cell_size, tuple(dims), np.asarray(fn(pts), dtype=float))

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def upper(self) -> FloatArray:
        return self.origin + self.cell_size * (np.asarray(self.dims) - 1)

    def vertex(self, index: Sequence[int]) -> FloatArray:
        return self.origin + self.cell_size * np.asarray(index, dtype=float)

    def evaluate(self, points: ArrayLike, gradient: bool = False) -> tuple[FloatArray, FloatArray | None]:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if x.shape[1] != self.dim:
            raise ConfigurationError(f"Query points of dimension {x.shape[1]} against a {self.dim}D grid.")
        h = self.cell_size
        top = np.asarray(self.dims, dtype=float) - 1.0
        u = (x - self.origin) / h
        uc = np.clip(u, 0.0, top)
        # Points on a shared face belong to the lower cell
        cell = np.clip(np.ceil(uc) - 1.0, 0.0, top - 1.0).astype(np.intp)
        frac = uc - cell
        if self.dim == 2:
            value, grad_u = self._bilinear(cell, frac)
        else:
            value, grad_u = self._trilinear(cell, frac)
        outside = u - uc
        dist = h * np.linalg.norm(outside, axis=1)
        value = value + dist
        if not gradient:
            return value, None
        grad = grad_u / h
        grad[outside != 0.0] = 0.0
        away = dist > 0.0
        if np.any(away):
            grad[away] += outside[away] / np.linalg.norm(outside[away], axis=1)[:, None]
        return value, grad

    def _bilinear(self, cell: IntArray, frac: FloatArray) -> tuple[FloatArray, FloatArray]:
        f = self.lattice
        i, j = cell[:, 0], cell[:, 1]
        fx, fy = frac[:, 0], frac[:, 1]
        v00, v10 = f[i, j], f[i + 1, j]
        v01, v11 = f[i, j + 1], f[i + 1, j + 1]
        a = v00 + fx * (v10 - v00)
        b = v01 + fx * (v11 - v01)
        value = a + fy * (b - a)
        gx = (v10 - v00) + fy * ((v11 - v01) - (v10 - v00))
        gy = b - a
        return value, np.stack([gx, gy], axis=1)

    def _trilinear(self, cell: IntArray, frac: FloatArray) -> tuple[FloatArray, FloatArray]:
        f = self.lattice
        i, j, k = cell[:, 0], cell[:, 1], cell[:, 2]
        fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
        v000, v100 = f[i, j, k], f[i + 1, j, k]
        v010, v110 = f[i, j + 1, k], f[i + 1, j + 1, k]
        v001, v101 = f[i, j, k + 1], f[i + 1, j, k + 1]
        v011, v111 = f[i, j + 1, k + 1], f[i + 1, j + 1, k + 1]
        c00 = v000 + fx * (v100 - v000)
        c10 = v010 + fx * (v110 - v010)
        c01 = v001 + fx * (v101 - v001)
        c11 = v011 + fx * (v111 - v011)
        c0 = c00 + fy * (c10 - c00)
        c1 = c01 + fy * (c11 - c01)
        value = c0 + fz * (c1 - c0)
        gz = c1 - c0
        gy = (1.0 - fz) * (c10 - c00) + fz * (c11 - c01)
        gx = (1.0 - fz) * ((1.0 - fy) * (v100 - v000) + fy * (v110 - v010)) + fz * ((1.0 - fy) * (v101 - v001) + fy * (v111 - v011))
        return value, np.stack([gx, gy, gz], axis=1)


def sdf_value(grid: SdfGrid, x: ArrayLike) -> float:
    value, _grad = grid.evaluate(x)
    return float(value[0])


def sdf_gradient(grid: SdfGrid, x: ArrayLike) -> FloatArray:
    _value, grad = grid.evaluate(x, gradient=True)
    assert grad is not None
    return grad[0]


def surface_normals(grid: SdfGrid, points: ArrayLike) -> tuple[FloatArray, NDArray[np.bool_]]:
    """
    Unit outward normals of the environment at ``points`` (normalized SDF gradients).
    Where the gradient vanishes the world up-axis is returned and the point is flagged.
    """
    _value, grad = grid.evaluate(points, gradient=True)
    assert grad is not None
    norms = np.linalg.norm(grad, axis=1)
    degenerate = norms < 1e-12
    normals = np.zeros_like(grad)
    normals[~degenerate] = grad[~degenerate] / norms[~degenerate, None]
    normals[degenerate, -1] = 1.0
    return normals, degenerate


# Semi-infinite constraint --------------------------------------------------------


def signed_distances(q: ArrayLike, points: ArrayLike, grid: SdfGrid) -> tuple[FloatArray, FloatArray]:
    """
    ``g(q, y) = psi(T_q y)`` for many object points at one configuration, with the
    Jacobian ``dg/dq`` of shape ``(N, nq)``.
    """
    config = Configuration.from_coords(q)
    y = np.atleast_2d(np.asarray(points, dtype=float))
    rot = rotation_matrices(config.rotation)[0]
    drot = rotation_matrix_derivatives(config.rotation)[0]
    world = y @ rot.T + config.translation
    value, grad = grid.evaluate(world, gradient=True)
    assert grad is not None
    jac_rot = np.einsum("nd,rde,ne->nr", grad, drot, y)
    return value, np.concatenate([grad, jac_rot], axis=1)


def signed_distance(q: ArrayLike, y: ArrayLike, grid: SdfGrid) -> tuple[float, FloatArray]:
    value, jac = signed_distances(q, np.atleast_2d(np.asarray(y, dtype=float)), grid)
    return float(value[0]), jac[0]


# Cloud distances within this of the minimum count as tied
TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ClosestPointResult:
    index: int
    point: FloatArray
    distance: float


def cloud_distances(q: ArrayLike, cloud: SurfaceCloud, grid: SdfGrid) -> FloatArray:
    transform = pose_from_config(q)
    value, _grad = grid.evaluate(transform.apply(cloud.points))
    return value


def closest_point(q: ArrayLike, cloud: SurfaceCloud, grid: SdfGrid, tie: float = TIE_TOLERANCE) -> ClosestPointResult:
    """
    Exhaustive minimum of ``g(q, y)`` over the cloud. Points within ``tie`` of the minimum
    are tied and the lowest index wins, so a face lying flat on the environment always
    reports the same point instead of whichever one round-off favours.
    """
    transform = pose_from_config(q)
    world = transform.apply(cloud.points)
    value, _grad = grid.evaluate(world)
    index = int(np.flatnonzero(value <= np.min(value) + tie)[0])
    return ClosestPointResult(index=index, point=world[index], distance=float(value[index]))


def min_distance(q: ArrayLike, cloud: SurfaceCloud, grid: SdfGrid) -> float:
    return float(np.min(cloud_distances(q, cloud, grid)))
