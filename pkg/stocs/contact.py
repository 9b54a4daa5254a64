"""
Contact frames, polyhedral friction cones and force/torque balance.

Everything here works on a single contact or a single time step. Lever arms are taken
about the center of mass, ``r = R (y - com)``, and velocities follow the convention
that the configuration's translation is the position of the object-frame origin,
which the shipped scenarios place at the center of mass.
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
import logging

from numpy.typing import ArrayLike
import numpy as np

from .exceptions import ConfigurationError
from .geometry import (
    Configuration,
    FloatArray,
    SdfGrid,
    SpatialVelocity,
    cross,
    euler_rate_matrices,
    perp,
    rotation_matrices,
    rotation_size,
    surface_normals,
)
from .states import BalanceMode

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContactFrame:
    point: FloatArray
    normal: FloatArray
    tangents: FloatArray
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return int(self.normal.shape[0])

    @property
    def d(self) -> int:
        return int(self.tangents.shape[0])


@dataclass(frozen=True)
class ContactForce:
    normal: float
    tangential: FloatArray
    gamma: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "normal", float(self.normal))
        object.__setattr__(self, "tangential", np.asarray(self.tangential, dtype=float).reshape(-1))
        object.__setattr__(self, "gamma", float(self.gamma))

    @classmethod
    def zero(cls, d: int) -> "ContactForce":
        return cls(0.0, np.zeros(d), 0.0)

    @classmethod
    def from_components(cls, components: ArrayLike, with_gamma: bool = True) -> "ContactForce":
        """Build from ``[zN, zD1..zDd(, gamma)]``."""
        vec = np.asarray(components, dtype=float).reshape(-1)
        if with_gamma:
            return cls(vec[0], vec[1:-1], vec[-1])
        return cls(vec[0], vec[1:], 0.0)

    @property
    def d(self) -> int:
        return int(self.tangential.shape[0])


@dataclass(frozen=True)
class ManipulatorContact:
    """A sticking push contact, fixed in the object frame. ``normal`` points into the object."""

    point: FloatArray
    normal: FloatArray
    friction: float

    def __post_init__(self) -> None:
        point = np.asarray(self.point, dtype=float).reshape(-1)
        normal = np.asarray(self.normal, dtype=float).reshape(-1)
        length = float(np.linalg.norm(normal))
        if normal.shape != point.shape or length == 0.0:
            raise ConfigurationError("Manipulator contacts need a nonzero normal matching the point dimension.")
        if self.friction < 0:
            raise ConfigurationError(f"Manipulator friction must be nonnegative, got {self.friction}.")
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "normal", normal / length)
        object.__setattr__(self, "friction", float(self.friction))

    def basis(self, d: int) -> FloatArray:
        """Object-frame force directions ``[normal, tangents...]``, shape ``(1 + d, dim)``."""
        return np.vstack([self.normal, tangent_basis(self.normal, d)])

    def frame(self, q: ArrayLike, d: int) -> ContactFrame:
        # The cone is fixed to the object, so its tangents rotate with it
        config = Configuration.from_coords(q)
        rot = rotation_matrices(config.rotation)[0]
        directions = self.basis(d) @ rot.T
        return ContactFrame(
            point=rot @ self.point + config.translation,
            normal=directions[0],
            tangents=directions[1:],
        )


@dataclass(frozen=True)
class Wrench:
    force: FloatArray
    torque: FloatArray

    @classmethod
    def zero(cls, dim: int) -> "Wrench":
        return cls(np.zeros(dim), np.zeros(rotation_size(dim)))

    @property
    def vector(self) -> FloatArray:
        return np.concatenate([self.force, np.atleast_1d(self.torque)])

    def __add__(self, other: "Wrench") -> "Wrench":
        return Wrench(self.force + other.force, np.atleast_1d(self.torque) + np.atleast_1d(other.torque))


def validate_cone_size(dim: int, d: int) -> None:
    if dim == 2 and d != 2:
        raise ConfigurationError(f"2D friction cones have exactly 2 tangent directions, got {d}.")
    if dim == 3 and (d < 2 or d % 2):
        raise ConfigurationError(f"3D friction cones need an even number of tangent directions, got {d}.")


def tangent_basis(normal: ArrayLike, d: int) -> FloatArray:
    """
    ``d`` unit tangents orthogonal to ``normal``, shape ``(d, dim)``. The second half of
    the set is the exact negation of the first half.
    """
    n = np.asarray(normal, dtype=float).reshape(-1)
    validate_cone_size(n.shape[0], d)
    if n.shape[0] == 2:
        t1 = np.array([n[1], -n[0]])
        return np.stack([t1, -t1])
    t1 = np.array([1.0, 0.0, 0.0]) - n[0] * n
    if np.linalg.norm(t1) < 1e-6:
        t1 = np.array([0.0, 1.0, 0.0]) - n[1] * n
    t1 = t1 / np.linalg.norm(t1)
    b = np.cross(n, t1)
    half = d // 2
    angles = 2.0 * np.pi * np.arange(half) / d
    first = np.cos(angles)[:, None] * t1 + np.sin(angles)[:, None] * b
    return np.concatenate([first, -first])


def build_frame(grid: SdfGrid, point: ArrayLike, d: int) -> ContactFrame:
    x = np.asarray(point, dtype=float).reshape(-1)
    normals, degenerate = surface_normals(grid, x[None, :])
    if degenerate[0]:
        logger.warning("Zero SDF gradient at Point[%s]; using the up-axis as contact normal.", x.tolist())
    return ContactFrame(point=x, normal=normals[0], tangents=tangent_basis(normals[0], d), degenerate=bool(degenerate[0]))


def cone_residual(mu: float, f: ContactForce) -> float:
    return float(mu * f.normal - np.sum(f.tangential))


def world_force(frame: ContactFrame, f: ContactForce) -> FloatArray:
    if f.d != frame.d:
        raise ConfigurationError(f"Force has {f.d} tangential components but the frame has {frame.d} tangents.")
    return np.asarray(f.normal * frame.normal + f.tangential @ frame.tangents)


def lever_arm(q: ArrayLike, y: ArrayLike, com: ArrayLike) -> FloatArray:
    config = Configuration.from_coords(q)
    rot = rotation_matrices(config.rotation)[0]
    return np.asarray(rot @ (np.asarray(y, dtype=float) - np.asarray(com, dtype=float)))


def angular_velocity(q: ArrayLike, v: ArrayLike) -> FloatArray:
    """World angular velocity; in 3D the Euler-angle rates go through the ZYX rate matrix."""
    config = Configuration.from_coords(q)
    velocity = SpatialVelocity.from_coords(v)
    if config.dim == 2:
        return velocity.angular
    return np.asarray(euler_rate_matrices(config.rotation)[0] @ velocity.angular)


def point_velocity(q: ArrayLike, v: ArrayLike, y: ArrayLike, com: ArrayLike) -> FloatArray:
    velocity = SpatialVelocity.from_coords(v)
    r = lever_arm(q, y, com)
    omega = angular_velocity(q, v)
    if velocity.dim == 2:
        return np.asarray(velocity.linear + omega[0] * perp(r))
    return np.asarray(velocity.linear + np.cross(omega, r))


def slip_velocity(q: ArrayLike, v: ArrayLike, y: ArrayLike, frame: ContactFrame, com: ArrayLike) -> FloatArray:
    """Velocity of material point ``y`` projected onto each tangent direction of ``frame``."""
    return np.asarray(frame.tangents @ point_velocity(q, v, y, com))


def contact_wrench(q: ArrayLike, y: ArrayLike, f: ContactForce, frame: ContactFrame, com: ArrayLike) -> Wrench:
    force = world_force(frame, f)
    return Wrench(force, np.atleast_1d(cross(lever_arm(q, y, com), force)))


def gravity_vector(dim: int, gravity: float) -> FloatArray:
    g = np.zeros(dim)
    g[-1] = -gravity
    return g


def net_wrench(
    q: ArrayLike,
    manipulators: Sequence[ManipulatorContact],
    manipulator_forces: Sequence[ContactForce],
    contacts: Iterable[tuple[FloatArray, ContactFrame, ContactForce]],
    mass: float,
    gravity: float,
    com: ArrayLike,
) -> Wrench:
    """
    Gravity plus every manipulator and environment contact wrench about the center of
    mass. ``contacts`` yields ``(object point, frame, force)`` triples.
    """
    config = Configuration.from_coords(q)
    total = Wrench(mass * gravity_vector(config.dim, gravity), np.zeros(rotation_size(config.dim)))
    for contact, force in zip(manipulators, manipulator_forces, strict=True):
        frame = contact.frame(config.coords, force.d)
        total = total + contact_wrench(config.coords, contact.point, force, frame, com)
    for y, frame, force in contacts:
        total = total + contact_wrench(config.coords, y, force, frame, com)
    return total


def mass_matrix(dim: int, mass: float, inertia: ArrayLike | None) -> FloatArray:
    if inertia is None:
        raise ConfigurationError("Quasidynamic balance needs the object's rotational inertia.")
    nr = rotation_size(dim)
    rot_inertia = np.asarray(inertia, dtype=float).reshape(nr, nr) if nr > 1 else np.asarray(inertia, dtype=float).reshape(1, 1)
    m = np.zeros((dim + nr, dim + nr))
    m[:dim, :dim] = mass * np.eye(dim)
    m[dim:, dim:] = rot_inertia
    return m


def balance_residual(
    w: Wrench,
    mode: BalanceMode | str,
    inertia: FloatArray | None = None,
    vdot: ArrayLike | None = None,
) -> FloatArray:
    """``w`` for quasistatic balance, ``w - M vdot`` for quasidynamic balance, with ``M`` passed as ``inertia``."""
    vector = w.vector
    if BalanceMode(mode) == BalanceMode.QUASISTATIC:
        return vector
    if inertia is None or vdot is None:
        raise ConfigurationError("Quasidynamic balance needs the mass matrix and the velocity derivative.")
    return np.asarray(vector - inertia @ np.asarray(vdot, dtype=float).reshape(-1))
