"""
Finite MPCC assembled over the instantiated index set.

The decision vector stacks, in order: configurations ``q_0..q_T``, velocities ``v_0..v_T``,
manipulator forces ``u[t, i] = [uN, uD_1..uD_d]`` and one block ``[zN, zD_1..zD_d, gamma]``
per instantiated index point (time step major, then index-set order).

Constraint families, in registry order:

=====================  ====  ===================================================
dynamics               eq    ``q_t - q_{t+1} + v_{t+1} dt``
balance                eq    net wrench (minus ``M v_t / dt`` when quasidynamic)
manipulator_cone       ineq  ``mu_mnp uN - sum(uD)``
distance               ineq  ``g(q_t, y)``
environment_cone       ineq  ``mu_env zN - sum(zD)``
slip                   ineq  ``gamma + slip_j``
complementarity        ineq  ``sigma - product`` for ``zN g``, ``cone gamma`` and
                             ``(gamma + slip_j) zD_j``
=====================  ====  ===================================================

The start pose, the goal ball and force nonnegativity are variable bounds. Contact
frames come from the trajectory the problem is assembled at and stay fixed for the life
of the problem. The solver reassembles at the current trajectory every outer iteration,
and a candidate is only reported converged once the verifier, which recomputes frames at
the reported poses, accepts it.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Any, Literal, Self
import logging

from numpy.typing import ArrayLike
from scipy import sparse
import numpy as np

from .contact import ContactForce, gravity_vector, tangent_basis, validate_cone_size
from .exceptions import ConfigurationError
from .geometry import (
    FloatArray,
    IntArray,
    config_size,
    euler_rate_matrices,
    euler_rate_matrix_derivatives,
    rotation_matrices,
    rotation_matrix_derivatives,
    rotation_size,
    surface_normals,
)
from .oracles import IndexSet
from .scenarios import Scenario
from .states import BalanceMode
from .utils import unwrap_goal

logger = logging.getLogger(__name__)

type SparseMatrix = sparse.csr_array


@dataclass(frozen=True)
class TrajectoryVars:
    q: FloatArray
    v: FloatArray
    u: FloatArray

    @property
    def steps(self) -> int:
        return int(self.q.shape[0]) - 1

    def copy(self) -> "TrajectoryVars":
        return TrajectoryVars(self.q.copy(), self.v.copy(), self.u.copy())


@dataclass(frozen=True)
class ForceVars:
    """Per-step contact forces ``[zN, zD_1..zD_d, gamma]`` aligned with an index set."""

    indices: tuple[IntArray, ...]
    values: tuple[FloatArray, ...]

    @classmethod
    def empty(cls, steps: int, d: int) -> Self:
        return cls(
            tuple(np.zeros(0, dtype=np.intp) for _ in range(steps + 1)),
            tuple(np.zeros((0, d + 2)) for _ in range(steps + 1)),
        )

    def get(self, step: int, index: int) -> FloatArray | None:
        if step >= len(self.indices):
            return None
        hits = np.flatnonzero(self.indices[step] == index)
        if hits.size == 0:
            return None
        return self.values[step][hits[0]]

    def contact_forces(self, step: int) -> list[ContactForce]:
        return [ContactForce.from_components(row) for row in self.values[step]]


@dataclass(frozen=True)
class ObjectiveWeights:
    u: float = 1.0
    v: float = 0.1
    z: float = 1e-3

    def as_dict(self) -> dict[str, Any]:
        return {"form": "quadratic", "u": self.u, "v": self.v, "z": self.z}


@dataclass(frozen=True)
class RelaxationSchedule:
    sigma0: float = 1e-2
    decay: float = 0.2
    sigma_min: float = 1e-4

    def __post_init__(self) -> None:
        if not self.sigma0 > self.sigma_min > 0:
            raise ConfigurationError(f"Relaxation needs sigma0 > sigma_min > 0, got {self.sigma0} and {self.sigma_min}.")
        if not 0 < self.decay < 1:
            raise ConfigurationError(f"Relaxation decay must lie in (0, 1), got {self.decay}.")

    def sigma(self, iteration: int) -> float:
        """Relaxation for outer iteration ``iteration`` (1-based)."""
        return max(self.sigma_min, self.sigma0 * self.decay ** (iteration - 1))


@dataclass(frozen=True, eq=False)
class VariableLayout:
    dim: int
    steps: int
    manipulators: int
    d: int
    counts: tuple[int, ...]
    q_idx: IntArray = field(init=False, repr=False)
    v_idx: IntArray = field(init=False, repr=False)
    u_idx: IntArray = field(init=False, repr=False)
    z_idx: IntArray = field(init=False, repr=False)
    slot_steps: IntArray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        nq, nu, nz = self.nq, self.nu, self.nz
        n_steps = self.steps + 1
        slots = sum(self.counts)
        q_idx = np.arange(n_steps * nq).reshape(n_steps, nq)
        v_idx = q_idx + n_steps * nq
        u_start = 2 * n_steps * nq
        u_idx = u_start + np.arange(n_steps * self.manipulators * nu).reshape(n_steps, self.manipulators, nu)
        z_start = u_start + n_steps * self.manipulators * nu
        z_idx = z_start + np.arange(slots * nz).reshape(slots, nz)
        object.__setattr__(self, "q_idx", q_idx)
        object.__setattr__(self, "v_idx", v_idx)
        object.__setattr__(self, "u_idx", u_idx)
        object.__setattr__(self, "z_idx", z_idx)
        object.__setattr__(self, "slot_steps", np.repeat(np.arange(n_steps), self.counts).astype(np.intp))

    @property
    def nq(self) -> int:
        return config_size(self.dim)

    @property
    def nr(self) -> int:
        return rotation_size(self.dim)

    @property
    def nu(self) -> int:
        return 1 + self.d

    @property
    def nz(self) -> int:
        return 2 + self.d

    @property
    def slots(self) -> int:
        return int(self.slot_steps.shape[0])

    @property
    def size(self) -> int:
        return 2 * (self.steps + 1) * self.nq + (self.steps + 1) * self.manipulators * self.nu + self.slots * self.nz

    def slot_range(self, step: int) -> range:
        start = sum(self.counts[:step])
        return range(start, start + self.counts[step])

    def pack(self, trajectory: TrajectoryVars, slot_forces: FloatArray) -> FloatArray:
        x = np.zeros(self.size)
        x[self.q_idx] = trajectory.q
        x[self.v_idx] = trajectory.v
        x[self.u_idx] = trajectory.u
        x[self.z_idx] = slot_forces
        return x


@dataclass(frozen=True)
class ConstraintFamily:
    name: str
    kind: Literal["eq", "ineq"]
    rows: int
    complementarity: bool = False


@dataclass(frozen=True)
class ResidualReport:
    """Constraint violations per family, in a stable order."""

    blocks: dict[str, FloatArray]

    def __getitem__(self, name: str) -> FloatArray:
        return self.blocks[name]

    @property
    def norms(self) -> dict[str, float]:
        return {name: float(np.max(np.abs(block))) if block.size else 0.0 for name, block in self.blocks.items()}

    def l1(self, exclude: Sequence[str] = ()) -> float:
        return float(sum(np.sum(np.abs(block)) for name, block in self.blocks.items() if name not in exclude))


class _Triplets:
    def __init__(self, rows: int, cols: int) -> None:
        self.shape = (rows, cols)
        self._rows: list[IntArray] = []
        self._cols: list[IntArray] = []
        self._vals: list[FloatArray] = []

    def add(self, rows: ArrayLike, cols: ArrayLike, vals: ArrayLike) -> None:
        """Add a batch of dense blocks: ``rows (K, a)``, ``cols (K, b)``, ``vals (K, a, b)``."""
        v = np.asarray(vals, dtype=float)
        r = np.broadcast_to(np.asarray(rows)[:, :, None], v.shape)
        c = np.broadcast_to(np.asarray(cols)[:, None, :], v.shape)
        self._rows.append(r.ravel())
        self._cols.append(c.ravel())
        self._vals.append(v.ravel())

    def tocsr(self) -> SparseMatrix:
        if not self._vals:
            return sparse.csr_array(self.shape)
        coo = sparse.coo_array(
            (np.concatenate(self._vals), (np.concatenate(self._rows), np.concatenate(self._cols))),
            shape=self.shape,
        )
        return sparse.csr_array(coo)


def _stack(blocks: Sequence[SparseMatrix], cols: int) -> SparseMatrix:
    nonempty = [b for b in blocks if b.shape[0]]
    if not nonempty:
        return sparse.csr_array((0, cols))
    return sparse.csr_array(sparse.vstack(nonempty))


def _cross(a: FloatArray, b: FloatArray) -> FloatArray:
    """Cross product with a trailing rotation axis: ``(..., 1)`` in 2D, ``(..., 3)`` in 3D."""
    if a.shape[-1] == 2:
        return (a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])[..., None]
    return np.cross(a, b)


@dataclass(frozen=True, eq=False)
class MpccProblem:
    scenario: Scenario
    index_set: IndexSet
    layout: VariableLayout
    mode: BalanceMode
    weights: ObjectiveWeights
    goal: FloatArray
    goal_tolerance: FloatArray
    lower: FloatArray
    upper: FloatArray
    x0: FloatArray
    slot_points: FloatArray
    slot_normals: FloatArray
    slot_tangents: FloatArray
    manipulator_points: FloatArray
    manipulator_bases: FloatArray
    sigma: float = 0.0
    _cache: dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.layout.size

    @property
    def families(self) -> list[ConstraintFamily]:
        lay = self.layout
        s = lay.slots
        return [
            ConstraintFamily("dynamics", "eq", lay.steps * lay.nq),
            ConstraintFamily("balance", "eq", (lay.steps + 1) * lay.nq),
            ConstraintFamily("manipulator_cone", "ineq", (lay.steps + 1) * lay.manipulators),
            ConstraintFamily("distance", "ineq", s),
            ConstraintFamily("environment_cone", "ineq", s),
            ConstraintFamily("slip", "ineq", s * lay.d),
            ConstraintFamily("complementarity", "ineq", s * (2 + lay.d), complementarity=True),
        ]

    @property
    def complementarity_rows(self) -> int:
        return self.layout.slots * (2 + self.layout.d)

    # Variable access ------------------------------------------------------------

    def unpack(self, x: ArrayLike) -> tuple[TrajectoryVars, ForceVars]:
        vec = np.asarray(x, dtype=float)
        lay = self.layout
        trajectory = TrajectoryVars(vec[lay.q_idx].copy(), vec[lay.v_idx].copy(), vec[lay.u_idx].copy())
        z = vec[lay.z_idx]
        forces = ForceVars(
            tuple(self.index_set.indices(t) for t in range(lay.steps + 1)),
            tuple(z[list(lay.slot_range(t))].copy() for t in range(lay.steps + 1)),
        )
        return trajectory, forces

    # Objective -------------------------------------------------------------------

    def objective(self, x: ArrayLike) -> tuple[float, FloatArray]:
        vec = np.asarray(x, dtype=float)
        lay = self.layout
        u = vec[lay.u_idx]
        v = vec[lay.v_idx]
        z = vec[lay.z_idx][:, : 1 + lay.d]
        value = self.weights.u * float(np.sum(u * u)) + self.weights.v * float(np.sum(v * v)) + self.weights.z * float(np.sum(z * z))
        grad = np.zeros_like(vec)
        grad[lay.u_idx] = 2.0 * self.weights.u * u
        grad[lay.v_idx] = 2.0 * self.weights.v * v
        grad[lay.z_idx[:, : 1 + lay.d]] = 2.0 * self.weights.z * z
        return value, grad

    # Constraints -------------------------------------------------------------------

    def equalities(self, x: ArrayLike) -> tuple[FloatArray, SparseMatrix]:
        fam = self._evaluate(x)
        return np.concatenate([fam["dynamics"][0], fam["balance"][0]]), _stack([fam["dynamics"][1], fam["balance"][1]], self.n)

    def inequalities(self, x: ArrayLike) -> tuple[FloatArray, SparseMatrix]:
        fam = self._evaluate(x)
        products, products_jac = fam["complementarity"]
        values = [fam[name][0] for name in ("manipulator_cone", "distance", "environment_cone", "slip")]
        jacs = [fam[name][1] for name in ("manipulator_cone", "distance", "environment_cone", "slip")]
        values.append(self.sigma - products)
        jacs.append(-products_jac)
        return np.concatenate(values), _stack(jacs, self.n)

    def family_values(self, x: ArrayLike) -> dict[str, tuple[FloatArray, SparseMatrix]]:
        """
        Raw family values and Jacobians. The complementarity family holds the products
        themselves, before relaxation.
        """
        return dict(self._evaluate(x))

    def residuals(self, x: ArrayLike) -> ResidualReport:
        vec = np.asarray(x, dtype=float)
        fam = self._evaluate(vec)
        lay = self.layout
        q = vec[lay.q_idx]
        terminal = np.concatenate(
            [
                q[0] - self.scenario.start.coords,
                np.maximum(0.0, np.abs(q[-1] - self.goal) - self.goal_tolerance),
            ]
        )
        bounds = np.maximum(0.0, self.lower - vec) + np.maximum(0.0, vec - self.upper)
        return ResidualReport(
            {
                "terminal": terminal,
                "dynamics": fam["dynamics"][0],
                "bounds": bounds,
                "manipulator_cone": np.maximum(0.0, -fam["manipulator_cone"][0]),
                "distance": np.maximum(0.0, -fam["distance"][0]),
                "environment_cone": np.maximum(0.0, -fam["environment_cone"][0]),
                "slip": np.maximum(0.0, -fam["slip"][0]),
                "complementarity": np.abs(fam["complementarity"][0]),
                "balance": fam["balance"][0],
            }
        )

    def _evaluate(self, x: ArrayLike) -> dict[str, tuple[FloatArray, SparseMatrix]]:
        vec = np.asarray(x, dtype=float)
        key = vec.tobytes()
        if self._cache.get("key") != key:
            self._cache["key"] = key
            self._cache["families"] = self._compute(vec)
        return self._cache["families"]  # type:ignore[no-any-return]

    def _compute(self, x: FloatArray) -> dict[str, tuple[FloatArray, SparseMatrix]]:
        lay = self.layout
        scenario = self.scenario
        dim, nq, d = lay.dim, lay.nq, lay.d
        S = lay.slots
        st = lay.slot_steps
        n = lay.size

        Q = x[lay.q_idx]
        V = x[lay.v_idx]
        U = x[lay.u_idx]
        Z = x[lay.z_idx]
        rot_t = rotation_matrices(Q[:, dim:])
        drot_t = rotation_matrix_derivatives(Q[:, dim:])

        # Per-slot kinematics
        y = self.slot_points
        ybar = y - scenario.com
        R = rot_t[st]
        dR = drot_t[st]
        world = np.einsum("sde,se->sd", R, y) + Q[st, :dim]
        g, grad = scenario.grid.evaluate(world.reshape(-1, dim), gradient=True)
        assert grad is not None
        dg_drot = np.einsum("sd,srde,se->sr", grad, dR, y)
        dg_dq = np.concatenate([grad, dg_drot], axis=1)
        r = np.einsum("sde,se->sd", R, ybar)
        dr = np.einsum("srde,se->srd", dR, ybar)
        tg = self.slot_tangents
        vlin = V[st, :dim]
        vrot = V[st, dim:]
        if dim == 2:
            w = vrot[:, 0]
            rxt = r[:, None, 0] * tg[:, :, 1] - r[:, None, 1] * tg[:, :, 0]
            slip = np.einsum("sjd,sd->sj", tg, vlin) + w[:, None] * rxt
            dslip_dvrot = rxt[:, :, None]
            drxt = dr[:, 0, None, 0] * tg[:, :, 1] - dr[:, 0, None, 1] * tg[:, :, 0]
            dslip_drot = (w[:, None] * drxt)[:, :, None]
        else:
            E = euler_rate_matrices(Q[st, dim:])
            dE = euler_rate_matrix_derivatives(Q[st, dim:])
            omega = np.einsum("sab,sb->sa", E, vrot)
            rxt3 = np.cross(r[:, None, :], tg)
            slip = np.einsum("sjd,sd->sj", tg, vlin) + np.einsum("sjc,sc->sj", rxt3, omega)
            dslip_dvrot = np.einsum("sjc,scb->sjb", rxt3, E)
            domega = np.einsum("skab,sb->ska", dE, vrot)
            drxt3 = np.cross(dr[:, :, None, :], tg[:, None, :, :])
            dslip_drot = np.einsum("sjc,skc->sjk", rxt3, domega) + np.einsum("skjc,sc->sjk", drxt3, omega)
        slip = slip.reshape(S, d)
        dslip_dvlin = tg

        zN = Z[:, 0]
        zD = Z[:, 1 : 1 + d]
        gam = Z[:, 1 + d]
        mu = scenario.mu_env
        cone_coeff = np.concatenate([[mu], -np.ones(d), [0.0]])
        cone = mu * zN - zD.sum(axis=1)

        slot_rows = np.arange(S)[:, None]
        q_cols = lay.q_idx[st]
        rot_cols = lay.q_idx[st, dim:]
        vlin_cols = lay.v_idx[st, :dim]
        vrot_cols = lay.v_idx[st, dim:]
        out: dict[str, tuple[FloatArray, SparseMatrix]] = {}

        # dynamics
        dyn = (Q[:-1] - Q[1:] + V[1:] * scenario.dt).ravel()
        jac = _Triplets(lay.steps * nq, n)
        rows = np.arange(lay.steps * nq).reshape(-1, 1)
        jac.add(rows, lay.q_idx[:-1].reshape(-1, 1), np.ones((rows.shape[0], 1, 1)))
        jac.add(rows, lay.q_idx[1:].reshape(-1, 1), -np.ones((rows.shape[0], 1, 1)))
        jac.add(rows, lay.v_idx[1:].reshape(-1, 1), np.full((rows.shape[0], 1, 1), scenario.dt))
        out["dynamics"] = (dyn, jac.tocsr())

        # balance
        out["balance"] = self._balance(Q, V, U, Z, rot_t, drot_t, r, dr)

        # manipulator cone
        mu_m = scenario.mu_mnp
        manip = (mu_m * U[..., 0] - U[..., 1:].sum(axis=-1)).ravel()
        jac = _Triplets(manip.shape[0], n)
        if manip.size:
            coeff = np.concatenate([[mu_m], -np.ones(d)])
            jac.add(np.arange(manip.shape[0])[:, None], lay.u_idx.reshape(-1, lay.nu), np.broadcast_to(coeff, (manip.shape[0], 1, lay.nu)))
        out["manipulator_cone"] = (manip, jac.tocsr())

        # distance
        jac = _Triplets(S, n)
        jac.add(slot_rows, q_cols, dg_dq[:, None, :])
        out["distance"] = (g, jac.tocsr())

        # environment cone
        jac = _Triplets(S, n)
        jac.add(slot_rows, lay.z_idx, np.broadcast_to(cone_coeff, (S, 1, lay.nz)))
        out["environment_cone"] = (cone, jac.tocsr())

        # slip slack
        slip_rows = np.arange(S * d).reshape(S, d)
        jac = _Triplets(S * d, n)
        jac.add(slip_rows, lay.z_idx[:, 1 + d : 2 + d], np.ones((S, d, 1)))
        jac.add(slip_rows, vlin_cols, dslip_dvlin)
        jac.add(slip_rows, vrot_cols, dslip_dvrot)
        jac.add(slip_rows, rot_cols, dslip_drot)
        out["slip"] = ((gam[:, None] + slip).ravel(), jac.tocsr())

        # complementarity products
        width = 2 + d
        base = np.arange(S) * width
        slack = gam[:, None] + slip
        products = np.concatenate([(zN * g)[:, None], (cone * gam)[:, None], slack * zD], axis=1).ravel()
        jac = _Triplets(S * width, n)
        row0 = base[:, None]
        jac.add(row0, lay.z_idx[:, :1], g[:, None, None])
        jac.add(row0, q_cols, (zN[:, None] * dg_dq)[:, None, :])
        row1 = (base + 1)[:, None]
        gamma_unit = np.zeros(lay.nz)
        gamma_unit[1 + d] = 1.0
        jac.add(row1, lay.z_idx, (gam[:, None] * cone_coeff + cone[:, None] * gamma_unit)[:, None, :])
        rows_j = base[:, None] + 2 + np.arange(d)
        jac.add(rows_j, lay.z_idx[:, 1 : 1 + d], np.eye(d)[None, :, :] * slack[:, :, None])
        jac.add(rows_j, lay.z_idx[:, 1 + d : 2 + d], zD[:, :, None])
        jac.add(rows_j, vlin_cols, zD[:, :, None] * dslip_dvlin)
        jac.add(rows_j, vrot_cols, zD[:, :, None] * dslip_dvrot)
        jac.add(rows_j, rot_cols, zD[:, :, None] * dslip_drot)
        out["complementarity"] = (products, jac.tocsr())
        return out

    def _balance(
        self,
        Q: FloatArray,
        V: FloatArray,
        U: FloatArray,
        Z: FloatArray,
        rot_t: FloatArray,
        drot_t: FloatArray,
        r: FloatArray,
        dr: FloatArray,
    ) -> tuple[FloatArray, SparseMatrix]:
        lay = self.layout
        scenario = self.scenario
        dim, nq, nr, d = lay.dim, lay.nq, lay.nr, lay.d
        n_steps = lay.steps + 1
        st = lay.slot_steps
        force_rows = np.arange(n_steps)[:, None] * nq + np.arange(dim)
        torque_rows = np.arange(n_steps)[:, None] * nq + dim + np.arange(nr)
        rot_cols = lay.q_idx[:, dim:]
        jac = _Triplets(n_steps * nq, lay.size)

        force = np.tile(scenario.mass * gravity_vector(dim, scenario.gravity), (n_steps, 1))
        torque = np.zeros((n_steps, nr))

        for i, (point, basis) in enumerate(zip(self.manipulator_points, self.manipulator_bases, strict=True)):
            arm = point - scenario.com
            f_obj = U[:, i, :] @ basis
            f_world = np.einsum("tde,te->td", rot_t, f_obj)
            r_arm = rot_t @ arm
            force += f_world
            torque += _cross(r_arm, f_world)
            rb = np.einsum("tde,ke->tkd", rot_t, basis)
            jac.add(force_rows, lay.u_idx[:, i, :], rb.transpose(0, 2, 1))
            jac.add(torque_rows, lay.u_idx[:, i, :], _cross(r_arm[:, None, :], rb).transpose(0, 2, 1))
            drf = np.einsum("trde,te->trd", drot_t, f_obj)
            dra = np.einsum("trde,e->trd", drot_t, arm)
            jac.add(force_rows, rot_cols, drf.transpose(0, 2, 1))
            dtorque = _cross(dra, f_world[:, None, :]) + _cross(r_arm[:, None, :], drf)
            jac.add(torque_rows, rot_cols, dtorque.transpose(0, 2, 1))

        if lay.slots:
            zN = Z[:, 0]
            zD = Z[:, 1 : 1 + d]
            nrm = self.slot_normals
            tg = self.slot_tangents
            f_slot = zN[:, None] * nrm + np.einsum("sj,sjd->sd", zD, tg)
            np.add.at(force, st, f_slot)
            np.add.at(torque, st, _cross(r, f_slot))
            jac.add(force_rows[st], lay.z_idx[:, :1], nrm[:, :, None])
            jac.add(force_rows[st], lay.z_idx[:, 1 : 1 + d], tg.transpose(0, 2, 1))
            jac.add(torque_rows[st], lay.z_idx[:, :1], _cross(r, nrm)[:, :, None])
            jac.add(torque_rows[st], lay.z_idx[:, 1 : 1 + d], _cross(r[:, None, :], tg).transpose(0, 2, 1))
            jac.add(torque_rows[st], lay.q_idx[st, dim:], _cross(dr, f_slot[:, None, :]).transpose(0, 2, 1))

        if self.mode == BalanceMode.QUASIDYNAMIC:
            inertia = _rotational_inertia(scenario)
            force -= scenario.mass * V[:, :dim] / scenario.dt
            torque -= V[:, dim:] @ inertia.T / scenario.dt
            jac.add(force_rows, lay.v_idx[:, :dim], np.broadcast_to(-scenario.mass / scenario.dt * np.eye(dim), (n_steps, dim, dim)))
            jac.add(torque_rows, lay.v_idx[:, dim:], np.broadcast_to(-inertia / scenario.dt, (n_steps, nr, nr)))

        values = np.concatenate([force, torque], axis=1).ravel()
        return values, jac.tocsr()


def _rotational_inertia(scenario: Scenario) -> FloatArray:
    if scenario.inertia is None:
        raise ConfigurationError(f"Scenario[{scenario.name}] has no rotational inertia; quasidynamic balance needs one.")
    nr = rotation_size(scenario.dim)
    return np.asarray(scenario.inertia, dtype=float).reshape(nr, nr)


def default_normal_force(scenario: Scenario, count: int) -> float:
    """Warm-start normal force for a new index point: the object's weight shared evenly."""
    return scenario.mass * scenario.gravity / max(count, 1)


def assemble(
    scenario: Scenario,
    index_set: IndexSet,
    trajectory: TrajectoryVars,
    forces: ForceVars | None = None,
    *,
    mode: BalanceMode | str = BalanceMode.QUASISTATIC,
    weights: ObjectiveWeights | None = None,
    goal_tol_pos: float = 1e-3,
    goal_tol_rot: float = 1e-2,
    sigma: float = 0.0,
) -> MpccProblem:
    dim = scenario.dim
    nq = config_size(dim)
    d = scenario.cone_directions
    validate_cone_size(dim, d)
    mode = BalanceMode(mode)
    steps = scenario.steps
    if len(index_set) != steps + 1:
        raise ConfigurationError(f"Index set has {len(index_set)} steps but Scenario[{scenario.name}] has {steps + 1}.")
    if trajectory.q.shape != (steps + 1, nq) or trajectory.v.shape != (steps + 1, nq):
        raise ConfigurationError(f"Trajectory shapes {trajectory.q.shape}/{trajectory.v.shape} do not match {steps + 1} steps of size {nq}.")
    if trajectory.u.shape != (steps + 1, len(scenario.manipulators), 1 + d):
        raise ConfigurationError(f"Manipulator force shape {trajectory.u.shape} does not match the scenario.")
    if mode == BalanceMode.QUASIDYNAMIC:
        _rotational_inertia(scenario)
    for t in range(steps + 1):
        indices = index_set.indices(t)
        if indices.size and (indices.min() < 0 or indices.max() >= len(scenario.cloud)):
            raise ConfigurationError(f"Index set at Step[{t}] references points outside the {len(scenario.cloud)}-point cloud.")

    layout = VariableLayout(dim=dim, steps=steps, manipulators=len(scenario.manipulators), d=d, counts=tuple(index_set.counts))
    st = layout.slot_steps
    slot_indices = np.concatenate([index_set.indices(t) for t in range(steps + 1)]).astype(np.intp)
    slot_points = scenario.cloud.points[slot_indices].reshape(-1, dim)

    # Frames at the assembly trajectory
    rot = rotation_matrices(trajectory.q[:, dim:])
    world = np.einsum("sde,se->sd", rot[st], slot_points) + trajectory.q[st, :dim]
    if layout.slots:
        normals, degenerate = surface_normals(scenario.grid, world)
        if np.any(degenerate):
            logger.warning("Zero SDF gradient at %s index points; using the up-axis as contact normal.", int(np.sum(degenerate)))
        tangents = np.stack([tangent_basis(n, d) for n in normals])
    else:
        normals = np.zeros((0, dim))
        tangents = np.zeros((0, d, dim))

    slot_forces = np.zeros((layout.slots, layout.nz))
    for t in range(steps + 1):
        for s, point in zip(layout.slot_range(t), index_set[t], strict=True):
            warm = forces.get(t, point.index) if forces is not None else None
            if warm is not None and warm.shape == (layout.nz,):
                slot_forces[s] = warm
            else:
                slot_forces[s, 0] = default_normal_force(scenario, layout.counts[t])

    goal = unwrap_goal(scenario.start.coords, scenario.goal.coords)
    tolerance = np.concatenate([np.full(dim, goal_tol_pos), np.full(nq - dim, goal_tol_rot)])
    lower = np.full(layout.size, -np.inf)
    upper = np.full(layout.size, np.inf)
    bounds = scenario.bounds
    lower[layout.q_idx] = bounds.q_lower
    upper[layout.q_idx] = bounds.q_upper
    lower[layout.q_idx[0]] = scenario.start.coords
    upper[layout.q_idx[0]] = scenario.start.coords
    lower[layout.q_idx[-1]] = np.maximum(bounds.q_lower, goal - tolerance)
    upper[layout.q_idx[-1]] = np.minimum(bounds.q_upper, goal + tolerance)
    if np.any(lower[layout.q_idx[-1]] > upper[layout.q_idx[-1]]):
        raise ConfigurationError(f"Goal of Scenario[{scenario.name}] lies outside the configuration bounds.")
    lower[layout.v_idx] = bounds.v_lower
    upper[layout.v_idx] = bounds.v_upper
    lower[layout.u_idx] = 0.0
    upper[layout.u_idx] = bounds.force_upper
    lower[layout.z_idx] = 0.0

    x0 = np.clip(layout.pack(trajectory, slot_forces), lower, upper)
    manipulator_points = np.array([m.point for m in scenario.manipulators], dtype=float).reshape(-1, dim)
    manipulator_bases = np.array([m.basis(d) for m in scenario.manipulators], dtype=float).reshape(-1, 1 + d, dim)
    problem = MpccProblem(
        scenario=scenario,
        index_set=index_set,
        layout=layout,
        mode=mode,
        weights=weights or ObjectiveWeights(),
        goal=goal,
        goal_tolerance=tolerance,
        lower=lower,
        upper=upper,
        x0=x0,
        slot_points=slot_points,
        slot_normals=normals,
        slot_tangents=tangents,
        manipulator_points=manipulator_points,
        manipulator_bases=manipulator_bases,
        sigma=sigma,
    )
    logger.debug(
        "Assembled MpccProblem for Scenario[%s] with %s variables and %s complementarity rows.",
        scenario.name,
        layout.size,
        problem.complementarity_rows,
    )
    return problem


def objective(problem: MpccProblem, x: ArrayLike) -> float:
    value, _grad = problem.objective(x)
    return value


def relax(problem: MpccProblem, sigma: float) -> MpccProblem:
    """Replace every complementarity product ``a b = 0`` with ``a b <= sigma``."""
    if sigma < 0:
        raise ConfigurationError(f"Relaxation parameter must be nonnegative, got {sigma}.")
    return replace(problem, sigma=float(sigma), _cache={})


def residuals(problem: MpccProblem, x: ArrayLike) -> ResidualReport:
    return problem.residuals(x)


def complementarity_census(counts: Sequence[int], d: int) -> int:
    """Complementarity rows for the given per-step index counts: distance, cone-slack and ``d`` slip rows per point."""
    return int(sum(counts)) * (2 + d)


def vanilla_census(scenario: Scenario) -> int:
    return complementarity_census([len(scenario.cloud)] * (scenario.steps + 1), scenario.cone_directions)
