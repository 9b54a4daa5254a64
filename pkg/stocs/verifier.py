"""
Solver-free audit of a trajectory against the full contact model.

Everything here is recomputed point by point from ``stocs.contact`` and ``stocs.geometry``;
nothing is taken from the assembled MPCC. Checks are pluggable through
``STOCS_VERIFIER_CHECKS``, each entry naming a class and its keyword arguments.
"""

from collections.abc import Generator, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Protocol
import logging

from django.utils.module_loading import import_string
from numpy.typing import ArrayLike
from scipy import optimize
import numpy as np

from . import settings as pkgsettings
from .contact import (
    ContactForce,
    ContactFrame,
    balance_residual,
    build_frame,
    cone_residual,
    contact_wrench,
    gravity_vector,
    mass_matrix,
    net_wrench,
    slip_velocity,
    tangent_basis,
)
from .exceptions import ConfigurationError
from .geometry import FloatArray, cloud_distances, config_size, pose_from_config, rotation_size
from .oracles import IndexSet
from .program import ForceVars, TrajectoryVars
from .scenarios import Scenario
from .solver import StocsConfig, StocsResult
from .states import BalanceMode
from .utils import configuration_error, unwrap_goal

logger = logging.getLogger(__name__)

# Slack for quantities that are enforced as exact bounds by the solver
BOUND_SLACK = 1e-9

type StepFrames = Sequence[Sequence[ContactFrame]]


@dataclass(frozen=True)
class VerifierTolerances:
    eps_gap: float
    eps_s: float
    eps_p: float
    dynamics: float
    goal_tol_pos: float
    goal_tol_rot: float

    @classmethod
    def from_config(cls, config: StocsConfig) -> "VerifierTolerances":
        return cls(
            eps_gap=config.eps_gap,
            eps_s=config.eps_s,
            eps_p=config.eps_p,
            dynamics=config.eps_p,
            goal_tol_pos=config.goal_tol_pos,
            goal_tol_rot=config.goal_tol_rot,
        )

    def halved(self) -> "VerifierTolerances":
        return VerifierTolerances(
            eps_gap=self.eps_gap / 2,
            eps_s=self.eps_s / 2,
            eps_p=self.eps_p / 2,
            dynamics=self.dynamics / 2,
            goal_tol_pos=self.goal_tol_pos / 2,
            goal_tol_rot=self.goal_tol_rot / 2,
        )


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    limit: float
    passed: bool
    per_step: list[float] = field(default_factory=list)
    detail: str = ""

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "value": self.value,
            "limit": self.limit,
            "passed": self.passed,
            "per_step": self.per_step,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class VerificationReport:
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed(self) -> list[str]:
        return [check.name for check in self.checks if not check.passed]

    def __getitem__(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def as_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "checks": [check.as_dict() for check in self.checks]}


# Recomputed quantities ---------------------------------------------------------------


def contact_frames(scenario: Scenario, trajectory: TrajectoryVars, index_set: IndexSet) -> list[list[ContactFrame]]:
    """Environment contact frames at the reported configurations."""
    frames: list[list[ContactFrame]] = []
    for t, points in enumerate(index_set):
        transform = pose_from_config(trajectory.q[t])
        frames.append([build_frame(scenario.grid, transform.apply(p.coords[None, :])[0], scenario.cone_directions) for p in points])
    return frames


def frames_from_normals(normals: Sequence[ArrayLike], d: int) -> list[ContactFrame]:
    """Frames for explicitly given world normals, e.g. the ones a solve assembled its problem with."""
    out = []
    for normal in normals:
        n = np.asarray(normal, dtype=float)
        out.append(ContactFrame(point=np.zeros_like(n), normal=n, tangents=tangent_basis(n, d)))
    return out


def penetration_depths(scenario: Scenario, q: ArrayLike) -> FloatArray:
    """Deepest penetration of the whole cloud per step, by exhaustive search."""
    return np.array([max(0.0, -float(np.min(cloud_distances(qt, scenario.cloud, scenario.grid)))) for qt in np.atleast_2d(q)])


def dynamics_residuals(scenario: Scenario, trajectory: TrajectoryVars) -> FloatArray:
    q, v = trajectory.q, trajectory.v
    return np.array([q[t] - q[t + 1] + v[t + 1] * scenario.dt for t in range(q.shape[0] - 1)]).reshape(-1, q.shape[1])


def _forces(forces: ForceVars, step: int) -> list[ContactForce]:
    return [ContactForce.from_components(row) for row in forces.values[step]]


def _manipulator_forces(trajectory: TrajectoryVars, step: int) -> list[ContactForce]:
    return [ContactForce.from_components(row, with_gamma=False) for row in trajectory.u[step]]


def balance_residuals(
    scenario: Scenario,
    trajectory: TrajectoryVars,
    forces: ForceVars,
    index_set: IndexSet,
    frames: StepFrames,
    mode: BalanceMode | str = BalanceMode.QUASISTATIC,
) -> FloatArray:
    mode = BalanceMode(mode)
    inertia = mass_matrix(scenario.dim, scenario.mass, scenario.inertia) if mode == BalanceMode.QUASIDYNAMIC else None
    out = []
    for t, points in enumerate(index_set):
        contacts = [(p.coords, frame, f) for p, frame, f in zip(points, frames[t], _forces(forces, t), strict=True)]
        w = net_wrench(
            trajectory.q[t],
            scenario.manipulators,
            _manipulator_forces(trajectory, t),
            contacts,
            scenario.mass,
            scenario.gravity,
            scenario.com,
        )
        vdot = trajectory.v[t] / scenario.dt
        out.append(balance_residual(w, mode, inertia, vdot))
    return np.array(out).reshape(len(index_set), config_size(scenario.dim))


def complementarity_products(
    scenario: Scenario,
    trajectory: TrajectoryVars,
    forces: ForceVars,
    index_set: IndexSet,
    frames: StepFrames,
) -> list[FloatArray]:
    """
    Per step, per contact: ``zN g``, ``(mu zN - sum zD) gamma`` and ``(gamma + slip_j) zD_j``,
    flattened in that order.
    """
    out = []
    for t, points in enumerate(index_set):
        rows: list[float] = []
        q, v = trajectory.q[t], trajectory.v[t]
        transform = pose_from_config(q)
        for p, frame, f in zip(points, frames[t], _forces(forces, t), strict=True):
            g = float(scenario.grid.evaluate(transform.apply(p.coords[None, :]))[0][0])
            slack = f.gamma + slip_velocity(q, v, p.coords, frame, scenario.com)
            rows.append(f.normal * g)
            rows.append(cone_residual(scenario.mu_env, f) * f.gamma)
            rows.extend((slack * f.tangential).tolist())
        out.append(np.asarray(rows, dtype=float))
    return out


# Checks -------------------------------------------------------------------------------


class VerificationContext:
    def __init__(
        self,
        scenario: Scenario,
        result: StocsResult,
        tolerances: VerifierTolerances,
        mode: BalanceMode,
        frames: StepFrames | None = None,
    ) -> None:
        self.scenario = scenario
        self.result = result
        self.tolerances = tolerances
        self.mode = mode
        self._frames = frames

    @property
    def trajectory(self) -> TrajectoryVars:
        return self.result.trajectory

    @property
    def forces(self) -> ForceVars:
        return self.result.forces

    @property
    def index_set(self) -> IndexSet:
        return self.result.index_set

    @property
    def steps(self) -> int:
        return self.scenario.steps

    @cached_property
    def frames(self) -> StepFrames:
        if self._frames is not None:
            return self._frames
        return contact_frames(self.scenario, self.trajectory, self.index_set)


class VerifierCheck(Protocol):
    name: str

    def check(self, context: VerificationContext) -> CheckResult: ...


class PenetrationCheck:
    """Full-cloud penetration summed over steps, strictly below ``eps_p * T``."""

    name = "penetration"

    def check(self, context: VerificationContext) -> CheckResult:
        depths = penetration_depths(context.scenario, context.trajectory.q)
        total = float(np.sum(depths))
        limit = context.tolerances.eps_p * context.steps
        return CheckResult(self.name, total, limit, total < limit, depths.tolist(), f"deepest {float(np.max(depths)):.3g} m")


class DynamicsCheck:
    name = "dynamics"

    def check(self, context: VerificationContext) -> CheckResult:
        res = dynamics_residuals(context.scenario, context.trajectory)
        per_step = np.max(np.abs(res), axis=1, initial=0.0)
        worst = float(np.max(per_step, initial=0.0))
        return CheckResult(self.name, worst, context.tolerances.dynamics, worst <= context.tolerances.dynamics, per_step.tolist())


class TerminalCheck:
    name = "terminal"

    def check(self, context: VerificationContext) -> CheckResult:
        scenario = context.scenario
        q = context.trajectory.q
        start_error = float(np.max(np.abs(configuration_error(q[0], scenario.start.coords))))
        goal = unwrap_goal(scenario.start.coords, scenario.goal.coords)
        goal_error = np.abs(configuration_error(q[-1], goal))
        dim = scenario.dim
        excess = np.concatenate(
            [
                goal_error[:dim] - context.tolerances.goal_tol_pos,
                goal_error[dim:] - context.tolerances.goal_tol_rot,
            ]
        )
        worst = max(start_error, float(np.max(excess)), 0.0)
        return CheckResult(
            self.name,
            worst,
            BOUND_SLACK,
            worst <= BOUND_SLACK,
            [start_error, float(np.max(goal_error))],
            f"start error {start_error:.3g}, goal error {float(np.max(goal_error)):.3g}",
        )


class ConeCheck:
    """Friction cones of every manipulator and environment contact, slip slacks and force signs."""

    name = "cone"

    def check(self, context: VerificationContext) -> CheckResult:
        scenario = context.scenario
        per_step = []
        for t, points in enumerate(context.index_set):
            worst = 0.0
            q, v = context.trajectory.q[t], context.trajectory.v[t]
            for u in _manipulator_forces(context.trajectory, t):
                worst = max(worst, -cone_residual(scenario.mu_mnp, u), -u.normal, float(np.max(-u.tangential, initial=0.0)))
            for p, frame, f in zip(points, context.frames[t], _forces(context.forces, t), strict=True):
                slack = f.gamma + slip_velocity(q, v, p.coords, frame, scenario.com)
                worst = max(
                    worst,
                    -cone_residual(scenario.mu_env, f),
                    float(np.max(-slack)),
                    -f.normal,
                    -f.gamma,
                    float(np.max(-f.tangential, initial=0.0)),
                )
            per_step.append(worst)
        value = max(per_step, default=0.0)
        limit = context.tolerances.eps_gap
        return CheckResult(self.name, value, limit, value <= limit, per_step)


class ComplementarityCheck:
    name = "complementarity"

    def check(self, context: VerificationContext) -> CheckResult:
        products = complementarity_products(context.scenario, context.trajectory, context.forces, context.index_set, context.frames)
        per_step = [float(np.sum(np.abs(p))) for p in products]
        rows = sum(p.shape[0] for p in products)
        total = float(sum(per_step))
        limit = context.tolerances.eps_gap * rows
        return CheckResult(self.name, total, limit, total <= limit, per_step, f"{rows} product rows")


class BalanceCheck:
    name = "balance"

    def check(self, context: VerificationContext) -> CheckResult:
        res = balance_residuals(context.scenario, context.trajectory, context.forces, context.index_set, context.frames, context.mode)
        per_step = np.max(np.abs(res), axis=1)
        worst = float(np.max(per_step))
        limit = context.tolerances.eps_s * context.steps
        return CheckResult(self.name, worst, limit, worst <= limit, per_step.tolist(), f"{context.mode.value} balance")


def get_enabled_checks() -> Generator[VerifierCheck, None, None]:
    for config in pkgsettings.STOCS_VERIFIER_CHECKS:
        CheckClass: type[VerifierCheck] = import_string(config["check"])
        yield CheckClass(**config.get("kwargs", {}))


def _validate_layout(scenario: Scenario, result: StocsResult) -> None:
    steps = scenario.steps + 1
    nq = config_size(scenario.dim)
    d = scenario.cone_directions
    traj = result.trajectory
    if traj.q.shape != (steps, nq) or traj.v.shape != (steps, nq):
        raise ConfigurationError(f"Result trajectory shapes {traj.q.shape}/{traj.v.shape} do not match Scenario[{scenario.name}].")
    if traj.u.shape != (steps, len(scenario.manipulators), 1 + d):
        raise ConfigurationError(f"Result manipulator forces have shape {traj.u.shape}; expected {(steps, len(scenario.manipulators), 1 + d)}.")
    if len(result.index_set) != steps or len(result.forces.values) != steps:
        raise ConfigurationError(f"Result covers {len(result.index_set)} steps; Scenario[{scenario.name}] has {steps}.")
    for t in range(steps):
        if result.forces.values[t].shape != (result.index_set.counts[t], d + 2):
            raise ConfigurationError(f"Contact forces at Step[{t}] do not match the {result.index_set.counts[t]} index points.")
        if np.any(result.index_set.indices(t) >= len(scenario.cloud)):
            raise ConfigurationError(f"Index set at Step[{t}] references points outside the cloud.")


def verify(
    scenario: Scenario,
    result: StocsResult,
    tolerances: VerifierTolerances | None = None,
    *,
    strict: bool = False,
    mode: BalanceMode | str | None = None,
    frames: StepFrames | None = None,
) -> VerificationReport:
    """
    Run every enabled check. Tolerances default to the ones the result was solved with,
    and ``strict`` halves them.

    :raises ConfigurationError: when the result does not fit the scenario.
    """
    _validate_layout(scenario, result)
    recorded: Mapping[str, Any] = result.metadata.get("config", {}) or {}
    if tolerances is None:
        tolerances = VerifierTolerances.from_config(StocsConfig.build(scenario.solver, recorded))
    if strict:
        tolerances = tolerances.halved()
    mode = BalanceMode(mode or recorded.get("mode") or BalanceMode.QUASISTATIC)
    context = VerificationContext(scenario, result, tolerances, mode, frames)
    checks = [check.check(context) for check in get_enabled_checks()]
    for check in checks:
        if not check.passed:
            logger.info("Verification of Scenario[%s] failed Check[%s]: %.6g exceeds %.6g.", scenario.name, check.name, check.value, check.limit)
    return VerificationReport(checks)


# Static feasibility ----------------------------------------------------------------------


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    manipulator_forces: FloatArray
    contact_forces: FloatArray
    message: str = ""


def static_feasibility_oracle(
    q: ArrayLike,
    scenario: Scenario,
    contacts: Sequence[int],
    frames: Sequence[ContactFrame] | None = None,
) -> FeasibilityResult:
    """
    Decide whether the object can rest at ``q`` on the given cloud points, helped by the
    manipulators, by solving a linear program over nonnegative cone components. The
    witness minimizes the total force.
    """
    coords = np.asarray(q, dtype=float).reshape(-1)
    d = scenario.cone_directions
    dim = scenario.dim
    nw = dim + rotation_size(dim)
    transform = pose_from_config(coords)
    points = scenario.cloud.points[np.asarray(contacts, dtype=np.intp)].reshape(-1, dim)
    if frames is None:
        frames = [build_frame(scenario.grid, transform.apply(y[None, :])[0], d) for y in points]
    manipulator_frames = [m.frame(coords, d) for m in scenario.manipulators]

    columns = []
    cone_rows = []
    n_vars = (len(manipulator_frames) + len(points)) * (1 + d)
    offset = 0
    friction = [scenario.mu_mnp] * len(manipulator_frames) + [scenario.mu_env] * len(points)
    anchors = [m.point for m in scenario.manipulators] + list(points)
    for mu, y, frame in zip(friction, anchors, list(manipulator_frames) + list(frames), strict=True):
        for k in range(1 + d):
            unit = np.zeros(1 + d)
            unit[k] = 1.0
            columns.append(contact_wrench(coords, y, ContactForce.from_components(unit, with_gamma=False), frame, scenario.com).vector)
        row = np.zeros(n_vars)
        row[offset] = -mu
        row[offset + 1 : offset + 1 + d] = 1.0
        cone_rows.append(row)
        offset += 1 + d

    gravity = np.concatenate([scenario.mass * gravity_vector(dim, scenario.gravity), np.zeros(nw - dim)])
    if n_vars == 0:
        feasible = bool(np.allclose(gravity, 0.0))
        return FeasibilityResult(feasible, np.zeros((0, 1 + d)), np.zeros((0, 1 + d)), "no contacts")

    upper = [scenario.bounds.force_upper if i < len(manipulator_frames) * (1 + d) else None for i in range(n_vars)]
    res = optimize.linprog(
        c=np.ones(n_vars),
        A_ub=np.array(cone_rows),
        b_ub=np.zeros(len(cone_rows)),
        A_eq=np.array(columns).T,
        b_eq=-gravity,
        bounds=[(0.0, None if u is None or not np.isfinite(u) else u) for u in upper],
        method="highs",
    )
    if res.status != 0:
        return FeasibilityResult(False, np.zeros((len(manipulator_frames), 1 + d)), np.zeros((len(points), 1 + d)), res.message)
    split = len(manipulator_frames) * (1 + d)
    return FeasibilityResult(
        True,
        res.x[:split].reshape(-1, 1 + d),
        res.x[split:].reshape(-1, 1 + d),
        res.message,
    )
