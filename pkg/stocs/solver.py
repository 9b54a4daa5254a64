"""
The outer exchange loop.

Each outer iteration asks the oracle for new index points, assembles the MPCC over the
instantiated set, relaxes its complementarity rows, takes a bounded number of inner
augmented-Lagrangian iterations and accepts a fraction of the resulting step by
backtracking on the merit function.
"""

from collections.abc import Mapping
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Self
import logging
import time

from numpy.typing import ArrayLike
import numpy as np

from . import settings as pkgsettings
from . import signals
from .exceptions import ConfigurationError, SolverFailure
from .geometry import Configuration, FloatArray, cloud_distances
from .nlp import evaluate, nlp_step
from .oracles import IndexPointOracle, IndexSet, OracleConfig, get_oracle
from .program import (
    ForceVars,
    MpccProblem,
    ObjectiveWeights,
    RelaxationSchedule,
    TrajectoryVars,
    assemble,
    complementarity_census,
)
from .scenarios import Scenario
from .serializers import StocsConfigSerializer
from .states import BalanceMode, ConvergenceCondition, ConvergenceRecord, SolveStatus
from .utils import unwrap_goal

logger = logging.getLogger(__name__)

STALL_LIMIT = 2


@dataclass(frozen=True)
class StocsConfig:
    oracle: str
    mode: BalanceMode
    eps_x: float
    eps_gap: float
    eps_s: float
    eps_p: float
    max_outer: int
    max_line_search: int
    inner_iters: int
    merit_penalty: float
    line_search_shrink: float
    sigma0: float
    sigma_decay: float
    sigma_min: float
    penalty0: float
    weight_u: float
    weight_v: float
    weight_z: float
    goal_tol_pos: float
    goal_tol_rot: float
    d_max: float
    dedup: float
    time_smoothing: int
    disturbances: tuple[float, ...]

    @classmethod
    def defaults(cls) -> dict[str, Any]:
        return {
            "oracle": pkgsettings.STOCS_DEFAULT_ORACLE,
            **pkgsettings.STOCS_SOLVER_DEFAULTS,
            **pkgsettings.STOCS_ORACLE_DEFAULTS,
        }

    @classmethod
    def build(cls, *layers: Mapping[str, Any] | None) -> Self:
        """
        Merge ``STOCS_SOLVER_DEFAULTS`` / ``STOCS_ORACLE_DEFAULTS`` with each layer in turn,
        later layers winning. Keys whose value is ``None`` are ignored.

        :raises rest_framework.serializers.ValidationError: for invalid values.
        """
        merged = cls.defaults()
        for layer in layers:
            if not layer:
                continue
            serializer = StocsConfigSerializer(data={k: v for k, v in layer.items() if v is not None})
            serializer.is_valid(raise_exception=True)
            merged.update(serializer.validated_data)
        names = {f.name for f in fields(cls)}
        merged = {k: v for k, v in merged.items() if k in names}
        merged["mode"] = BalanceMode(merged["mode"])
        merged["disturbances"] = tuple(float(s) for s in merged["disturbances"])
        return cls(**merged)

    @property
    def oracle_config(self) -> OracleConfig:
        return OracleConfig(
            d_max=self.d_max,
            dedup=self.dedup,
            time_smoothing=self.time_smoothing,
            disturbances=self.disturbances,
        )

    @property
    def schedule(self) -> RelaxationSchedule:
        return RelaxationSchedule(sigma0=self.sigma0, decay=self.sigma_decay, sigma_min=self.sigma_min)

    @property
    def weights(self) -> ObjectiveWeights:
        return ObjectiveWeights(u=self.weight_u, v=self.weight_v, z=self.weight_z)

    def as_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["mode"] = self.mode.value
        data["disturbances"] = list(self.disturbances)
        return data


@dataclass(frozen=True)
class IterationStats:
    iteration: int
    index_counts: list[int]
    mean_index_points: float
    points_added: int
    merit_before: float
    merit_after: float
    alpha: float
    sigma: float
    residuals: dict[str, float]
    inner_no_progress: bool
    wall_time: float

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ConvergenceReport:
    records: dict[str, ConvergenceRecord]

    @property
    def passed(self) -> bool:
        return all(record["passed"] for record in self.records.values())

    @property
    def failed(self) -> list[str]:
        return [name for name, record in self.records.items() if not record["passed"]]


@dataclass(frozen=True, eq=False)
class StocsResult:
    status: SolveStatus
    trajectory: TrajectoryVars
    forces: ForceVars
    index_set: IndexSet
    stats: list[IterationStats] = field(default_factory=list)
    convergence: dict[str, ConvergenceRecord] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == SolveStatus.CONVERGED

    @property
    def outer_iterations(self) -> int:
        return len(self.stats)

    @property
    def mean_index_points(self) -> float:
        return self.index_set.mean_size

    @property
    def complementarity_rows(self) -> int:
        return complementarity_census(self.index_set.counts, self.forces.values[0].shape[1] - 2 if self.forces.values else 0)


@dataclass(frozen=True)
class LineSearchResult:
    alpha: float
    x: FloatArray
    merit: float
    trials: int

    @property
    def no_progress(self) -> bool:
        return self.alpha == 0.0


def initialize_trajectory(
    start: Configuration | ArrayLike,
    goal: Configuration | ArrayLike,
    steps: int,
    dt: float,
    manipulators: int = 0,
    d: int = 2,
) -> TrajectoryVars:
    """Straight-line interpolation from ``start`` to ``goal``, angles along the shorter arc."""
    q0 = start.coords if isinstance(start, Configuration) else np.asarray(start, dtype=float).reshape(-1)
    q1 = goal.coords if isinstance(goal, Configuration) else np.asarray(goal, dtype=float).reshape(-1)
    if q0.shape != q1.shape:
        raise ConfigurationError(f"Start and goal sizes differ: {q0.shape[0]} and {q1.shape[0]}.")
    q1 = unwrap_goal(q0, q1)
    delta = q1 - q0
    fractions = np.arange(steps + 1, dtype=float)[:, None] / steps
    q = q0 + fractions * delta
    q[0] = q0
    q[-1] = q1
    v = np.tile(delta / (steps * dt), (steps + 1, 1))
    u = np.zeros((steps + 1, manipulators, 1 + d))
    return TrajectoryVars(q, v, u)


def penetration(scenario: Scenario, q: ArrayLike) -> FloatArray:
    """``|min(0, g*(q_t))|`` per time step, over the full cloud."""
    configs = np.atleast_2d(np.asarray(q, dtype=float))
    return np.array([max(0.0, -float(np.min(cloud_distances(qt, scenario.cloud, scenario.grid)))) for qt in configs])


def merit(problem: MpccProblem, x: ArrayLike, penalty: float) -> float:
    vec = np.asarray(x, dtype=float)
    value, _grad = problem.objective(vec)
    if penalty == 0:
        return value
    violation = problem.residuals(vec).l1() + float(np.sum(penetration(problem.scenario, vec[problem.layout.q_idx])))
    return value + penalty * violation


def line_search(
    problem: MpccProblem,
    x: ArrayLike,
    direction: ArrayLike,
    penalty: float,
    shrink: float = 0.5,
    max_trials: int = 20,
) -> LineSearchResult:
    """Backtrack ``alpha = 1, shrink, shrink**2, ...`` until the merit does not increase."""
    base = np.asarray(x, dtype=float)
    step = np.asarray(direction, dtype=float)
    reference = merit(problem, base, penalty)
    alpha = 1.0
    for trial in range(1, max_trials + 1):
        candidate = np.clip(base + alpha * step, problem.lower, problem.upper)
        value = merit(problem, candidate, penalty)
        if value <= reference:
            return LineSearchResult(alpha=alpha, x=candidate, merit=value, trials=trial)
        alpha *= shrink
    return LineSearchResult(alpha=0.0, x=base.copy(), merit=reference, trials=max_trials)


def converged(
    problem: MpccProblem,
    x: ArrayLike,
    alpha: float,
    direction: ArrayLike,
    config: StocsConfig,
    *,
    rejected_step: float = 0.0,
) -> ConvergenceReport:
    """
    Evaluate the step, complementarity, balance and penetration conditions at ``x``.

    When the inner solve discarded its move, ``rejected_step`` is that move's length and the
    step condition is judged on it, so an iterate that merely failed to move cannot pass.
    """
    vec = np.asarray(x, dtype=float)
    steps = problem.layout.steps
    fam = problem.family_values(vec)
    gap = float(np.sum(np.abs(fam["complementarity"][0])))
    balance = fam["balance"][0]
    depth = float(np.sum(penetration(problem.scenario, vec[problem.layout.q_idx])))
    step = max(alpha * float(np.linalg.norm(np.asarray(direction, dtype=float))), rejected_step)

    def record(value: float, limit: float, strict: bool = False) -> ConvergenceRecord:
        return {"value": value, "limit": limit, "passed": value < limit if strict else value <= limit}

    return ConvergenceReport(
        {
            ConvergenceCondition.STEP.value: record(step, config.eps_x * problem.n),
            ConvergenceCondition.COMPLEMENTARITY.value: record(gap, config.eps_gap * problem.complementarity_rows),
            ConvergenceCondition.BALANCE.value: record(float(np.max(np.abs(balance), initial=0.0)), config.eps_s * steps),
            ConvergenceCondition.PENETRATION.value: record(depth, config.eps_p * steps, strict=True),
        }
    )


class StocsSolver:
    def __init__(self, scenario: Scenario, config: StocsConfig | None = None) -> None:
        self.scenario = scenario
        self.config = config or StocsConfig.build(scenario.solver)
        self.oracle: IndexPointOracle = get_oracle(self.config.oracle, scenario.cloud, scenario.grid, self.config.oracle_config)
        self.schedule = self.config.schedule

    def metadata(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario.describe(),
            "objective": self.config.weights.as_dict(),
            "oracle": {"code": self.oracle.code, **self.config.oracle_config.as_dict()},
            "mode": self.config.mode.value,
            "config": self.config.as_dict(),
        }

    def assemble(self, index_set: IndexSet, trajectory: TrajectoryVars, forces: ForceVars | None, sigma: float) -> MpccProblem:
        return assemble(
            self.scenario,
            index_set,
            trajectory,
            forces,
            mode=self.config.mode,
            weights=self.config.weights,
            goal_tol_pos=self.config.goal_tol_pos,
            goal_tol_rot=self.config.goal_tol_rot,
            sigma=sigma,
        )

    def certify(self, report: ConvergenceReport, trajectory: TrajectoryVars, forces: ForceVars, index_set: IndexSet) -> ConvergenceReport:
        """Run the independent verifier on a candidate; its verdict is appended as the ``verified`` record."""
        from .verifier import VerifierTolerances, verify

        candidate = StocsResult(
            status=SolveStatus.CONVERGED,
            trajectory=trajectory,
            forces=forces,
            index_set=index_set,
            metadata={"config": self.config.as_dict()},
        )
        verdict = verify(self.scenario, candidate, VerifierTolerances.from_config(self.config), mode=self.config.mode)
        if not verdict.passed:
            logger.info("Candidate for Scenario[%s] rejected by the verifier: %s.", self.scenario.name, ", ".join(verdict.failed))
        record: ConvergenceRecord = {"value": float(len(verdict.failed)), "limit": 0.0, "passed": verdict.passed}
        return ConvergenceReport({**report.records, ConvergenceCondition.VERIFIED.value: record})

    def solve(self) -> StocsResult:
        scenario = self.scenario
        cfg = self.config
        trajectory = initialize_trajectory(
            scenario.start,
            scenario.goal,
            scenario.steps,
            scenario.dt,
            len(scenario.manipulators),
            scenario.cone_directions,
        )
        forces: ForceVars = ForceVars.empty(scenario.steps, scenario.cone_directions)
        index_set = IndexSet.empty(scenario.steps)
        stats: list[IterationStats] = []
        report = ConvergenceReport({})
        stalls = 0
        status = SolveStatus.NOT_CONVERGED
        message = f"Not converged after {cfg.max_outer} outer iterations."
        logger.info("Solving Scenario[%s] with Oracle[%s] in %s mode.", scenario.name, self.oracle.code, cfg.mode.value)

        for k in range(1, cfg.max_outer + 1):
            began = time.perf_counter()
            grown = self.oracle.update(trajectory.q, index_set, k)
            added = grown.total - index_set.total
            index_set = grown
            sigma = self.schedule.sigma(k)
            problem = self.assemble(index_set, trajectory, forces, sigma)
            x = problem.x0
            try:
                inner = nlp_step(problem, evaluate(problem, x, penalty=cfg.penalty0), max_iter=cfg.inner_iters, penalty0=cfg.penalty0)
            except SolverFailure as e:
                e.stats = stats
                e.result = StocsResult(
                    status=SolveStatus.ERROR,
                    trajectory=trajectory,
                    forces=forces,
                    index_set=index_set,
                    stats=stats,
                    metadata=self.metadata(),
                    message=str(e),
                )
                logger.error("Inner solve failed at Outer Iteration[%s]: %s", k, e)
                signals.solve_finished.send(sender=self.__class__, result=e.result)
                raise
            direction = inner.x - x
            searched = line_search(problem, x, direction, cfg.merit_penalty, cfg.line_search_shrink, cfg.max_line_search)
            trajectory, forces = problem.unpack(searched.x)
            report = converged(problem, searched.x, searched.alpha, direction, cfg, rejected_step=inner.rejected_step)
            if report.passed:
                report = self.certify(report, trajectory, forces, index_set)

            entry = IterationStats(
                iteration=k,
                index_counts=index_set.counts,
                mean_index_points=index_set.mean_size,
                points_added=added,
                merit_before=merit(problem, x, cfg.merit_penalty),
                merit_after=searched.merit,
                alpha=searched.alpha,
                sigma=sigma,
                residuals=problem.residuals(searched.x).norms,
                inner_no_progress=inner.no_progress,
                wall_time=time.perf_counter() - began,
            )
            stats.append(entry)
            logger.info(
                "Outer Iteration[%s]: mean index points %.2f, alpha %.3g, merit %.6g -> %.6g, sigma %.3g.",
                k,
                entry.mean_index_points,
                entry.alpha,
                entry.merit_before,
                entry.merit_after,
                sigma,
            )
            signals.outer_iteration_completed.send(sender=self.__class__, stats=entry)

            if report.passed:
                status = SolveStatus.CONVERGED
                message = f"Converged after {k} outer iterations."
                break
            stalls = stalls + 1 if searched.no_progress and added == 0 else 0
            if stalls >= STALL_LIMIT:
                message = f"Stalled at Outer Iteration[{k}]: no merit decrease and no new index points. Failing conditions: {', '.join(report.failed)}."
                break

        result = StocsResult(
            status=status,
            trajectory=trajectory,
            forces=forces,
            index_set=index_set,
            stats=stats,
            convergence=report.records,
            metadata=self.metadata(),
            message=message,
        )
        logger.info("Scenario[%s] finished with status %s: %s", scenario.name, status.value, message)
        signals.solve_finished.send(sender=self.__class__, result=result)
        return result


def solve(scenario: Scenario, config: StocsConfig | None = None) -> StocsResult:
    return StocsSolver(scenario, config).solve()
