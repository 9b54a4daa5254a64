"""
Bounded-iteration augmented-Lagrangian stepper.

Each major iteration minimizes the Powell-Hestenes-Rockafellar augmented Lagrangian over the
variable box with L-BFGS-B, then updates the multipliers. The penalty grows tenfold whenever
the constraint violation fails to shrink by a factor of four.
"""

from dataclasses import dataclass, replace
from typing import Protocol
import logging

from numpy.typing import ArrayLike
from scipy import optimize, sparse
import numpy as np

from .exceptions import SolverFailure
from .geometry import FloatArray

logger = logging.getLogger(__name__)

PENALTY_GROWTH = 10.0
PENALTY_MAX = 1e8
VIOLATION_DECREASE = 0.25
# Relative slack on the no-progress comparison; round-off alone must not flag a stationary start
MERIT_SLACK = 1e-12


class NonlinearProgram(Protocol):
    """``min f(x)`` subject to ``c_E(x) = 0``, ``c_I(x) >= 0`` and ``lower <= x <= upper``."""

    @property
    def n(self) -> int: ...

    @property
    def lower(self) -> FloatArray: ...

    @property
    def upper(self) -> FloatArray: ...

    def objective(self, x: ArrayLike) -> tuple[float, FloatArray]: ...

    def equalities(self, x: ArrayLike) -> tuple[FloatArray, sparse.csr_array]: ...

    def inequalities(self, x: ArrayLike) -> tuple[FloatArray, sparse.csr_array]: ...


@dataclass(frozen=True)
class NlpIterate:
    x: FloatArray
    objective: float
    residual: FloatArray
    stationarity: float
    multipliers_eq: FloatArray
    multipliers_ineq: FloatArray
    penalty: float
    iterations: int = 0
    no_progress: bool = False
    rejected_step: float = 0.0

    @property
    def violation(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


class _NonFinite(Exception):
    pass


def _lagrangian_gradient(
    program: NonlinearProgram,
    x: FloatArray,
    lam_eq: FloatArray,
    lam_ineq: FloatArray,
) -> FloatArray:
    _f, grad = program.objective(x)
    _ce, jac_eq = program.equalities(x)
    _ci, jac_ineq = program.inequalities(x)
    return np.asarray(grad + jac_eq.T @ lam_eq - jac_ineq.T @ lam_ineq)


def evaluate(
    program: NonlinearProgram,
    x: ArrayLike,
    multipliers_eq: FloatArray | None = None,
    multipliers_ineq: FloatArray | None = None,
    penalty: float = 10.0,
    iterations: int = 0,
    no_progress: bool = False,
) -> NlpIterate:
    """Build an iterate at ``x``, reporting residuals and a projected-gradient stationarity estimate."""
    vec = np.asarray(x, dtype=float)
    f, _grad = program.objective(vec)
    c_eq, _jeq = program.equalities(vec)
    c_ineq, _jineq = program.inequalities(vec)
    lam_eq = multipliers_eq if multipliers_eq is not None and multipliers_eq.shape == c_eq.shape else np.zeros_like(c_eq)
    lam_ineq = multipliers_ineq if multipliers_ineq is not None and multipliers_ineq.shape == c_ineq.shape else np.zeros_like(c_ineq)
    grad_l = _lagrangian_gradient(program, vec, lam_eq, lam_ineq)
    projected = vec - np.clip(vec - grad_l, program.lower, program.upper)
    return NlpIterate(
        x=vec.copy(),
        objective=float(f),
        residual=np.concatenate([c_eq, np.minimum(c_ineq, 0.0)]),
        stationarity=float(np.max(np.abs(projected))) if projected.size else 0.0,
        multipliers_eq=lam_eq.copy(),
        multipliers_ineq=lam_ineq.copy(),
        penalty=float(penalty),
        iterations=iterations,
        no_progress=no_progress,
    )


def internal_merit(program: NonlinearProgram, x: FloatArray, penalty: float) -> float:
    """``f + penalty * ||violation||_1``, the quantity the stepper promises not to increase."""
    f, _grad = program.objective(x)
    c_eq, _jeq = program.equalities(x)
    c_ineq, _jineq = program.inequalities(x)
    return float(f + penalty * (np.sum(np.abs(c_eq)) + np.sum(np.abs(np.minimum(c_ineq, 0.0)))))


def nlp_step(
    program: NonlinearProgram,
    start: NlpIterate,
    max_iter: int = 50,
    penalty0: float = 10.0,
    tol: float = 1e-9,
    stationarity_tol: float = 1e-6,
    inner_maxiter: int = 200,
) -> NlpIterate:
    """
    Run at most ``max_iter`` major iterations from ``start``, stopping early once the
    violation is within ``tol`` and either the stationarity is within ``stationarity_tol``
    or a major iteration leaves ``x`` where it was. Bounds hold exactly at the returned
    iterate. If the internal merit would increase, ``start`` is returned unchanged with
    ``no_progress`` set and ``rejected_step`` holding the length of the discarded move.

    :raises SolverFailure: when a non-finite value shows up; ``iterate`` is the last finite one.
    """
    lower, upper = program.lower, program.upper
    x = np.clip(np.asarray(start.x, dtype=float), lower, upper)
    if not np.all(np.isfinite(x)):
        raise SolverFailure("Start point of the inner solve is not finite.", iterate=None)
    first = evaluate(program, x, start.multipliers_eq, start.multipliers_ineq, start.penalty or penalty0)
    if not (np.isfinite(first.objective) and np.all(np.isfinite(first.residual))):
        raise SolverFailure("Constraint or objective values are not finite at the start point.", iterate=None)
    lam_eq = first.multipliers_eq.copy()
    lam_ineq = first.multipliers_ineq.copy()
    rho = max(first.penalty, penalty0) if start.penalty <= 0 else start.penalty
    last = first

    def augmented(z: FloatArray) -> tuple[float, FloatArray]:
        f, grad = program.objective(z)
        c_eq, jac_eq = program.equalities(z)
        c_ineq, jac_ineq = program.inequalities(z)
        shifted = np.maximum(0.0, lam_ineq - rho * c_ineq)
        value = f + lam_eq @ c_eq + 0.5 * rho * (c_eq @ c_eq) + (shifted @ shifted - lam_ineq @ lam_ineq) / (2.0 * rho)
        gradient = grad + jac_eq.T @ (lam_eq + rho * c_eq) - jac_ineq.T @ shifted
        if not (np.isfinite(value) and np.all(np.isfinite(gradient))):
            raise _NonFinite()
        return float(value), np.asarray(gradient, dtype=float)

    c_ineq0 = program.inequalities(x)[0]
    prev_violation = max(
        float(np.max(np.abs(program.equalities(x)[0]), initial=0.0)),
        float(np.max(np.abs(np.minimum(c_ineq0, lam_ineq / rho)), initial=0.0)),
    )
    iterations = 0
    for iterations in range(1, max_iter + 1):
        try:
            res = optimize.minimize(
                augmented,
                x,
                jac=True,
                method="L-BFGS-B",
                bounds=optimize.Bounds(lower, upper),
                options={"maxiter": inner_maxiter, "ftol": 1e-12, "gtol": 1e-8},
            )
        except _NonFinite:
            raise SolverFailure(f"Non-finite augmented Lagrangian in major iteration {iterations}.", iterate=last) from None
        moved = float(np.max(np.abs(np.clip(res.x, lower, upper) - x), initial=0.0))
        x = np.clip(res.x, lower, upper)
        c_eq = program.equalities(x)[0]
        c_ineq = program.inequalities(x)[0]
        if not (np.all(np.isfinite(c_eq)) and np.all(np.isfinite(c_ineq))):
            raise SolverFailure(f"Non-finite constraint values in major iteration {iterations}.", iterate=last)
        violation = max(
            float(np.max(np.abs(c_eq), initial=0.0)),
            float(np.max(np.abs(np.minimum(c_ineq, lam_ineq / rho)), initial=0.0)),
        )
        lam_eq = lam_eq + rho * c_eq
        lam_ineq = np.maximum(0.0, lam_ineq - rho * c_ineq)
        last = evaluate(program, x, lam_eq, lam_ineq, rho, iterations)
        logger.debug(
            "Major iteration %s: objective %.6g, violation %.3g, stationarity %.3g, penalty %.3g.",
            iterations,
            last.objective,
            violation,
            last.stationarity,
            rho,
        )
        if violation <= tol and (last.stationarity <= stationarity_tol or moved <= tol):
            break
        if violation > VIOLATION_DECREASE * prev_violation:
            rho = min(rho * PENALTY_GROWTH, PENALTY_MAX)
        prev_violation = violation

    penalty = max(rho, float(np.max(np.abs(lam_eq), initial=0.0)), float(np.max(lam_ineq, initial=0.0)), 1.0)
    reference = internal_merit(program, first.x, penalty)
    if internal_merit(program, last.x, penalty) > reference + MERIT_SLACK * max(1.0, abs(reference)):
        logger.warning("Inner solve made no progress after %s major iterations; returning the start point.", iterations)
        return replace(first, iterations=iterations, no_progress=True, rejected_step=float(np.linalg.norm(last.x - first.x)))
    return replace(last, penalty=rho)
