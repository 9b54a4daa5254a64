from typing import Any, TypedDict
import os

from django.conf import settings


def overridable(name: str, default: Any | None = None) -> Any:
    return getattr(settings, name, default)


class OracleDefaults(TypedDict):
    d_max: float
    dedup: float
    time_smoothing: int
    disturbances: list[float]


class SolverDefaults(TypedDict):
    mode: str
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


class VerifierCheckConfig(TypedDict):
    check: str
    kwargs: dict[str, Any]


STOCS_ORACLES: dict[str, str] = overridable(
    "STOCS_ORACLES",
    {
        "mvo": "stocs.oracles.MaximumViolationOracle",
        "tamvo": "stocs.oracles.TimeActiveMaximumViolationOracle",
        "all": "stocs.oracles.AllPointsOracle",
    },
)
STOCS_DEFAULT_ORACLE: str = overridable("STOCS_DEFAULT_ORACLE", "tamvo")

STOCS_ORACLE_DEFAULTS: OracleDefaults = overridable(
    "STOCS_ORACLE_DEFAULTS",
    {
        "d_max": 0.05,
        "dedup": 1e-3,
        "time_smoothing": 1,
        "disturbances": [1e-2],
    },
)

STOCS_SOLVER_DEFAULTS: SolverDefaults = overridable(
    "STOCS_SOLVER_DEFAULTS",
    {
        "mode": "quasistatic",
        "eps_x": 1e-4,
        "eps_gap": 1e-4,
        "eps_s": 1e-3,
        "eps_p": 1e-4,
        "max_outer": 30,
        "max_line_search": 20,
        "inner_iters": 50,
        "merit_penalty": 1e2,
        "line_search_shrink": 0.5,
        "sigma0": 1e-2,
        "sigma_decay": 0.2,
        "sigma_min": 1e-4,
        "penalty0": 10.0,
        "weight_u": 1.0,
        "weight_v": 0.1,
        "weight_z": 1e-3,
        "goal_tol_pos": 1e-3,
        "goal_tol_rot": 1e-2,
    },
)

STOCS_VERIFIER_CHECKS: list[VerifierCheckConfig] = overridable(
    "STOCS_VERIFIER_CHECKS",
    [
        {"check": "stocs.verifier.PenetrationCheck", "kwargs": {}},
        {"check": "stocs.verifier.DynamicsCheck", "kwargs": {}},
        {"check": "stocs.verifier.TerminalCheck", "kwargs": {}},
        {"check": "stocs.verifier.ConeCheck", "kwargs": {}},
        {"check": "stocs.verifier.ComplementarityCheck", "kwargs": {}},
        {"check": "stocs.verifier.BalanceCheck", "kwargs": {}},
    ],
)

STOCS_ASSETS: str | None = overridable("STOCS_ASSETS", os.environ.get("STOCS_ASSETS"))
STOCS_GRAVITY: float = overridable("STOCS_GRAVITY", 9.81)
STOCS_TRACE_PRECISION: int = overridable("STOCS_TRACE_PRECISION", 4)
