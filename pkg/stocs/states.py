from enum import UNIQUE, StrEnum, verify
from typing import TypedDict


@verify(UNIQUE)
class SolveStatus(StrEnum):
    CONVERGED = "converged"
    NOT_CONVERGED = "not-converged"
    ERROR = "error"


@verify(UNIQUE)
class BalanceMode(StrEnum):
    QUASISTATIC = "quasistatic"
    QUASIDYNAMIC = "quasidynamic"


@verify(UNIQUE)
class ConvergenceCondition(StrEnum):
    STEP = "step"
    COMPLEMENTARITY = "complementarity"
    BALANCE = "balance"
    PENETRATION = "penetration"
    VERIFIED = "verified"


# Exit codes used by the management commands
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2


class IndexPointRecord(TypedDict):
    index: int
    coords: list[float]
    iteration: int


class ConvergenceRecord(TypedDict):
    value: float
    limit: float
    passed: bool
