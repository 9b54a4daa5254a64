from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from .nlp import NlpIterate
    from .solver import IterationStats, StocsResult


class ConfigurationError(ValueError):
    pass


class AssetFormatError(ConfigurationError):
    def __init__(self, path: str, message: str, line: int | None = None) -> None:
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


class ResultVersionError(ValueError):
    def __init__(self, found: Any, expected: Any) -> None:
        super().__init__(f"Result schema version {found} is not supported (expected version {expected}).")
        self.found = found
        self.expected = expected


class SolverFailure(RuntimeError):
    """
    Raised when the inner NLP stepper encounters a non-finite value. ``iterate`` is the
    last finite iterate; ``stats`` and ``result`` are attached by the outer loop on the way out.
    """

    iterate: "NlpIterate | None"
    stats: "list[IterationStats]"
    result: "StocsResult | None"

    def __init__(self, message: str, iterate: "NlpIterate | None" = None) -> None:
        super().__init__(message)
        self.iterate = iterate
        self.stats = []
        self.result = None
