"""
Index-point oracles.

An oracle looks at the current trajectory and decides which object surface points become
potential contacts at which time steps. Oracles only ever add points: every update returns
a superset of the previous index set.
"""

from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from typing import Any, Self
import logging

from django.utils.module_loading import import_string
from numpy.typing import ArrayLike
import numpy as np

from . import settings as pkgsettings
from . import signals
from .exceptions import ConfigurationError
from .geometry import FloatArray, IntArray, SdfGrid, SurfaceCloud, closest_point, signed_distance
from .states import IndexPointRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IndexPoint:
    step: int
    index: int
    coords: FloatArray
    iteration: int

    def to_record(self) -> IndexPointRecord:
        return {
            "index": self.index,
            "coords": [float(c) for c in self.coords],
            "iteration": self.iteration,
        }


class IndexSet:
    """Per-time-step ordered lists of index points, ``Ỹ_0`` through ``Ỹ_T``."""

    def __init__(self, steps: Sequence[Sequence[IndexPoint]]) -> None:
        self._steps: list[list[IndexPoint]] = [list(points) for points in steps]

    @classmethod
    def empty(cls, horizon: int) -> Self:
        return cls([[] for _ in range(horizon + 1)])

    def __len__(self) -> int:
        return len(self._steps)

    def __getitem__(self, step: int) -> tuple[IndexPoint, ...]:
        return tuple(self._steps[step])

    def __iter__(self) -> Iterator[tuple[IndexPoint, ...]]:
        for points in self._steps:
            yield tuple(points)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IndexSet):
            return NotImplemented
        return [[(p.index, p.iteration) for p in pts] for pts in self._steps] == [[(p.index, p.iteration) for p in pts] for pts in other._steps]

    @property
    def horizon(self) -> int:
        return len(self._steps) - 1

    @property
    def counts(self) -> list[int]:
        return [len(points) for points in self._steps]

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def mean_size(self) -> float:
        return self.total / len(self._steps)

    def copy(self) -> "IndexSet":
        return IndexSet(self._steps)

    def indices(self, step: int) -> IntArray:
        return np.array([p.index for p in self._steps[step]], dtype=np.intp)

    def coords(self, step: int) -> FloatArray:
        return np.array([p.coords for p in self._steps[step]], dtype=float)

    def contains(self, step: int, index: int) -> bool:
        return any(p.index == index for p in self._steps[step])

    def add(self, point: IndexPoint) -> None:
        self._steps[point.step].append(point)

    def is_superset_of(self, other: "IndexSet") -> bool:
        if len(other) != len(self):
            return False
        return all(set(other.indices(t).tolist()) <= set(self.indices(t).tolist()) for t in range(len(self)))

    def difference(self, other: "IndexSet") -> dict[int, list[IndexPoint]]:
        """Points of ``self`` that are not in ``other``, keyed by time step."""
        added: dict[int, list[IndexPoint]] = {}
        for t, points in enumerate(self._steps):
            known = set(other.indices(t).tolist()) if t < len(other) else set()
            fresh = [p for p in points if p.index not in known]
            if fresh:
                added[t] = fresh
        return added

    def to_records(self) -> list[list[IndexPointRecord]]:
        return [[p.to_record() for p in points] for points in self._steps]

    @classmethod
    def from_records(cls, records: Sequence[Sequence[IndexPointRecord]]) -> Self:
        return cls([[IndexPoint(step=t, index=r["index"], coords=np.asarray(r["coords"], dtype=float), iteration=r["iteration"]) for r in points] for t, points in enumerate(records)])


@dataclass(frozen=True)
class OracleConfig:
    d_max: float = field(default_factory=lambda: pkgsettings.STOCS_ORACLE_DEFAULTS["d_max"])
    dedup: float = field(default_factory=lambda: pkgsettings.STOCS_ORACLE_DEFAULTS["dedup"])
    time_smoothing: int = field(default_factory=lambda: pkgsettings.STOCS_ORACLE_DEFAULTS["time_smoothing"])
    disturbances: tuple[float, ...] = field(default_factory=lambda: tuple(pkgsettings.STOCS_ORACLE_DEFAULTS["disturbances"]))

    def __post_init__(self) -> None:
        if not self.d_max > 0:
            raise ConfigurationError(f"Oracle d_max must be positive, got {self.d_max}.")
        if self.dedup < 0:
            raise ConfigurationError(f"Oracle dedup threshold must be nonnegative, got {self.dedup}.")
        if self.time_smoothing < 0:
            raise ConfigurationError(f"Time smoothing window must be nonnegative, got {self.time_smoothing}.")
        if any(not s > 0 for s in self.disturbances):
            raise ConfigurationError(f"Spatial disturbances must be positive, got {list(self.disturbances)}.")
        object.__setattr__(self, "disturbances", tuple(float(s) for s in self.disturbances))

    def as_dict(self) -> dict[str, Any]:
        return {
            "d_max": self.d_max,
            "dedup": self.dedup,
            "time_smoothing": self.time_smoothing,
            "disturbances": list(self.disturbances),
        }


def dedup_gate(candidate: ArrayLike, existing: ArrayLike, threshold: float) -> bool:
    """True iff ``candidate`` is strictly farther than ``threshold`` from every existing point."""
    pts = np.asarray(existing, dtype=float)
    if pts.size == 0:
        return True
    c = np.asarray(candidate, dtype=float).reshape(-1)
    distances = np.linalg.norm(pts.reshape(-1, c.shape[0]) - c, axis=1)
    return bool(np.all(distances > threshold))


class IndexPointOracle:
    code: str = "abstract-oracle"
    name: str = "Abstract Oracle"

    def __init__(self, cloud: SurfaceCloud, grid: SdfGrid, config: OracleConfig | None = None) -> None:
        if cloud.dim != grid.dim:
            raise ConfigurationError(f"A {cloud.dim}D cloud cannot be queried against a {grid.dim}D SDF.")
        self.cloud = cloud
        self.grid = grid
        self.config = config or OracleConfig()

    def update(self, trajectory: ArrayLike, prev: IndexSet, iteration: int = 0) -> IndexSet:
        traj = np.atleast_2d(np.asarray(trajectory, dtype=float))
        if traj.shape[0] != len(prev):
            raise ConfigurationError(f"Trajectory has {traj.shape[0]} steps but the index set has {len(prev)}.")
        result = self._update(traj, prev.copy(), iteration)
        added = result.difference(prev)
        if added:
            signals.index_points_added.send(sender=self.__class__, oracle=self, iteration=iteration, added=added)
        return result

    def _update(self, trajectory: FloatArray, index_set: IndexSet, iteration: int) -> IndexSet:
        raise NotImplementedError("Subclass must implement _update")

    def _offer(self, index_set: IndexSet, step: int, index: int, iteration: int) -> bool:
        coords = self.cloud.points[index]
        if not dedup_gate(coords, index_set.coords(step), self.config.dedup):
            return False
        index_set.add(IndexPoint(step=step, index=index, coords=coords, iteration=iteration))
        logger.debug("Added IndexPoint[%s] to Step[%s] at Iteration[%s].", index, step, iteration)
        return True


class MaximumViolationOracle(IndexPointOracle):
    """
    Adds each step's closest (or deepest) cloud point to every time step, subject to the
    distance gate ``d_max`` and the per-step dedup threshold.
    """

    code = "mvo"
    name = "Maximum Violation Oracle"

    def _update(self, trajectory: FloatArray, index_set: IndexSet, iteration: int) -> IndexSet:
        for q in trajectory:
            found = closest_point(q, self.cloud, self.grid)
            if not found.distance < self.config.d_max:
                continue
            for dest in range(len(index_set)):
                self._offer(index_set, dest, found.index, iteration)
        return index_set


class TimeActiveMaximumViolationOracle(IndexPointOracle):
    """
    Adds each step's closest point only near the step where it was found. Candidates are
    staged from the unperturbed pose and from poses perturbed by ``±s`` along every
    configuration coordinate (``s`` in ``disturbances``), then offered to every step
    within ``time_smoothing`` steps.
    """

    code = "tamvo"
    name = "Time-Active Maximum Violation Oracle"

    def stage(self, q: FloatArray) -> list[int]:
        staged: list[int] = []
        found = closest_point(q, self.cloud, self.grid)
        if found.distance < self.config.d_max:
            staged.append(found.index)
        for s in self.config.disturbances:
            for axis in range(q.shape[0]):
                for sign in (1.0, -1.0):
                    perturbed = q.copy()
                    perturbed[axis] += sign * s
                    candidate = closest_point(perturbed, self.cloud, self.grid)
                    if candidate.distance < self.config.d_max:
                        staged.append(candidate.index)
                        logger.debug(
                            "Staged IndexPoint[%s] from Disturbance[%s] on Axis[%s] with perturbed distance %.3g (unperturbed %.3g).",
                            candidate.index,
                            sign * s,
                            axis,
                            candidate.distance,
                            found.distance if candidate.index == found.index else float(self._distance(q, candidate.index)),
                        )
        return staged

    def _distance(self, q: FloatArray, index: int) -> float:
        value, _grad = signed_distance(q, self.cloud.points[index], self.grid)
        return value

    def _update(self, trajectory: FloatArray, index_set: IndexSet, iteration: int) -> IndexSet:
        staging = [self.stage(q) for q in trajectory]
        horizon = len(index_set) - 1
        window = self.config.time_smoothing
        for t, staged in enumerate(staging):
            for index in staged:
                for dest in range(max(0, t - window), min(horizon, t + window) + 1):
                    self._offer(index_set, dest, index, iteration)
        return index_set


class AllPointsOracle(IndexPointOracle):
    """Instantiates the whole cloud at every step: the plain all-points MPCC baseline."""

    code = "all"
    name = "All Points"

    def _update(self, trajectory: FloatArray, index_set: IndexSet, iteration: int) -> IndexSet:
        for dest in range(len(index_set)):
            for index in range(len(self.cloud)):
                if not index_set.contains(dest, index):
                    index_set.add(IndexPoint(step=dest, index=index, coords=self.cloud.points[index], iteration=iteration))
        return index_set


def get_oracle_class(code: str | None = None) -> type[IndexPointOracle]:
    code = code or pkgsettings.STOCS_DEFAULT_ORACLE
    try:
        path = pkgsettings.STOCS_ORACLES[code]
    except KeyError:
        raise ConfigurationError(f"Unknown oracle '{code}'; choose from {', '.join(sorted(pkgsettings.STOCS_ORACLES))}.") from None
    return import_string(path)  # type:ignore[no-any-return]


def get_oracle(
    code: str | None,
    cloud: SurfaceCloud,
    grid: SdfGrid,
    config: OracleConfig | None = None,
) -> IndexPointOracle:
    return get_oracle_class(code)(cloud, grid, config)


# Oracle variants compared by ``stocs bench --oracle-suite``: (label, code, time smoothing, disturbances)
ORACLE_SUITE: list[tuple[str, str, int, tuple[float, ...]]] = [
    ("mvo", "mvo", 0, ()),
    ("tamvo", "tamvo", 0, ()),
    ("tamvo-ts", "tamvo", 1, ()),
    ("tamvo-sd", "tamvo", 0, (1e-2,)),
    ("tamvo-sd-ts", "tamvo", 1, (1e-2,)),
]
