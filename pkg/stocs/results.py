"""
Result files.

Results are JSON documents carrying a ``schema_version``. Floats are written with their
shortest round-tripping representation, so loading a saved result reproduces it exactly.
"""

from collections.abc import Sequence
from pathlib import Path
from typing import IO, Any
import csv
import json
import logging

import numpy as np

from .exceptions import AssetFormatError, ResultVersionError
from .oracles import IndexSet
from .program import ForceVars, TrajectoryVars
from .serializers import ResultSerializer
from .solver import IterationStats, StocsResult
from .states import SolveStatus

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

STATS_COLUMNS = (
    "iteration",
    "mean_index_points",
    "total_index_points",
    "points_added",
    "merit_before",
    "merit_after",
    "alpha",
    "sigma",
    "inner_no_progress",
    "wall_time",
)


def result_to_dict(result: StocsResult) -> dict[str, Any]:
    trajectory = result.trajectory
    return {
        "schema_version": SCHEMA_VERSION,
        "status": result.status.value,
        "message": result.message,
        "trajectory": {
            "q": trajectory.q.tolist(),
            "v": trajectory.v.tolist(),
            "u": trajectory.u.tolist(),
            "cone_directions": int(trajectory.u.shape[-1] - 1),
        },
        "forces": [values.tolist() for values in result.forces.values],
        "index_sets": result.index_set.to_records(),
        "stats": [entry.as_dict() for entry in result.stats],
        "convergence": result.convergence,
        "metadata": result.metadata,
    }


def result_from_dict(data: Any, source: str = "<result>") -> StocsResult:
    if not isinstance(data, dict):
        raise AssetFormatError(source, "a result must be a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ResultVersionError(version, SCHEMA_VERSION)
    serializer = ResultSerializer(data=data)
    serializer.is_valid(raise_exception=True)
    valid = serializer.validated_data

    raw = valid["trajectory"]
    q = np.asarray(raw["q"], dtype=float)
    steps = q.shape[0]
    d = int(raw.get("cone_directions", 2))
    trajectory = TrajectoryVars(
        q=q,
        v=np.asarray(raw["v"], dtype=float).reshape(q.shape),
        u=np.asarray(raw["u"], dtype=float).reshape(steps, -1, 1 + d),
    )
    index_set = IndexSet.from_records(valid["index_sets"])
    if len(index_set) != steps or len(valid["forces"]) != steps:
        raise AssetFormatError(source, f"trajectory has {steps} steps but forces/index sets have {len(valid['forces'])}/{len(index_set)}")
    forces = ForceVars(
        indices=tuple(index_set.indices(t) for t in range(steps)),
        values=tuple(np.asarray(rows, dtype=float).reshape(-1, d + 2) for rows in valid["forces"]),
    )
    return StocsResult(
        status=SolveStatus(valid["status"]),
        trajectory=trajectory,
        forces=forces,
        index_set=index_set,
        stats=[IterationStats(**dict(entry)) for entry in data["stats"]],
        convergence=valid["convergence"],
        metadata=valid["metadata"],
        message=valid["message"],
    )


def save_result(path: str | Path, result: StocsResult) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result_to_dict(result), indent=1, allow_nan=False))
    logger.info("Saved %s result to %s.", result.status.value, path)


def load_result(path: str | Path) -> StocsResult:
    """
    :raises AssetFormatError: for unreadable or malformed JSON.
    :raises ResultVersionError: for files written with another schema version.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise AssetFormatError(str(path), f"cannot read result ({e})") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise AssetFormatError(str(path), f"invalid JSON ({e.msg})", line=e.lineno) from e
    return result_from_dict(data, str(path))


def stats_rows(stats: Sequence[IterationStats]) -> tuple[list[str], list[list[Any]]]:
    families = sorted({name for entry in stats for name in entry.residuals})
    header = [*STATS_COLUMNS, *(f"residual_{name}" for name in families)]
    rows = []
    for entry in stats:
        rows.append(
            [
                entry.iteration,
                entry.mean_index_points,
                sum(entry.index_counts),
                entry.points_added,
                entry.merit_before,
                entry.merit_after,
                entry.alpha,
                entry.sigma,
                int(entry.inner_no_progress),
                entry.wall_time,
                *(entry.residuals.get(name, 0.0) for name in families),
            ]
        )
    return header, rows


def write_stats_csv(target: str | Path | IO[str], stats: Sequence[IterationStats]) -> None:
    header, rows = stats_rows(stats)
    if isinstance(target, str | Path):
        with open(target, "w", newline="") as f:
            write_stats_csv(f, stats)
        return
    writer = csv.writer(target)
    writer.writerow(header)
    writer.writerows(rows)
