"""
Scenario files.

A scenario is a YAML document describing the object (point cloud, mass properties), the
environment (SDF grid), friction, manipulator contacts, start and goal poses, the time
horizon, variable bounds and optional solver overrides. Asset paths are resolved against
``STOCS_ASSETS`` when it is set, otherwise against the scenario file's directory.
"""

from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any
import logging

from rest_framework import serializers
import numpy as np
import yaml

from . import settings as pkgsettings
from .cache import PointCloudCache, SdfGridCache
from .contact import ManipulatorContact
from .exceptions import AssetFormatError
from .geometry import Configuration, FloatArray, SdfGrid, SurfaceCloud, config_size
from .serializers import ScenarioSerializer

logger = logging.getLogger(__name__)

CONTACT_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class Bounds:
    q_lower: FloatArray
    q_upper: FloatArray
    v_lower: FloatArray
    v_upper: FloatArray
    force_upper: float = np.inf

    @classmethod
    def unbounded(cls, dim: int) -> "Bounds":
        nq = config_size(dim)
        return cls(np.full(nq, -np.inf), np.full(nq, np.inf), np.full(nq, -np.inf), np.full(nq, np.inf))


@dataclass(frozen=True, eq=False)
class Scenario:
    dim: int
    cloud: SurfaceCloud
    grid: SdfGrid
    mass: float
    com: FloatArray
    inertia: FloatArray | None
    mu_env: float
    mu_mnp: float
    manipulators: tuple[ManipulatorContact, ...]
    start: Configuration
    goal: Configuration
    steps: int
    dt: float
    bounds: Bounds
    cone_directions: int = 2
    gravity: float = field(default_factory=lambda: pkgsettings.STOCS_GRAVITY)
    name: str = "scenario"
    solver: Mapping[str, Any] = field(default_factory=dict)
    path: Path | None = None

    @property
    def nq(self) -> int:
        return config_size(self.dim)

    def describe(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "path": str(self.path) if self.path else None,
            "dim": self.dim,
            "points": len(self.cloud),
            "steps": self.steps,
            "dt": self.dt,
            "cone_directions": self.cone_directions,
        }


def resolve_asset(path: str, base: Path, asset_root: str | Path | None = None) -> Path:
    candidate = Path(path)
    if candidate.is_absolute():
        return candidate
    root = asset_root if asset_root is not None else pkgsettings.STOCS_ASSETS
    return (Path(root) if root else base) / candidate


def load_scenario(path: str | Path, asset_root: str | Path | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise AssetFormatError(str(path), f"cannot read scenario ({e})") from e
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise AssetFormatError(str(path), f"invalid YAML ({getattr(e, 'problem', e)})", line=mark.line + 1 if mark else None) from e
    if not isinstance(raw, Mapping):
        raise AssetFormatError(str(path), "a scenario must be a mapping of sections")
    raw = dict(raw)
    raw.setdefault("name", path.stem)
    return scenario_from_data(raw, base=path.parent, asset_root=asset_root, path=path)


def scenario_from_data(
    raw: Mapping[str, Any],
    base: Path,
    asset_root: str | Path | None = None,
    path: Path | None = None,
) -> Scenario:
    serializer = ScenarioSerializer(data=raw)
    serializer.is_valid(raise_exception=True)
    data: dict[str, Any] = serializer.validated_data
    dim: int = data["dim"]

    obj = data["object"]
    cloud = PointCloudCache(resolve_asset(obj["cloud"], base, asset_root)).get()
    grid = SdfGridCache(resolve_asset(data["environment"]["sdf"], base, asset_root)).get()
    if cloud.dim != dim or grid.dim != dim:
        raise serializers.ValidationError({"dim": f"Scenario is {dim}D but the cloud is {cloud.dim}D and the SDF is {grid.dim}D."})
    if "points" in obj and obj["points"] != len(cloud):
        raise serializers.ValidationError({"object.points": f"Scenario declares {obj['points']} points but the cloud has {len(cloud)}."})

    friction = data["friction"]
    manipulators = []
    for i, contact in enumerate(data["manipulator"]):
        point = np.asarray(contact["point"], dtype=float)
        gap = float(np.min(np.linalg.norm(cloud.points - point, axis=1)))
        if gap > CONTACT_TOLERANCE:
            raise serializers.ValidationError({f"manipulator.{i}.point": f"Contact point is {gap:.3g} m from the nearest cloud point; it must lie on the cloud."})
        manipulators.append(ManipulatorContact(point=point, normal=np.asarray(contact["normal"]), friction=friction["manipulator"]))

    bounds = Bounds.unbounded(dim)
    raw_bounds = data["bounds"]
    bounds = Bounds(
        q_lower=np.asarray(raw_bounds.get("configuration", {}).get("lower", bounds.q_lower), dtype=float),
        q_upper=np.asarray(raw_bounds.get("configuration", {}).get("upper", bounds.q_upper), dtype=float),
        v_lower=np.asarray(raw_bounds.get("velocity", {}).get("lower", bounds.v_lower), dtype=float),
        v_upper=np.asarray(raw_bounds.get("velocity", {}).get("upper", bounds.v_upper), dtype=float),
        force_upper=float(raw_bounds.get("force", np.inf)),
    )

    scenario = Scenario(
        dim=dim,
        cloud=cloud,
        grid=grid,
        mass=obj["mass"],
        com=np.asarray(obj["com"], dtype=float),
        inertia=np.asarray(obj["inertia"], dtype=float) if "inertia" in obj else None,
        mu_env=friction["environment"],
        mu_mnp=friction["manipulator"],
        manipulators=tuple(manipulators),
        start=Configuration(dim, data["start"]["translation"], data["start"]["rotation"]),
        goal=Configuration(dim, data["goal"]["translation"], data["goal"]["rotation"]),
        steps=data["horizon"]["steps"],
        dt=data["horizon"]["dt"],
        bounds=bounds,
        cone_directions=friction["cone_directions"],
        name=data.get("name", path.stem if path else "scenario"),
        solver=data["solver"],
        path=path,
    )
    logger.info("Loaded Scenario[%s] with %s cloud points and %s steps.", scenario.name, len(cloud), scenario.steps)
    return scenario
