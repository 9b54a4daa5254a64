from collections.abc import Mapping
from typing import Any
import math
import re

from django.utils.translation import gettext_lazy as _
from rest_framework import serializers

from . import settings as pkgsettings
from .geometry import config_size, rotation_size
from .states import BalanceMode, SolveStatus

ANGLE_RE = re.compile(r"^\s*(?P<value>[-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?)\s*(?P<unit>deg|rad)?\s*$")


class AngleField(serializers.Field):  # type:ignore[type-arg]
    """
    An angle in radians. Strings may carry an explicit ``deg`` or ``rad`` suffix,
    e.g. ``"-90 deg"``.
    """

    default_error_messages = {
        "invalid": _("Expected an angle such as 1.57, '1.57 rad' or '90 deg'."),
    }

    def to_internal_value(self, data: Any) -> float:
        if isinstance(data, bool):
            self.fail("invalid")
        if isinstance(data, int | float):
            value = float(data)
        elif isinstance(data, str) and (match := ANGLE_RE.match(data)):
            value = float(match["value"])
            if match["unit"] == "deg":
                value = math.radians(value)
        else:
            self.fail("invalid")
        if not math.isfinite(value):
            self.fail("invalid")
        return value

    def to_representation(self, value: float) -> float:
        return float(value)


class VectorField(serializers.ListField):
    child = serializers.FloatField()

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        kwargs.setdefault("allow_empty", False)
        super().__init__(*args, **kwargs)


class ConfigurationSerializer(serializers.Serializer[Any]):
    translation = VectorField()
    rotation = serializers.ListField(child=AngleField(), allow_empty=False)

    def to_internal_value(self, data: Any) -> Any:
        # A bare number is accepted for the single planar angle
        if isinstance(data, Mapping) and "rotation" in data and not isinstance(data["rotation"], list):
            data = {**data, "rotation": [data["rotation"]]}
        return super().to_internal_value(data)


class ObjectSerializer(serializers.Serializer[Any]):
    cloud = serializers.CharField()
    points = serializers.IntegerField(min_value=1, required=False)
    mass = serializers.FloatField()
    com = VectorField(required=False)
    inertia = serializers.JSONField(required=False)

    def validate_mass(self, value: float) -> float:
        if not value > 0:
            raise serializers.ValidationError(_("Mass must be positive."))
        return value


class EnvironmentSerializer(serializers.Serializer[Any]):
    sdf = serializers.CharField()


class FrictionSerializer(serializers.Serializer[Any]):
    environment = serializers.FloatField(min_value=0.0)
    manipulator = serializers.FloatField(min_value=0.0)
    cone_directions = serializers.IntegerField(min_value=2, required=False)


class ManipulatorContactSerializer(serializers.Serializer[Any]):
    point = VectorField()
    normal = VectorField()


class HorizonSerializer(serializers.Serializer[Any]):
    steps = serializers.IntegerField(min_value=1)
    dt = serializers.FloatField()

    def validate_dt(self, value: float) -> float:
        if not value > 0:
            raise serializers.ValidationError(_("Time step must be positive."))
        return value


class RangeSerializer(serializers.Serializer[Any]):
    lower = VectorField(required=False)
    upper = VectorField(required=False)


class BoundsSerializer(serializers.Serializer[Any]):
    configuration = RangeSerializer(required=False)
    velocity = RangeSerializer(required=False)
    force = serializers.FloatField(min_value=0.0, required=False)


class WeightsSerializer(serializers.Serializer[Any]):
    u = serializers.FloatField(min_value=0.0, required=False)
    v = serializers.FloatField(min_value=0.0, required=False)
    z = serializers.FloatField(min_value=0.0, required=False)


class StocsConfigSerializer(serializers.Serializer[Any]):
    """
    Solver options. Every field is optional; missing values come from
    ``STOCS_SOLVER_DEFAULTS`` and ``STOCS_ORACLE_DEFAULTS``.
    """

    oracle = serializers.CharField(required=False)
    mode = serializers.ChoiceField(choices=[m.value for m in BalanceMode], required=False)
    eps_x = serializers.FloatField(required=False)
    eps_gap = serializers.FloatField(required=False)
    eps_s = serializers.FloatField(required=False)
    eps_p = serializers.FloatField(required=False)
    max_outer = serializers.IntegerField(min_value=1, required=False)
    max_line_search = serializers.IntegerField(min_value=1, required=False)
    inner_iters = serializers.IntegerField(min_value=1, required=False)
    merit_penalty = serializers.FloatField(min_value=0.0, required=False)
    line_search_shrink = serializers.FloatField(required=False)
    sigma0 = serializers.FloatField(required=False)
    sigma_decay = serializers.FloatField(required=False)
    sigma_min = serializers.FloatField(required=False)
    penalty0 = serializers.FloatField(required=False)
    weight_u = serializers.FloatField(min_value=0.0, required=False)
    weight_v = serializers.FloatField(min_value=0.0, required=False)
    weight_z = serializers.FloatField(min_value=0.0, required=False)
    weights = WeightsSerializer(required=False)
    goal_tol_pos = serializers.FloatField(required=False)
    goal_tol_rot = serializers.FloatField(required=False)
    d_max = serializers.FloatField(required=False)
    dedup = serializers.FloatField(min_value=0.0, required=False)
    time_smoothing = serializers.IntegerField(min_value=0, required=False)
    disturbances = serializers.ListField(child=serializers.FloatField(), allow_empty=True, required=False)

    POSITIVE_FIELDS = ("eps_x", "eps_gap", "eps_s", "eps_p", "sigma0", "sigma_min", "penalty0", "goal_tol_pos", "goal_tol_rot", "d_max")

    def validate_oracle(self, value: str) -> str:
        if value not in pkgsettings.STOCS_ORACLES:
            raise serializers.ValidationError(_("Unknown oracle '%(code)s'.") % {"code": value})
        return value

    def validate_disturbances(self, value: list[float]) -> list[float]:
        if any(not s > 0 for s in value):
            raise serializers.ValidationError(_("Spatial disturbances must be positive."))
        return value

    def validate(self, data: dict[str, Any]) -> dict[str, Any]:
        errors: dict[str, str] = {}
        for name in self.POSITIVE_FIELDS:
            if name in data and not data[name] > 0:
                errors[name] = _("Must be positive.")
        for name in ("line_search_shrink", "sigma_decay"):
            if name in data and not 0 < data[name] < 1:
                errors[name] = _("Must lie strictly between 0 and 1.")
        if errors:
            raise serializers.ValidationError(errors)
        weights = data.pop("weights", None) or {}
        for key, value in weights.items():
            data.setdefault(f"weight_{key}", value)
        return data


class ScenarioSerializer(serializers.Serializer[Any]):
    name = serializers.CharField(required=False)
    dim = serializers.ChoiceField(choices=[2, 3])
    object = ObjectSerializer()
    environment = EnvironmentSerializer()
    friction = FrictionSerializer()
    manipulator = ManipulatorContactSerializer(many=True, required=False)
    start = ConfigurationSerializer()
    goal = ConfigurationSerializer()
    horizon = HorizonSerializer()
    bounds = BoundsSerializer(required=False)
    solver = StocsConfigSerializer(required=False)

    def validate(self, data: dict[str, Any]) -> dict[str, Any]:
        dim: int = data["dim"]
        nr = rotation_size(dim)
        nq = config_size(dim)
        errors: dict[str, Any] = {}

        for key in ("start", "goal"):
            config = data[key]
            if len(config["translation"]) != dim or len(config["rotation"]) != nr:
                errors[key] = _("Expected %(dim)s translation and %(nr)s rotation entries.") % {"dim": dim, "nr": nr}

        obj = data["object"]
        if len(obj.setdefault("com", [0.0] * dim)) != dim:
            errors["object.com"] = _("Expected %(dim)s entries.") % {"dim": dim}
        if "inertia" in obj:
            try:
                obj["inertia"] = self._parse_inertia(obj["inertia"], dim)
            except (TypeError, ValueError):
                errors["object.inertia"] = _("Expected a positive scalar in 2D, or 3 diagonal entries or a symmetric 3x3 matrix in 3D.")

        cone = data["friction"].setdefault("cone_directions", 2 if dim == 2 else 4)
        if (dim == 2 and cone != 2) or (dim == 3 and cone % 2):
            errors["friction.cone_directions"] = _("Use 2 directions in 2D and an even count in 3D.")

        for i, contact in enumerate(data.setdefault("manipulator", [])):
            if len(contact["point"]) != dim or len(contact["normal"]) != dim:
                errors[f"manipulator.{i}"] = _("Point and normal need %(dim)s entries.") % {"dim": dim}
            elif not any(contact["normal"]):
                errors[f"manipulator.{i}"] = _("Normal must be nonzero.")

        bounds = data.setdefault("bounds", {})
        for key in ("configuration", "velocity"):
            for side, values in bounds.get(key, {}).items():
                if len(values) != nq:
                    errors[f"bounds.{key}.{side}"] = _("Expected %(nq)s entries.") % {"nq": nq}

        if errors:
            raise serializers.ValidationError(errors)
        data.setdefault("solver", {})
        return data

    @staticmethod
    def _parse_inertia(raw: Any, dim: int) -> list[list[float]]:
        if dim == 2:
            value = float(raw[0] if isinstance(raw, list) and len(raw) == 1 else raw)
            if not value > 0:
                raise ValueError(raw)
            return [[value]]
        if isinstance(raw, list) and len(raw) == 3 and all(isinstance(r, int | float) for r in raw):
            if not all(r > 0 for r in raw):
                raise ValueError(raw)
            return [[float(raw[i]) if i == j else 0.0 for j in range(3)] for i in range(3)]
        matrix = [[float(v) for v in row] for row in raw]
        if len(matrix) != 3 or any(len(row) != 3 for row in matrix):
            raise ValueError(raw)
        if any(abs(matrix[i][j] - matrix[j][i]) > 1e-12 for i in range(3) for j in range(3)):
            raise ValueError(raw)
        return matrix


class IterationStatsSerializer(serializers.Serializer[Any]):
    iteration = serializers.IntegerField(min_value=1)
    index_counts = serializers.ListField(child=serializers.IntegerField(min_value=0))
    mean_index_points = serializers.FloatField()
    points_added = serializers.IntegerField(min_value=0)
    merit_before = serializers.FloatField()
    merit_after = serializers.FloatField()
    alpha = serializers.FloatField()
    sigma = serializers.FloatField()
    residuals = serializers.DictField(child=serializers.FloatField())
    inner_no_progress = serializers.BooleanField()
    wall_time = serializers.FloatField()


class ResultSerializer(serializers.Serializer[Any]):
    schema_version = serializers.IntegerField()
    status = serializers.ChoiceField(choices=[s.value for s in SolveStatus])
    message = serializers.CharField(allow_blank=True, required=False, default="")
    trajectory = serializers.DictField()
    forces = serializers.ListField(child=serializers.ListField())
    index_sets = serializers.ListField(child=serializers.ListField())
    stats = IterationStatsSerializer(many=True)
    convergence = serializers.DictField(required=False, default=dict)
    metadata = serializers.DictField(required=False, default=dict)

    def validate_trajectory(self, value: dict[str, Any]) -> dict[str, Any]:
        missing = [key for key in ("q", "v", "u") if key not in value]
        if missing:
            raise serializers.ValidationError(_("Missing trajectory entries: %(keys)s.") % {"keys": ", ".join(missing)})
        return value
