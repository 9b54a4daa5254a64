"""
SVG trajectory traces.

An overview shows the object outline at every step, shaded from dark (start) to light
(goal), with the instantiated contacts, the manipulator contacts and the environment's zero
level set. One force diagram per step draws the contact and manipulation forces against a
scale legend. 3D scenes are drawn as three orthographic projections side by side.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any
import logging

from django.template.loader import render_to_string
from numpy.typing import ArrayLike
from scipy.spatial import ConvexHull, QhullError
import numpy as np

from . import settings as pkgsettings
from .contact import ContactForce, build_frame, world_force
from .geometry import FloatArray, SdfGrid, pose_from_config
from .scenarios import Scenario
from .solver import StocsResult
from .utils import format_float

logger = logging.getLogger(__name__)

PANEL_SIZE = 360
MARGIN = 24
FORCE_LENGTH = 0.25

type Segment = tuple[FloatArray, FloatArray]


@dataclass(frozen=True)
class Projection:
    axes: tuple[int, int]
    label: str


PROJECTIONS: dict[int, tuple[Projection, ...]] = {
    2: (Projection((0, 1), "x-y"),),
    3: (Projection((0, 1), "x-y"), Projection((0, 2), "x-z"), Projection((1, 2), "y-z")),
}


class Canvas:
    """Maps a square world window onto one panel, y axis up."""

    def __init__(self, lower: FloatArray, upper: FloatArray, offset: float, precision: int) -> None:
        self.lower = lower
        self.upper = upper
        self.offset = offset
        self.precision = precision
        self.scale = (PANEL_SIZE - 2 * MARGIN) / float(np.max(upper - lower))

    def xy(self, point: ArrayLike) -> tuple[str, str]:
        p = np.asarray(point, dtype=float)
        x = self.offset + MARGIN + (p[0] - self.lower[0]) * self.scale
        y = PANEL_SIZE - MARGIN - (p[1] - self.lower[1]) * self.scale
        return format_float(x, self.precision), format_float(y, self.precision)

    def polyline(self, points: ArrayLike) -> str:
        return " ".join(",".join(self.xy(p)) for p in np.atleast_2d(points))

    def length(self, value: float) -> str:
        return format_float(value * self.scale, self.precision)

    def inside(self, point: FloatArray) -> bool:
        return bool(np.all(point >= self.lower) and np.all(point <= self.upper))


def outline(points: ArrayLike) -> FloatArray:
    """Convex hull of planar points in counter-clockwise order."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 3:
        return pts
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    return pts[hull.vertices]


def marching_squares(values: FloatArray, origin: ArrayLike, cell_size: float, level: float = 0.0) -> list[Segment]:
    """Line segments of the ``level`` contour of a vertex-sampled 2D field."""
    lattice = np.asarray(values, dtype=float) - level
    base = np.asarray(origin, dtype=float)
    above = lattice > 0
    corners = ((0, 0), (1, 0), (1, 1), (0, 1))
    mixed = np.zeros((lattice.shape[0] - 1, lattice.shape[1] - 1), dtype=bool)
    for a, b in corners[1:]:
        mixed |= above[a : a + mixed.shape[0], b : b + mixed.shape[1]] != above[:-1, :-1]
    segments: list[Segment] = []
    for i, j in zip(*np.nonzero(mixed), strict=True):
        crossings = []
        for k in range(4):
            (a0, b0), (a1, b1) = corners[k], corners[(k + 1) % 4]
            v0, v1 = lattice[i + a0, j + b0], lattice[i + a1, j + b1]
            if (v0 > 0) != (v1 > 0):
                s = v0 / (v0 - v1)
                corner0 = np.array([i + a0, j + b0], dtype=float)
                corner1 = np.array([i + a1, j + b1], dtype=float)
                crossings.append(base + cell_size * (corner0 + s * (corner1 - corner0)))
        if len(crossings) == 2:
            segments.append((crossings[0], crossings[1]))
        elif len(crossings) == 4:
            segments.append((crossings[0], crossings[3]))
            segments.append((crossings[1], crossings[2]))
    return segments


def environment_section(grid: SdfGrid, projection: Projection, through: ArrayLike) -> list[Segment]:
    """Zero level set of the SDF in the projection plane passing through ``through``."""
    a, b = projection.axes
    if grid.dim == 2:
        return marching_squares(grid.lattice, grid.origin, grid.cell_size)
    (other,) = {0, 1, 2} - {a, b}
    coord = float(np.asarray(through, dtype=float)[other])
    index = int(np.clip(round((coord - grid.origin[other]) / grid.cell_size), 0, grid.dims[other] - 1))
    section = np.take(grid.lattice, index, axis=other)
    return marching_squares(section, grid.origin[[a, b]], grid.cell_size)


def _world_points(q: ArrayLike, points: ArrayLike) -> FloatArray:
    return pose_from_config(q).apply(np.atleast_2d(np.asarray(points, dtype=float)))


def _window(points: FloatArray) -> tuple[FloatArray, FloatArray]:
    lower = points.min(axis=0)
    upper = points.max(axis=0)
    pad = max(0.25 * float(np.max(upper - lower)), 0.05)
    center = 0.5 * (lower + upper)
    half = 0.5 * float(np.max(upper - lower)) + pad
    return center - half, center + half


def _shade(step: int, steps: int) -> str:
    # Dark at the start, light at the goal
    level = 40 + int(round(175 * step / max(steps, 1)))
    return f"rgb({level},{level},{level})"


class TraceBuilder:
    def __init__(self, scenario: Scenario, result: StocsResult, verified: bool = False, precision: int | None = None) -> None:
        self.scenario = scenario
        self.result = result
        self.verified = verified
        self.precision = pkgsettings.STOCS_TRACE_PRECISION if precision is None else precision
        self.projections = PROJECTIONS[scenario.dim]
        self.world = [_world_points(q, scenario.cloud.points) for q in result.trajectory.q]
        every = np.concatenate(self.world)
        self.windows = {p.label: _window(every[:, list(p.axes)]) for p in self.projections}
        self.extent = float(np.max(every.max(axis=0) - every.min(axis=0)))

    def canvas(self, index: int, projection: Projection) -> Canvas:
        lower, upper = self.windows[projection.label]
        return Canvas(lower, upper, index * PANEL_SIZE, self.precision)

    def environment(self, canvas: Canvas, projection: Projection) -> str:
        through = self.result.trajectory.q[0, : self.scenario.dim]
        parts = []
        for p0, p1 in environment_section(self.scenario.grid, projection, through):
            if canvas.inside(p0) and canvas.inside(p1):
                x0, y0 = canvas.xy(p0)
                x1, y1 = canvas.xy(p1)
                parts.append(f"M{x0},{y0}L{x1},{y1}")
        return "".join(parts)

    def document(self, panels: list[dict[str, Any]], **extra: Any) -> dict[str, Any]:
        return {
            "name": self.scenario.name,
            "width": PANEL_SIZE * len(panels),
            "height": PANEL_SIZE,
            "panels": panels,
            "verified": self.verified,
            "status": self.result.status.value,
            **extra,
        }

    def overview(self) -> str:
        steps = len(self.world) - 1
        panels = []
        for index, projection in enumerate(self.projections):
            canvas = self.canvas(index, projection)
            axes = list(projection.axes)
            outlines = [{"points": canvas.polyline(outline(world[:, axes])), "fill": _shade(t, steps)} for t, world in enumerate(self.world)]
            contacts = []
            for t, points in enumerate(self.result.index_set):
                if points:
                    world = _world_points(self.result.trajectory.q[t], [p.coords for p in points])
                    contacts.extend(dict(zip(("x", "y"), canvas.xy(w[axes]), strict=True)) for w in world)
            manipulators = []
            for q in self.result.trajectory.q:
                for contact in self.scenario.manipulators:
                    w = _world_points(q, contact.point)[0]
                    manipulators.append(dict(zip(("x", "y"), canvas.xy(w[axes]), strict=True)))
            panels.append(
                {
                    "offset": index * PANEL_SIZE,
                    "label": projection.label,
                    "outlines": outlines,
                    "contacts": contacts,
                    "manipulators": manipulators,
                    "environment": self.environment(canvas, projection),
                }
            )
        return render_to_string("stocs/trace.svg", self.document(panels))

    def force_scale(self) -> tuple[float, float]:
        """World length per newton, and the force the legend bar stands for."""
        largest = 0.0
        for t in range(len(self.world)):
            for row in self.result.forces.values[t]:
                largest = max(largest, float(np.linalg.norm(row[:-1])))
            for row in self.result.trajectory.u[t]:
                largest = max(largest, float(np.linalg.norm(row)))
        reference = largest if largest > 0 else 1.0
        return FORCE_LENGTH * max(self.extent, 1e-3) / reference, reference

    def forces(self, step: int) -> str:
        scenario = self.scenario
        q = self.result.trajectory.q[step]
        d = scenario.cone_directions
        per_newton, reference = self.force_scale()
        arrows: list[tuple[FloatArray, FloatArray, str]] = []
        for p, row in zip(self.result.index_set[step], self.result.forces.values[step], strict=True):
            anchor = _world_points(q, p.coords)[0]
            force = world_force(build_frame(scenario.grid, anchor, d), ContactForce.from_components(row))
            arrows.append((anchor, anchor + per_newton * force, "contact"))
        for contact, row in zip(scenario.manipulators, self.result.trajectory.u[step], strict=True):
            frame = contact.frame(q, d)
            force = world_force(frame, ContactForce.from_components(row, with_gamma=False))
            arrows.append((frame.point - per_newton * force, frame.point, "manipulator"))

        panels = []
        for index, projection in enumerate(self.projections):
            canvas = self.canvas(index, projection)
            axes = list(projection.axes)
            segments = []
            for start, end, kind in arrows:
                if np.linalg.norm(end[axes] - start[axes]) < 1e-12:
                    continue
                x1, y1 = canvas.xy(start[axes])
                x2, y2 = canvas.xy(end[axes])
                segments.append({"x1": x1, "y1": y1, "x2": x2, "y2": y2, "kind": kind})
            panels.append(
                {
                    "offset": index * PANEL_SIZE,
                    "label": projection.label,
                    "outlines": [{"points": canvas.polyline(outline(self.world[step][:, axes])), "fill": _shade(0, 0)}],
                    "segments": segments,
                    "environment": self.environment(canvas, projection),
                }
            )
        legend = {
            "length": self.canvas(0, self.projections[0]).length(per_newton * reference),
            "label": f"{format_float(reference, 3)} N",
        }
        return render_to_string("stocs/forces.svg", self.document(panels, step=step, legend=legend))


def emit_trace(
    scenario: Scenario,
    result: StocsResult,
    out_dir: str | Path,
    verified: bool = False,
    precision: int | None = None,
) -> list[Path]:
    """Write ``overview.svg`` and ``forces_NNN.svg`` for every step; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    builder = TraceBuilder(scenario, result, verified, precision)
    written = [out / "overview.svg"]
    written[0].write_text(builder.overview())
    for step in range(len(builder.world)):
        path = out / f"forces_{step:03d}.svg"
        path.write_text(builder.forces(step))
        written.append(path)
    logger.info("Wrote %s trace files for Scenario[%s] to %s.", len(written), scenario.name, out)
    return written

