from pathlib import Path
import tempfile

import numpy as np

from ..geometry import Configuration, SdfGrid, SurfaceCloud
from ..program import ForceVars, TrajectoryVars
from ..solver import StocsResult
from ..states import SolveStatus
from ..traces import Canvas, TraceBuilder, emit_trace, marching_squares, outline
from .base import BaseTest, corner_index_set, make_cube_scenario, make_scenario, resting_result

GOLDEN = Path(__file__).resolve().parent / "golden"


def rod_scene():
    """A two-point rod lying on a floor sampled by a single row of cells."""
    floor = SdfGrid.from_function(lambda p: p[:, 1], origin=(-0.5, -0.25), cell_size=0.5, dims=(3, 2))
    rest = Configuration(2, [0.0, 0.0], [0.0])
    scenario = make_scenario(
        cloud=SurfaceCloud([[-0.5, 0.0], [0.5, 0.0]]),
        grid=floor,
        manipulators=(),
        start=rest,
        goal=rest,
        steps=1,
        name="rod",
    )
    index_set = corner_index_set(scenario, (0, 1))
    row = np.array([scenario.mass * scenario.gravity / 2, 0.0, 0.0, 0.0])
    result = StocsResult(
        status=SolveStatus.CONVERGED,
        trajectory=TrajectoryVars(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 0, 3))),
        forces=ForceVars((index_set.indices(0), index_set.indices(1)), (np.tile(row, (2, 1)), np.tile(row, (2, 1)))),
        index_set=index_set,
    )
    return scenario, result


class EmitTraceTest(BaseTest):
    def setUp(self):
        super().setUp()
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()
        super().tearDown()

    def test_files(self):
        scenario = make_scenario()
        written = emit_trace(scenario, resting_result(scenario), self.dir / "trace")
        self.assertEqual([p.name for p in written], ["overview.svg", "forces_000.svg", "forces_001.svg", "forces_002.svg"])
        for path in written:
            self.assertTrue(path.exists())
            self.assertTrue(path.read_text().startswith("<svg"))

    def test_overview(self):
        scenario = make_scenario()
        overview = TraceBuilder(scenario, resting_result(scenario)).overview()
        self.assertIn("<title>resting_box (converged)</title>", overview)
        self.assertEqual(overview.count('class="outline"'), scenario.steps + 1)
        self.assertEqual(overview.count('class="contact"'), 2 * (scenario.steps + 1))
        self.assertEqual(overview.count('class="manipulator"'), scenario.steps + 1)
        self.assertIn('class="environment"', overview)
        self.assertIn("UNVERIFIED", overview)

    def test_verified_traces_have_no_watermark(self):
        scenario = make_scenario()
        builder = TraceBuilder(scenario, resting_result(scenario), verified=True)
        self.assertNotIn("UNVERIFIED", builder.overview())
        self.assertNotIn("UNVERIFIED", builder.forces(0))

    def test_force_diagram(self):
        scenario = make_scenario()
        diagram = TraceBuilder(scenario, resting_result(scenario)).forces(1)
        self.assertIn("<title>resting_box step 1</title>", diagram)
        self.assertEqual(diagram.count('<line class="contact"'), 2)
        self.assertNotIn('<line class="manipulator"', diagram)
        self.assertIn("4.905 N", diagram)

    def test_spatial_scene_has_three_panels(self):
        scenario = make_cube_scenario()
        builder = TraceBuilder(scenario, resting_result(scenario))
        overview = builder.overview()
        self.assertEqual(overview.count('class="panel"'), 3)
        self.assertIn('width="1080"', overview)
        for label in ("x-y", "x-z", "y-z"):
            self.assertIn(f'data-projection="{label}"', overview)
        self.assertEqual(builder.forces(0).count('class="panel"'), 3)

    def test_precision(self):
        scenario = make_scenario()
        overview = TraceBuilder(scenario, resting_result(scenario), precision=1).overview()
        self.assertNotRegex(overview, r'cx="\d+\.\d\d')


class DrawingTest(BaseTest):
    def test_canvas(self):
        canvas = Canvas(np.zeros(2), np.ones(2), offset=0, precision=4)
        self.assertEqual(canvas.xy([0.0, 0.0]), ("24.0000", "336.0000"))
        self.assertEqual(canvas.xy([1.0, 1.0]), ("336.0000", "24.0000"))
        self.assertEqual(canvas.length(0.5), "156.0000")
        shifted = Canvas(np.zeros(2), np.ones(2), offset=360, precision=1)
        self.assertEqual(shifted.xy([0.0, 0.0]), ("384.0", "336.0"))

    def test_outline_is_the_hull(self):
        square = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.5], [1.0, 1.0], [0.0, 1.0]])
        hull = outline(square)
        self.assertEqual(len(hull), 4)
        self.assertNotIn([0.5, 0.5], hull.tolist())

    def test_outline_of_collinear_points(self):
        hull = outline([[2.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
        np.testing.assert_array_equal(hull, [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])

    def test_marching_squares(self):
        values = np.array([[-1.0, 1.0], [-1.0, 1.0]])
        segments = marching_squares(values, origin=[0.0, 0.0], cell_size=1.0)
        self.assertEqual(len(segments), 1)
        ends = sorted(tuple(p.tolist()) for p in segments[0])
        self.assertEqual(ends, [(0.0, 0.5), (1.0, 0.5)])

    def test_marching_squares_saddle(self):
        values = np.array([[1.0, -1.0], [-1.0, 1.0]])
        self.assertEqual(len(marching_squares(values, origin=[0.0, 0.0], cell_size=1.0)), 2)

    def test_marching_squares_level(self):
        values = np.array([[0.0, 2.0], [0.0, 2.0]])
        segments = marching_squares(values, origin=[1.0, 1.0], cell_size=0.5, level=1.0)
        ends = sorted(tuple(p.tolist()) for p in segments[0])
        self.assertEqual(ends, [(1.0, 1.25), (1.5, 1.25)])


class GoldenTraceTest(BaseTest):
    def test_overview(self):
        scenario, result = rod_scene()
        rendered = TraceBuilder(scenario, result, precision=1).overview()
        self.assertEqual(rendered, (GOLDEN / "rod_overview.svg").read_text())

    def test_force_diagram(self):
        scenario, result = rod_scene()
        rendered = TraceBuilder(scenario, result, precision=1).forces(0)
        self.assertEqual(rendered, (GOLDEN / "rod_forces_000.svg").read_text())
