from dataclasses import replace
from pathlib import Path
import io
import json
import tempfile

from rest_framework.serializers import ValidationError
import numpy as np

from ..exceptions import AssetFormatError, ResultVersionError
from ..results import STATS_COLUMNS, load_result, result_to_dict, save_result, stats_rows, write_stats_csv
from ..solver import IterationStats
from ..states import SolveStatus
from .base import BaseTest, make_scenario, resting_result


def sample_stats():
    return [
        IterationStats(
            iteration=k,
            index_counts=[k, k + 1, 1],
            mean_index_points=(2 * k + 2) / 3,
            points_added=2 if k == 1 else 0,
            merit_before=0.1 + 0.2 * k,
            merit_after=1 / 3 + k,
            alpha=0.5**k,
            sigma=1e-2 * 0.2 ** (k - 1),
            residuals={"dynamics": 1e-17 * k, "balance": 2 / 7},
            inner_no_progress=k == 2,
            wall_time=0.25,
        )
        for k in (1, 2)
    ]


def sample_result():
    scenario = make_scenario()
    result = resting_result(scenario, status=SolveStatus.NOT_CONVERGED)
    q = result.trajectory.q.copy()
    q[1] += np.array([1 / 3, -1e-300, np.pi])
    return replace(
        result,
        trajectory=replace(result.trajectory, q=q),
        stats=sample_stats(),
        convergence={"step": {"value": 0.1 + 0.2, "limit": 3e-4, "passed": False}},
        metadata={"scenario": {"name": scenario.name}, "config": {"oracle": "mvo"}},
        message="Not converged after 2 outer iterations.",
    )


class ResultFileTest(BaseTest):
    def setUp(self):
        super().setUp()
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()
        super().tearDown()

    def test_save_and_load_is_exact(self):
        original = sample_result()
        path = self.dir / "nested" / "result.json"
        save_result(path, original)
        loaded = load_result(path)
        self.assertEqual(loaded.status, SolveStatus.NOT_CONVERGED)
        self.assertEqual(loaded.message, original.message)
        np.testing.assert_array_equal(loaded.trajectory.q, original.trajectory.q)
        np.testing.assert_array_equal(loaded.trajectory.v, original.trajectory.v)
        np.testing.assert_array_equal(loaded.trajectory.u, original.trajectory.u)
        for a, b in zip(loaded.forces.values, original.forces.values, strict=True):
            np.testing.assert_array_equal(a, b)
        self.assertEqual(loaded.index_set, original.index_set)
        self.assertEqual(loaded.stats, original.stats)
        self.assertEqual(loaded.convergence, original.convergence)
        self.assertEqual(loaded.metadata, original.metadata)
        self.assertEqual(result_to_dict(loaded), result_to_dict(original))

    def test_version_mismatch(self):
        path = self.dir / "old.json"
        data = result_to_dict(sample_result())
        data["schema_version"] = 2
        path.write_text(json.dumps(data))
        with self.assertRaises(ResultVersionError) as cm:
            load_result(path)
        self.assertEqual(cm.exception.found, 2)

    def test_malformed_json(self):
        path = self.dir / "broken.json"
        path.write_text('{\n"status": "converged",\n"message" "x"}')
        with self.assertRaises(AssetFormatError) as cm:
            load_result(path)
        self.assertEqual(cm.exception.line, 3)

    def test_missing_trajectory_entries(self):
        path = self.dir / "partial.json"
        data = result_to_dict(sample_result())
        del data["trajectory"]["v"]
        path.write_text(json.dumps(data))
        with self.assertRaises(ValidationError):
            load_result(path)

    def test_missing_file(self):
        with self.assertRaises(AssetFormatError):
            load_result(self.dir / "missing.json")


class StatsTest(BaseTest):
    def test_rows(self):
        header, rows = stats_rows(sample_stats())
        self.assertEqual(header, [*STATS_COLUMNS, "residual_balance", "residual_dynamics"])
        self.assertEqual(rows[0][:4], [1, 4 / 3, 4, 2])
        self.assertEqual(rows[1][8], 1)

    def test_csv(self):
        buf = io.StringIO()
        write_stats_csv(buf, sample_stats())
        lines = buf.getvalue().splitlines()
        self.assertEqual(len(lines), 3)
        self.assertTrue(lines[0].startswith("iteration,mean_index_points,total_index_points"))
        self.assertTrue(lines[0].endswith("residual_balance,residual_dynamics"))
