from .. import signals
from ..oracles import MaximumViolationOracle
from ..solver import IterationStats, StocsSolver
from .base import BaseTest, make_scenario, resting_result


def iteration_stats(**changes):
    data = {
        "iteration": 3,
        "index_counts": [1, 1, 1],
        "mean_index_points": 1.0,
        "points_added": 0,
        "merit_before": 2.0,
        "merit_after": 1.5,
        "alpha": 0.5,
        "sigma": 1e-3,
        "residuals": {},
        "inner_no_progress": False,
        "wall_time": 0.1,
    }
    data.update(changes)
    return IterationStats(**data)


class SignalHandlerTest(BaseTest):
    def test_rejected_step_is_a_warning(self):
        with self.assertLogs("stocs.handlers", "WARNING") as cm:
            signals.outer_iteration_completed.send(sender=StocsSolver, stats=iteration_stats(alpha=0.0, inner_no_progress=True))
        self.assertEqual(len(cm.output), 2)
        self.assertIn("Outer Iteration[3] made no progress", cm.output[0])
        self.assertIn("inner solve could not reduce its merit", cm.output[1])

    def test_accepted_step_is_quiet(self):
        with self.assertNoLogs("stocs.handlers", "WARNING"):
            signals.outer_iteration_completed.send(sender=StocsSolver, stats=iteration_stats())

    def test_summary(self):
        scenario = make_scenario()
        with self.assertLogs("stocs.handlers", "INFO") as cm:
            signals.solve_finished.send(sender=StocsSolver, result=resting_result(scenario))
        self.assertIn("status converged after 0 outer iterations; 2.00 index points per step, 24 complementarity rows", cm.output[0])

    def test_index_points(self):
        with self.assertLogs("stocs.handlers", "DEBUG") as cm:
            signals.index_points_added.send(sender=MaximumViolationOracle, oracle=None, iteration=2, added={0: [1, 2], 1: [3]})
        self.assertIn("Oracle[mvo] added 3 index points across 2 steps at Iteration[2]", cm.output[0])
