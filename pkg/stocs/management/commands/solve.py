from pathlib import Path
from typing import Any

from django.core.management.base import CommandError, CommandParser

from ...exceptions import SolverFailure
from ...results import save_result, write_stats_csv
from ...solver import StocsConfig, solve
from ...states import EXIT_ERROR, EXIT_NOT_CONVERGED, BalanceMode
from ...traces import emit_trace
from ..base import StocsCommand, float_list

# Command-line option -> StocsConfig field
OVERRIDES = {
    "oracle": "oracle",
    "sd": "disturbances",
    "ts": "time_smoothing",
    "dmax": "d_max",
    "dedup": "dedup",
    "mode": "mode",
    "sigma0": "sigma0",
    "sigma_decay": "sigma_decay",
    "sigma_min": "sigma_min",
    "inner_iters": "inner_iters",
    "penalty0": "penalty0",
    "weight_u": "weight_u",
    "weight_v": "weight_v",
    "weight_z": "weight_z",
    "goal_tol_pos": "goal_tol_pos",
    "goal_tol_rot": "goal_tol_rot",
    "max_outer": "max_outer",
}


class Command(StocsCommand):
    help = "Plan a contact-rich trajectory for a scenario."

    def add_arguments(self, parser: CommandParser) -> None:
        self.add_scenario_argument(parser)
        parser.add_argument("--oracle", help="Oracle code, e.g. mvo, tamvo or all")
        parser.add_argument("--sd", type=float_list, help="Comma-separated spatial disturbances")
        parser.add_argument("--ts", type=int, help="Time smoothing window")
        parser.add_argument("--dmax", type=float, help="Oracle distance gate")
        parser.add_argument("--dedup", type=float, help="Oracle dedup threshold")
        parser.add_argument("--mode", choices=[m.value for m in BalanceMode])
        parser.add_argument("--sigma0", type=float)
        parser.add_argument("--sigma-decay", type=float)
        parser.add_argument("--sigma-min", type=float)
        parser.add_argument("--inner-iters", type=int)
        parser.add_argument("--penalty0", type=float)
        parser.add_argument("--weight-u", type=float)
        parser.add_argument("--weight-v", type=float)
        parser.add_argument("--weight-z", type=float)
        parser.add_argument("--goal-tol-pos", type=float)
        parser.add_argument("--goal-tol-rot", type=float)
        parser.add_argument("--max-outer", type=int)
        parser.add_argument("--out", type=Path, help="Write the result JSON here")
        parser.add_argument("--stats", type=Path, help="Write per-iteration statistics CSV here")
        parser.add_argument("--trace", type=Path, help="Write SVG traces into this directory")

    def handle(self, *args: Any, **options: Any) -> None:
        self.configure_logging(options)
        scenario = self.load_scenario(options)
        overrides = {field: options[option] for option, field in OVERRIDES.items() if options.get(option) is not None}
        with self.translate_errors():
            config = StocsConfig.build(scenario.solver, overrides)
        try:
            result = solve(scenario, config)
        except SolverFailure as e:
            if options["out"] and e.result is not None:
                save_result(options["out"], e.result)
            raise CommandError(f"Solver failure: {e}", returncode=EXIT_ERROR) from e

        if options["out"]:
            save_result(options["out"], result)
        if options["stats"]:
            write_stats_csv(options["stats"], result.stats)
        if options["trace"]:
            emit_trace(scenario, result, options["trace"])

        self.stdout.write(
            f"{scenario.name}: {result.status.value} after {result.outer_iterations} outer iterations, "
            f"{result.mean_index_points:.2f} index points per step"
        )
        if not result.converged:
            raise CommandError(result.message, returncode=EXIT_NOT_CONVERGED)
        self.stdout.write(self.style.SUCCESS(result.message))
