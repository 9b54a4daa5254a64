from pathlib import Path
from typing import Any
import io

from django.core.management.base import CommandParser

from ...bench import run_bench, single_variant, suite_variants, write_bench_csv
from ...scenarios import load_scenario
from ..base import StocsCommand


class Command(StocsCommand):
    help = "Solve a list of scenarios and report iterations, index points, timing and complementarity census as CSV."

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("scenarios", nargs="+", type=Path)
        parser.add_argument("--assets", type=Path, default=None)
        parser.add_argument("--oracle", help="Oracle code for every run")
        parser.add_argument("--oracle-suite", action="store_true", help="Run the MVO / TAMVO variant family instead")
        parser.add_argument("--out", type=Path, help="CSV destination; stdout when omitted")

    def handle(self, *args: Any, **options: Any) -> None:
        self.configure_logging(options)
        variants = suite_variants() if options["oracle_suite"] else [single_variant(options["oracle"])]
        with self.translate_errors():
            scenarios = [load_scenario(path, asset_root=options["assets"]) for path in options["scenarios"]]
            rows = run_bench(scenarios, variants)
        if options["out"]:
            with open(options["out"], "w", newline="") as f:
                write_bench_csv(f, rows)
        else:
            buffer = io.StringIO()
            write_bench_csv(buffer, rows)
            self.stdout.write(buffer.getvalue(), ending="")
