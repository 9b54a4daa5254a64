from pathlib import Path
from typing import Any

from django.core.management.base import CommandError, CommandParser

from ...results import load_result
from ...states import EXIT_ERROR
from ...utils import format_float
from ...verifier import verify
from ..base import StocsCommand


class Command(StocsCommand):
    help = "Audit a result against the full contact model."

    def add_arguments(self, parser: CommandParser) -> None:
        self.add_scenario_argument(parser)
        parser.add_argument("result", type=Path, help="Result JSON written by `solve`")
        parser.add_argument("--strict", action="store_true", help="Halve every tolerance")

    def handle(self, *args: Any, **options: Any) -> None:
        self.configure_logging(options)
        scenario = self.load_scenario(options)
        with self.translate_errors():
            result = load_result(options["result"])
            report = verify(scenario, result, strict=options["strict"])

        rows = [[c.name, format_float(c.value, 8), format_float(c.limit, 8), "pass" if c.passed else "FAIL", c.detail] for c in report.checks]
        self.write_table(["check", "value", "limit", "verdict", "detail"], rows)
        if not report.passed:
            raise CommandError(f"Verification failed: {', '.join(report.failed)}", returncode=EXIT_ERROR)
        self.stdout.write(self.style.SUCCESS("Verification passed."))
