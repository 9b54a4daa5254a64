from pathlib import Path
from typing import Any

from django.core.management.base import CommandParser

from ...results import load_result
from ...traces import emit_trace
from ..base import StocsCommand


class Command(StocsCommand):
    help = "Render SVG traces of a result."

    def add_arguments(self, parser: CommandParser) -> None:
        self.add_scenario_argument(parser)
        parser.add_argument("result", type=Path)
        parser.add_argument("out_dir", type=Path)
        parser.add_argument("--verified", action="store_true", help="Omit the UNVERIFIED watermark")

    def handle(self, *args: Any, **options: Any) -> None:
        self.configure_logging(options)
        scenario = self.load_scenario(options)
        with self.translate_errors():
            result = load_result(options["result"])
        written = emit_trace(scenario, result, options["out_dir"], verified=options["verified"])
        self.stdout.write(f"Wrote {len(written)} files to {options['out_dir']}")
