from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any
import logging

from django.core.management.base import BaseCommand, CommandError, CommandParser
from rest_framework import serializers

from ..exceptions import ConfigurationError, ResultVersionError, SolverFailure
from ..scenarios import Scenario, load_scenario
from ..states import EXIT_ERROR

VERBOSITY_LEVELS = {
    0: logging.ERROR,
    1: logging.WARNING,
    2: logging.INFO,
    3: logging.DEBUG,
}


def float_list(value: str) -> list[float]:
    return [float(part) for part in value.split(",") if part.strip()]


class StocsCommand(BaseCommand):
    def add_scenario_argument(self, parser: CommandParser) -> None:
        parser.add_argument("scenario", type=Path, help="Scenario YAML file")
        parser.add_argument("--assets", type=Path, default=None, help="Asset root; overrides STOCS_ASSETS")

    def configure_logging(self, options: dict[str, Any]) -> None:
        logging.getLogger("stocs").setLevel(VERBOSITY_LEVELS.get(options.get("verbosity", 1), logging.DEBUG))

    def load_scenario(self, options: dict[str, Any]) -> Scenario:
        with self.translate_errors():
            return load_scenario(options["scenario"], asset_root=options.get("assets"))

    @contextmanager
    def translate_errors(self) -> Iterator[None]:
        try:
            yield
        except serializers.ValidationError as e:
            raise CommandError(f"Invalid input: {e.detail}", returncode=EXIT_ERROR) from e
        except (ConfigurationError, ResultVersionError, SolverFailure) as e:
            raise CommandError(str(e), returncode=EXIT_ERROR) from e

    def write_table(self, header: list[str], rows: list[list[Any]]) -> None:
        widths = [max(len(str(cell)) for cell in column) for column in zip(header, *rows, strict=True)]
        self.stdout.write("  ".join(h.ljust(w) for h, w in zip(header, widths, strict=True)))
        for row in rows:
            self.stdout.write("  ".join(str(cell).ljust(w) for cell, w in zip(row, widths, strict=True)))
