"""
Benchmark runs over scenario lists and oracle variants.

Each row reports the solve outcome together with the complementarity census of the final
instantiated problem and of the all-points problem on the same scenario.
"""

from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass
from typing import IO, Any
import csv
import logging
import time

from .exceptions import SolverFailure
from .oracles import ORACLE_SUITE
from .program import vanilla_census
from .scenarios import Scenario
from .solver import StocsConfig, solve
from .verifier import verify

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleVariant:
    label: str
    overrides: dict[str, Any]


@dataclass(frozen=True)
class BenchRow:
    scenario: str
    oracle: str
    points: int
    outer_iters: int
    mean_index_points: float
    time_s: float
    status: str
    verified: bool
    vanilla_cc_rows: int
    stocs_cc_rows: int
    cc_ratio: float


BENCH_COLUMNS = [name for name in BenchRow.__dataclass_fields__]


def suite_variants() -> list[OracleVariant]:
    return [OracleVariant(label, {"oracle": code, "time_smoothing": ts, "disturbances": list(sd)}) for label, code, ts, sd in ORACLE_SUITE]


def single_variant(code: str | None) -> OracleVariant:
    return OracleVariant(code or "default", {"oracle": code} if code else {})


def bench_scenario(scenario: Scenario, variant: OracleVariant) -> BenchRow:
    config = StocsConfig.build(scenario.solver, variant.overrides)
    vanilla = vanilla_census(scenario)
    began = time.perf_counter()
    try:
        result = solve(scenario, config)
    except SolverFailure as e:
        logger.error("Bench run of Scenario[%s] with Oracle[%s] failed: %s", scenario.name, variant.label, e)
        return BenchRow(
            scenario=scenario.name,
            oracle=variant.label,
            points=len(scenario.cloud),
            outer_iters=len(e.stats),
            mean_index_points=e.result.mean_index_points if e.result else 0.0,
            time_s=time.perf_counter() - began,
            status="error",
            verified=False,
            vanilla_cc_rows=vanilla,
            stocs_cc_rows=e.result.complementarity_rows if e.result else 0,
            cc_ratio=0.0,
        )
    elapsed = time.perf_counter() - began
    verified = result.converged and verify(scenario, result).passed
    rows = result.complementarity_rows
    return BenchRow(
        scenario=scenario.name,
        oracle=variant.label,
        points=len(scenario.cloud),
        outer_iters=result.outer_iterations,
        mean_index_points=result.mean_index_points,
        time_s=elapsed,
        status=result.status.value,
        verified=verified,
        vanilla_cc_rows=vanilla,
        stocs_cc_rows=rows,
        cc_ratio=vanilla / rows if rows else float("inf"),
    )


def run_bench(scenarios: Iterable[Scenario], variants: Sequence[OracleVariant]) -> list[BenchRow]:
    rows = []
    for scenario in scenarios:
        for variant in variants:
            row = bench_scenario(scenario, variant)
            logger.info("Bench Scenario[%s] Oracle[%s]: %s in %s outer iterations.", row.scenario, row.oracle, row.status, row.outer_iters)
            rows.append(row)
    return rows


def write_bench_csv(target: IO[str], rows: Sequence[BenchRow]) -> None:
    writer = csv.DictWriter(target, fieldnames=BENCH_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow(asdict(row))
