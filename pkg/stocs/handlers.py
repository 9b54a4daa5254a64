from typing import Any
import logging

from django.dispatch import receiver

from .signals import index_points_added, outer_iteration_completed, solve_finished
from .solver import IterationStats, StocsResult

logger = logging.getLogger(__name__)


@receiver(index_points_added)
def log_index_points_added(
    sender: type[Any],
    iteration: int,
    added: dict[int, list[Any]],
    **kwargs: Any,
) -> None:
    logger.debug(
        "Oracle[%s] added %s index points across %s steps at Iteration[%s].",
        getattr(sender, "code", sender),
        sum(len(points) for points in added.values()),
        len(added),
        iteration,
    )


@receiver(outer_iteration_completed)
def log_outer_iteration(
    sender: type[Any],
    stats: IterationStats,
    **kwargs: Any,
) -> None:
    if stats.alpha == 0.0:
        logger.warning(
            "Outer Iteration[%s] made no progress: the line search rejected every step (%s new index points).",
            stats.iteration,
            stats.points_added,
        )
    if stats.inner_no_progress:
        logger.warning("Outer Iteration[%s]: the inner solve could not reduce its merit.", stats.iteration)


@receiver(solve_finished)
def log_solve_summary(
    sender: type[Any],
    result: StocsResult,
    **kwargs: Any,
) -> None:
    """
    Summarize a finished solve in the same terms as the benchmark tables: outer iterations,
    mean index points per step and total complementarity rows.
    """
    logger.info(
        "Solve finished with status %s after %s outer iterations; %.2f index points per step, %s complementarity rows.",
        result.status.value,
        result.outer_iterations,
        result.mean_index_points,
        result.complementarity_rows,
    )
