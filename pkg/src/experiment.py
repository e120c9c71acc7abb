"""Clipped-versus-unclipped twin experiments and the regularization sweep."""

import csv
import logging
import math
from dataclasses import dataclass
from typing import IO, Iterable, List, Optional, Sequence

from .accountant import AccountantConfig, EmptyReportError, InfeasiblePairsError, to_budget
from .bottleneck import TrainConfig, TrainingDivergedError, accuracy, evaluate_privacy, train
from .clipping import ClipConfig
from .divergence import PairsMode

# Clip budget used when a training config carries none
DEMO_CLIP = ClipConfig(c_mu=2.0, c_alpha_min=0.05, c_alpha_max=0.5, lam=1.1)

SWEEP_WEIGHTS = (1e-3, 1e-2, 1e-1, 1.0)

STATUS_OK = "ok"
STATUS_INFEASIBLE = "infeasible"
STATUS_ABORTED = "aborted"


@dataclass(frozen=True)
class ExperimentRow:
    variant: str
    seed: int
    weight: float
    accuracy: float
    rd_max: float
    rd_avg: float
    epsilon: float
    status: str


def run_variant(
    cfg: TrainConfig,
    variant: str,
    accountant: Optional[AccountantConfig] = None,
    mode: PairsMode = PairsMode.VS_ALL_PAIRS,
    workers: int = 1,
) -> ExperimentRow:
    """
    Train one model, then measure held-out accuracy and the privacy budget over held-out posteriors.

    A non-finite training loss yields an "aborted" row; infeasible pairs yield epsilon = inf.
    """
    accountant = accountant or AccountantConfig(lam=cfg.lam)

    try:
        run = train(cfg)
    except TrainingDivergedError as e:
        logging.warning("Abort %s run (seed %d): %s", variant, cfg.seed, e)

        return ExperimentRow(variant, cfg.seed, cfg.lambda_g, math.nan, math.inf, math.nan, math.inf, STATUS_ABORTED)

    task = run.task
    held_out_accuracy = accuracy(run.model, task.x_test, task.y_test, cfg)
    eval_x = task.x_test[: cfg.privacy_examples]
    report = evaluate_privacy(run.model, eval_x, cfg, mode, lam=accountant.lam, workers=workers)

    try:
        epsilon = to_budget(report, accountant).epsilon
        status = STATUS_OK
    except (InfeasiblePairsError, EmptyReportError) as e:
        logging.warning("No budget for %s run (seed %d): %s", variant, cfg.seed, e)
        epsilon = math.inf
        status = STATUS_INFEASIBLE

    return ExperimentRow(
        variant, cfg.seed, cfg.lambda_g, held_out_accuracy, report.rd_max, report.rd_avg, epsilon, status
    )


def twin_experiment(
    cfg: TrainConfig,
    seed: Optional[int] = None,
    clip: Optional[ClipConfig] = None,
    accountant: Optional[AccountantConfig] = None,
    workers: int = 1,
) -> List[ExperimentRow]:
    """
    Train the same configuration twice on the same seed, once without and once with clipping.

    Args:
        cfg: Base training configuration
        seed: Overrides cfg.seed
        clip: Clip budget of the clipped twin; defaults to cfg.clip, then to DEMO_CLIP
        accountant: Budget conversion settings
        workers: Threads for pairwise evaluation

    Returns:
        Rows for the unclipped and the clipped run, in that order
    """
    base = cfg.replace(seed=seed) if seed is not None else cfg
    clip = clip or cfg.clip or DEMO_CLIP

    logging.info("Run twin experiment for seed %d", base.seed)

    return [
        run_variant(base.replace(clip=None), "unclipped", accountant, workers=workers),
        run_variant(base.replace(clip=clip), "clipped", accountant, workers=workers),
    ]


def demo(
    cfg: TrainConfig,
    seeds: Iterable[int],
    clip: Optional[ClipConfig] = None,
    accountant: Optional[AccountantConfig] = None,
    workers: int = 1,
) -> List[ExperimentRow]:
    rows = []

    for seed in seeds:
        rows.extend(twin_experiment(cfg, seed, clip, accountant, workers))

    return rows


def sweep(
    cfg: TrainConfig,
    weights: Sequence[float] = SWEEP_WEIGHTS,
    clip: Optional[ClipConfig] = None,
    accountant: Optional[AccountantConfig] = None,
    workers: int = 1,
) -> List[ExperimentRow]:
    """Twin experiment for each regularizer weight, with lambda_g = lambda_d = weight."""
    rows = []

    for weight in weights:
        logging.info("Sweep regularizer weight %s", weight)
        rows.extend(twin_experiment(cfg.replace(lambda_g=weight), clip=clip, accountant=accountant, workers=workers))

    return rows


_COLUMNS = ("variant", "seed", "weight", "accuracy", "rd_max", "rd_avg", "epsilon", "status")


def _cells(row: ExperimentRow) -> List[str]:
    return [
        row.variant,
        str(row.seed),
        f"{row.weight:g}",
        f"{row.accuracy:.4f}",
        f"{row.rd_max:.6g}",
        f"{row.rd_avg:.6g}",
        f"{row.epsilon:.6g}",
        row.status,
    ]


def format_table(rows: Sequence[ExperimentRow]) -> str:
    """Render rows as a fixed-width comparison table."""
    table = [list(_COLUMNS)] + [_cells(row) for row in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(_COLUMNS))]

    lines = ["  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip() for line in table]

    return "\n".join(lines) + "\n"


def write_rows(rows: Sequence[ExperimentRow], target: IO[str]) -> None:
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(_COLUMNS)

    for row in rows:
        writer.writerow(
            [row.variant, row.seed, repr(row.weight)]
            + [f"{value:.17g}" for value in (row.accuracy, row.rd_max, row.rd_avg, row.epsilon)]
            + [row.status]
        )
