"""Resolution sweep: Dice and analytic cost for both architectures."""

import logging
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ..baseline import GlobalModelConfig
from ..cascade import CascadeConfig, resize_task, scale_cascade
from ..data.task import TaskInstance
from ..numerics import ParamSet
from ..object_models import DiceResult, FlopsReport
from .flops import flops_cascade_at, flops_global
from .runner import cascade_predictor, evaluate_episodes, global_predictor

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "resolution",
    "arch",
    "dice_mean",
    "dice_std",
    "n",
    "flops_total",
    "flops_attention",
    "flops_encoder",
    "flops_decoder",
    "flops_other",
]


def _row(report: FlopsReport, dice: Optional[DiceResult]) -> list:
    return [
        report.resolution,
        report.arch,
        dice.mean if dice else np.nan,
        dice.std if dice else np.nan,
        dice.n if dice else 0,
        report.total,
        report.attention,
        report.encoder,
        report.decoder,
        report.other,
    ]


def benchmark_sweep(
    resolutions: Sequence[int],
    cascade_config: CascadeConfig,
    global_config: GlobalModelConfig,
    n_context: int = 3,
    tasks: Sequence[TaskInstance] = (),
    cascade_params: Optional[ParamSet] = None,
    global_params: Optional[ParamSet] = None,
    seed: int = 0,
    jobs: int = 1,
) -> pd.DataFrame:
    """One row per (resolution, architecture).

    Dice columns are filled only where parameters are given; the dense model
    is skipped above its resolution cap.
    """
    rows = []
    for r in resolutions:
        scaled_tasks = [resize_task(t, r) for t in tasks] if tasks else []

        cascade_dice = None
        if cascade_params is not None and scaled_tasks:
            predict = cascade_predictor(scale_cascade(cascade_config, r), cascade_params, seed)
            cascade_dice, _ = evaluate_episodes(scaled_tasks, predict, "cascade", jobs)
        rows.append(_row(flops_cascade_at(cascade_config, r, n_context), cascade_dice))

        global_dice = None
        if global_params is not None and scaled_tasks:
            if r > global_config.resolution_cap:
                logger.warning("r=%d is above the dense baseline cap %d; Dice left empty", r, global_config.resolution_cap)
            else:
                predict = global_predictor(global_config.model_copy(update={"resolution": r}), global_params)
                global_dice, _ = evaluate_episodes(scaled_tasks, predict, "global", jobs)
        rows.append(_row(flops_global(global_config, r, n_context), global_dice))
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def crossover_resolution(sweep: pd.DataFrame) -> Optional[int]:
    """First resolution at which the cascade costs fewer FLOPs than the dense model."""
    totals = sweep.pivot(index="resolution", columns="arch", values="flops_total").sort_index()
    cheaper = totals[totals["cascade"] < totals["global"]]
    return int(cheaper.index[0]) if len(cheaper) else None
