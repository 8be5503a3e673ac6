"""Training loop for both architectures with bit-exact resume."""

import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Union

import pandas as pd
import yaml
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from .baseline import GlobalModelConfig, global_logits
from .cascade import CascadeConfig, level_loss, level_losses, resample_mask
from .data.synthetic import resample_context
from .data.task import TaskInstance
from .errors import CheckpointError, DatasetError, TrainingDivergedError
from .graph import forward
from .numerics import Adam, ParamSet, RngStream, backward, load_params, recording, save_params
from .numerics import functional as F
from .object_models import Arch

logger = logging.getLogger(__name__)

TRAIN_STREAM = 0x7A1
PARAMS_FILE = "params.pckt"
OPTIMIZER_FILE = "optimizer.pckt"
STATE_FILE = "state.yaml"
LOG_FILE = "train_log.csv"


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    arch: Arch = "cascade"
    steps: int = Field(default=5000, ge=1)
    lr: float = Field(default=1e-3, gt=0.0)
    checkpoint_every: int = Field(default=500, ge=1)
    context_resample: bool = False
    progress: bool = True


class TrainResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    checkpoint: Path
    log: pd.DataFrame
    steps: int


def log_columns(arch: Arch, n_levels: int) -> List[str]:
    if arch == "global":
        return ["step", "total_loss"]
    return ["step", "total_loss"] + [f"level_{i}_loss" for i in range(n_levels)]


def step_losses(
    task: TaskInstance,
    arch: Arch,
    model_config: Union[CascadeConfig, GlobalModelConfig],
    params: ParamSet,
    rng: RngStream,
):
    """(total, per-level) losses for one episode; must run inside ``recording()``."""
    if arch == "global":
        logits = global_logits(task, model_config, params)
        loss = level_loss(logits, resample_mask(task.target_mask, logits.shape[-1]))
        return loss, []
    pyramid = forward(task, model_config, params, rng)
    losses = level_losses(pyramid, task.target_mask)
    total = losses[0]
    for loss in losses[1:]:
        total = F.add(total, loss)
    return total, losses


def save_training_state(out_dir: Path, step: int, params: ParamSet, optimizer: Adam, log_rows: Sequence[list], columns):
    out_dir.mkdir(parents=True, exist_ok=True)
    save_params(out_dir / PARAMS_FILE, params)
    optimizer.save(out_dir / OPTIMIZER_FILE)
    pd.DataFrame(list(log_rows), columns=columns).to_csv(out_dir / LOG_FILE, index=False, float_format="%.17g")
    (out_dir / STATE_FILE).write_text(yaml.safe_dump({"step": step}), encoding="utf-8")


def load_training_state(out_dir: Path, params: ParamSet, optimizer: Adam, columns) -> tuple:
    """Restore params and optimiser; returns (next step, log rows so far)."""
    try:
        state = yaml.safe_load((out_dir / STATE_FILE).read_text(encoding="utf-8"))
        step = int(state["step"])
    except (OSError, yaml.YAMLError, KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{out_dir}: unreadable training state ({exc})") from exc
    load_params(out_dir / PARAMS_FILE, params)
    optimizer.load(out_dir / OPTIMIZER_FILE)
    log = pd.read_csv(out_dir / LOG_FILE, float_precision="round_trip")
    if list(log.columns) != list(columns):
        raise CheckpointError(f"{out_dir / LOG_FILE}: columns {list(log.columns)} do not match {list(columns)}")
    rows = [list(r) for r in log.itertuples(index=False)][:step]
    return step, rows


def train(
    tasks: Sequence[TaskInstance],
    model_config: Union[CascadeConfig, GlobalModelConfig],
    params: ParamSet,
    config: TrainConfig,
    seed: int,
    out_dir: Union[str, Path],
    resume: bool = True,
    stop_after: Optional[int] = None,
) -> TrainResult:
    """Adam on one episode per step.

    Step ``s`` draws everything it needs from ``RngStream(seed, TRAIN_STREAM).child(s)``,
    so a run resumed from a checkpoint continues exactly as an uninterrupted one.
    ``stop_after`` ends the run early (after that many total steps) without
    changing what each step does.
    """
    if not tasks:
        raise DatasetError("training split is empty")
    out_dir = Path(out_dir)
    tasks = sorted(tasks, key=lambda t: t.episode_id)
    n_levels = len(model_config.levels) if config.arch == "cascade" else 0
    columns = log_columns(config.arch, n_levels)
    optimizer = Adam(params, lr=config.lr)

    start, rows = 0, []
    if resume and (out_dir / STATE_FILE).is_file():
        start, rows = load_training_state(out_dir, params, optimizer, columns)
        logger.info("resuming from step %d in %s", start, out_dir)
    if config.arch == "cascade" and model_config.noise_enabled is False:
        logger.warning("training with selection noise disabled")

    end = config.steps if stop_after is None else min(config.steps, stop_after)
    base = RngStream(seed, TRAIN_STREAM)
    for step in tqdm(range(start, end), desc=f"train[{config.arch}]", disable=not config.progress, initial=start, total=end):
        rng = base.child(step)
        task = tasks[int(rng.child(0).integers(0, len(tasks)))]
        if config.context_resample:
            task = resample_context(task, tasks, rng.child(1))
        with recording() as tape:
            total, losses = step_losses(task, config.arch, model_config, params, rng.child(2))
            value = total.item()
            if not math.isfinite(value):
                raise TrainingDivergedError(step, value)
            grads = backward(total, params)
        tape.reset()
        optimizer.step(grads)
        rows.append([step, value] + [loss.item() for loss in losses])
        if (step + 1) % config.checkpoint_every == 0:
            save_training_state(out_dir, step + 1, params, optimizer, rows, columns)
            logger.debug("checkpoint at step %d", step + 1)

    save_training_state(out_dir, end, params, optimizer, rows, columns)
    log = pd.DataFrame(rows, columns=columns)
    logger.info("trained %s for %d steps; checkpoint %s", config.arch, end, out_dir / PARAMS_FILE)
    return TrainResult(checkpoint=out_dir / PARAMS_FILE, log=log, steps=end)
