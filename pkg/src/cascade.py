"""Cascade schedule, patch aggregation, level fusion and the multi-level loss."""

import logging
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .data.task import TaskInstance
from .errors import ConfigError, MaskValueError, ResolutionMismatchError, ShapeMismatchError
from .model import ModelConfig
from .numerics import Tensor
from .numerics import functional as F
from .sampling import PatchBox
from .state import LevelInputs, PredictionPyramid

logger = logging.getLogger(__name__)

DICE_SMOOTH = 1.0


class LevelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    resolution: int = Field(ge=1)
    k_target: int = Field(ge=1, description="Target patches sampled at this level")
    k_context: int = Field(ge=1, description="Patches sampled per context pair")
    patch_size: int = Field(default=8, ge=1)
    stride: int = Field(ge=1)

    @model_validator(mode="after")
    def patch_fits(self):
        if self.patch_size > self.resolution:
            raise ValueError(f"patch_size {self.patch_size} exceeds level resolution {self.resolution}")
        return self


def default_levels() -> List[LevelConfig]:
    return [
        LevelConfig(resolution=16, k_target=4, k_context=2, patch_size=8, stride=8),
        LevelConfig(resolution=32, k_target=12, k_context=4, patch_size=8, stride=4),
        LevelConfig(resolution=64, k_target=24, k_context=4, patch_size=8, stride=4),
    ]


class CascadeConfig(BaseModel):
    """The full M-level schedule plus the shared model."""

    model_config = ConfigDict(extra="forbid")

    levels: List[LevelConfig] = Field(default_factory=default_levels)
    model: ModelConfig = Field(default_factory=ModelConfig)
    noise_enabled: bool = True
    entropy_floor: float = Field(default=1e-9, ge=0.0)

    @model_validator(mode="after")
    def schedule(self):
        if not self.levels:
            raise ValueError("a cascade needs at least one level")
        resolutions = [lv.resolution for lv in self.levels]
        if any(b <= a for a, b in zip(resolutions, resolutions[1:])):
            raise ValueError(f"level resolutions must increase strictly, got {resolutions}")
        for lv in self.levels:
            if lv.patch_size != self.model.patch_size:
                raise ValueError(
                    f"level at r={lv.resolution} uses patch_size {lv.patch_size}, model expects {self.model.patch_size}"
                )
        return self

    @property
    def resolutions(self) -> List[int]:
        return [lv.resolution for lv in self.levels]


def scale_cascade(config: CascadeConfig, resolution: int) -> CascadeConfig:
    """Stretch the schedule so its finest level runs at ``resolution``.

    Patch counts, patch size and strides stay fixed; only the level
    resolutions move, proportionally to their place in the original schedule.
    """
    top = config.levels[-1].resolution
    levels = []
    for lv in config.levels:
        r = max(lv.patch_size, int(round(lv.resolution * resolution / top)))
        levels.append(lv.model_copy(update={"resolution": r}))
    try:
        return CascadeConfig(
            levels=levels, model=config.model, noise_enabled=config.noise_enabled, entropy_floor=config.entropy_floor
        )
    except ValueError as exc:
        raise ConfigError(f"cannot scale cascade to r={resolution}: {exc}") from exc


# Resampling


def _check_binary(mask: np.ndarray, what: str) -> None:
    if not np.all((mask == 0) | (mask == 1)):
        raise MaskValueError(f"{what} must be binary (0/1)")


def resample_image(image: np.ndarray, resolution: int) -> np.ndarray:
    """Area averaging when shrinking, bilinear when enlarging."""
    mode = "area" if resolution < image.shape[-1] else "bilinear"
    return F.resize_array(image, resolution, mode)


def resample_mask(mask: np.ndarray, resolution: int) -> np.ndarray:
    """Area fraction thresholded at 0.5."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape[-1] == resolution:
        return mask
    return (F.resize_array(mask, resolution, "area") >= 0.5).astype(np.float64)


def resample_task(task: TaskInstance, resolution: int) -> LevelInputs:
    return LevelInputs(
        resolution=resolution,
        target_image=resample_image(task.target_image, resolution),
        target_mask=resample_mask(task.target_mask, resolution),
        context_images=[resample_image(c.image, resolution) for c in task.context],
        context_masks=[resample_mask(c.mask, resolution) for c in task.context],
    )


# Aggregation and fusion


def aggregate_patches(patch_logits, boxes: Sequence[PatchBox], resolution: int) -> Tuple[Tensor, np.ndarray]:
    """Per-pixel mean of the patch logits covering it; 0 and uncovered elsewhere."""
    return F.average_patches(patch_logits, [b.as_tuple() for b in boxes], resolution)


def fuse_levels(prev_combined, level_logits, coverage: np.ndarray) -> Tensor:
    """upsample(prev) + coverage * level_logits, at the current level's resolution."""
    level_logits = F.as_tensor(level_logits)
    coverage = np.asarray(coverage)
    if coverage.shape != level_logits.shape:
        raise ResolutionMismatchError(
            f"coverage {coverage.shape} does not match level logits {level_logits.shape}"
        )
    upsampled = F.resize(prev_combined, level_logits.shape[-1], mode="bilinear")
    return F.add(upsampled, F.mul(level_logits, coverage.astype(np.float64)))


# Loss


def level_loss(combined_logits, gt: np.ndarray) -> Tensor:
    """Mean binary cross-entropy on logits plus soft Dice loss (smoothing 1)."""
    z = F.as_tensor(combined_logits)
    gt = np.asarray(gt, dtype=np.float64)
    if gt.shape != z.shape:
        raise ShapeMismatchError("level_loss", z.shape, gt.shape)
    _check_binary(gt, "ground-truth mask")
    # -[y log σ(z) + (1-y) log(1-σ(z))] = softplus(z) - y z
    bce = F.mean(F.sub(F.softplus(z), F.mul(z, gt)))
    p = F.sigmoid(z)
    overlap = F.sum(F.mul(p, gt))
    dice = F.div(F.add(F.mul(overlap, 2.0), DICE_SMOOTH), F.add(F.sum(p), float(gt.sum()) + DICE_SMOOTH))
    return F.add(bce, F.sub(1.0, dice))


def level_losses(pyramid: PredictionPyramid, gt: np.ndarray) -> List[Tensor]:
    """Loss of every level against the ground truth resampled to its resolution."""
    gt = np.asarray(gt, dtype=np.float64)
    _check_binary(gt, "ground-truth mask")
    return [level_loss(level.combined, resample_mask(gt, level.resolution)) for level in pyramid.levels]


def total_loss(pyramid: PredictionPyramid, gt: np.ndarray) -> Tensor:
    losses = level_losses(pyramid, gt)
    total = losses[0]
    for loss in losses[1:]:
        total = F.add(total, loss)
    return total


def resize_task(task: TaskInstance, resolution: int) -> TaskInstance:
    """The same episode rendered at another input resolution."""
    if resolution == task.resolution:
        return task
    context = [
        c.model_copy(update={"image": resample_image(c.image, resolution), "mask": resample_mask(c.mask, resolution)})
        for c in task.context
    ]
    return task.model_copy(
        update={
            "target_image": resample_image(task.target_image, resolution),
            "target_mask": resample_mask(task.target_mask, resolution),
            "context": context,
        }
    )
