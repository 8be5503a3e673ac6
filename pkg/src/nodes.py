"""Node functions for one level of the cascade graph."""

import logging
from typing import List, Sequence

import numpy as np
from scipy.special import expit

from .cascade import CascadeConfig, LevelConfig, aggregate_patches, fuse_levels
from .model import PatchTokens, TokenKind, attention_stack, decode_patches, encode_patches
from .numerics import ParamSet
from .numerics import functional as F
from .sampling import (
    PatchBox,
    boundary_distance_weights,
    candidate_grid,
    entropy_map,
    patch_mean_weights,
    sample_patches,
)
from .state import LevelState

logger = logging.getLogger(__name__)


def crop_patches(image: np.ndarray, boxes: Sequence[PatchBox]) -> np.ndarray:
    return np.stack([image[b.y0 : b.y0 + b.size, b.x0 : b.x0 + b.size] for b in boxes])


def grid_coords(boxes: Sequence[PatchBox], stride: int) -> np.ndarray:
    """Patch-grid (y, x) coordinates used by the rotary embeddings."""
    return np.array([(b.y0 / stride, b.x0 / stride) for b in boxes], dtype=np.float64).reshape(-1, 2)


class CascadeNodes:
    """Container for the node functions of a level.

    Each node reads the fields it needs from the ``LevelState`` and returns
    the fields it adds.
    """

    def __init__(self, config: CascadeConfig, level: LevelConfig, params: ParamSet):
        self.config = config
        self.level = level
        self.params = params

    def _target_weights(self, state: LevelState, grid) -> np.ndarray:
        prev = state.get("prev")
        if prev is None:
            return np.ones(len(grid))
        # Selection is not differentiated, so the previous logits are read as plain values.
        upsampled = F.resize_array(prev.combined.numpy(), self.level.resolution, "bilinear")
        return patch_mean_weights(entropy_map(expit(upsampled)), grid)

    def _checked_weights(self, weights: np.ndarray, k: int):
        """Swap in uniform weights when the entropy cannot rank K candidates."""
        level = self.level
        if weights.max() <= self.config.entropy_floor:
            logger.warning(
                "level r=%d: previous prediction confident everywhere (max weight %.3g); sampling uniformly",
                level.resolution,
                weights.max(),
            )
            return np.ones(len(weights)), True
        positive = int(np.count_nonzero(weights > 0))
        if positive < min(k, len(weights)):
            logger.warning(
                "level r=%d: only %d of %d candidates have positive weight, K=%d; sampling uniformly",
                level.resolution,
                positive,
                len(weights),
                k,
            )
            return np.ones(len(weights)), True
        return weights, False

    def sampling_node(self, state: LevelState) -> dict:
        level = self.level
        rng = state["rng"]
        noise = self.config.noise_enabled
        grid = candidate_grid(level.resolution, level.patch_size, level.stride)

        weights, fallback = self._checked_weights(self._target_weights(state, grid), level.k_target)
        target = sample_patches(weights, grid, level.k_target, rng.child(0), noise)

        context = []
        for i, mask in enumerate(state["inputs"].context_masks):
            context_weights = boundary_distance_weights(mask, grid)
            context.append(sample_patches(context_weights, grid, level.k_context, rng.child(1 + i), noise))
        return {"grid": grid, "target_patches": target, "context_patches": context, "uniform_fallback": fallback}

    def encoding_node(self, state: LevelState) -> dict:
        inputs = state["inputs"]
        target_boxes = state["target_patches"].boxes
        images: List[np.ndarray] = [crop_patches(inputs.target_image, target_boxes)]
        labels: List[np.ndarray] = [np.zeros((len(target_boxes), self.level.patch_size, self.level.patch_size))]
        coords = [grid_coords(target_boxes, self.level.stride)]
        kinds = [np.full(len(target_boxes), int(TokenKind.TARGET))]
        for pair, sampled in enumerate(state["context_patches"]):
            boxes = sampled.boxes
            images.append(crop_patches(inputs.context_images[pair], boxes))
            labels.append(crop_patches(inputs.context_masks[pair], boxes))
            coords.append(grid_coords(boxes, self.level.stride))
            kinds.append(np.full(len(boxes), int(TokenKind.CONTEXT_JOINT)))

        embeddings, skips = encode_patches(
            self.config.model, self.params, np.concatenate(images), np.concatenate(labels), self.level.resolution
        )
        tokens = PatchTokens(embeddings=embeddings, coords=np.concatenate(coords), kinds=np.concatenate(kinds))
        return {"tokens": tokens, "target_skips": skips.take(slice(0, len(target_boxes)))}

    def attention_node(self, state: LevelState) -> dict:
        attended = attention_stack(self.config.model, self.params, state["tokens"])
        n_target = len(state["target_patches"].selected)
        return {"attended": F.getitem(attended, slice(0, n_target))}

    def decoding_node(self, state: LevelState) -> dict:
        logits = decode_patches(self.config.model, self.params, state["attended"], state["target_skips"])
        return {"patch_logits": logits}

    def aggregation_node(self, state: LevelState) -> dict:
        logits, coverage = aggregate_patches(
            state["patch_logits"], state["target_patches"].boxes, self.level.resolution
        )
        return {"logits": logits, "coverage": coverage}

    def fusion_node(self, state: LevelState) -> dict:
        prev = state.get("prev")
        if prev is None:
            return {"combined": state["logits"]}
        return {"combined": fuse_levels(prev.combined, state["logits"], state["coverage"])}
