"""Dense global cross-attention baseline with one token per pixel.

Target pixels attend to each other and to every pixel of every context pair,
so attention cost grows with the fourth power of the working resolution.
"""

import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import expit

from .cascade import resample_image, resample_mask
from .data.task import TaskInstance
from .errors import ResolutionCapError
from .model import TokenKind
from .model.layers import (
    add_conv,
    add_layer_norm,
    add_linear,
    attention,
    conv,
    feedforward,
    init_attention,
    init_feedforward,
    layer_norm,
    linear,
    resolution_encoding,
)
from .numerics import ParamSet, RngStream, Tensor
from .numerics import functional as F

logger = logging.getLogger(__name__)


class GlobalModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d: int = Field(default=32, ge=4)
    layers: int = Field(default=2, ge=1)
    heads: int = Field(default=2, ge=1)
    channels: list[int] = Field(default_factory=lambda: [16, 32])
    resolution: Optional[int] = Field(default=32, ge=2, description="Working resolution; None uses the input size")
    resolution_cap: int = Field(default=128, ge=2)

    @field_validator("channels")
    @classmethod
    def two_blocks(cls, v):
        if len(v) != 2 or min(v) < 1:
            raise ValueError("channels must list two positive widths")
        return v

    @model_validator(mode="after")
    def head_dims(self):
        if self.d % self.heads or (self.d // self.heads) % 4:
            raise ValueError(f"d={self.d} must split into heads={self.heads} of a width divisible by 4")
        return self

    def tokens(self, resolution: int) -> int:
        return resolution * resolution


def init_global_model(config: GlobalModelConfig, rng: RngStream) -> ParamSet:
    c1, c2 = config.channels
    d = config.d
    params = ParamSet()
    add_conv(params, "enc.conv1", 2, c1, 3, rng.child(0))
    add_conv(params, "enc.conv2", c1, c2, 3, rng.child(1))
    add_linear(params, "enc.proj", c2, d, rng.child(2))
    for layer in range(config.layers):
        stream = rng.child(100 + layer)
        prefix = f"layers.{layer}"
        params.add(f"{prefix}.type", stream.child(0).normal(0.0, 0.02, (len(TokenKind), d)))
        add_layer_norm(params, f"{prefix}.ln_self", d)
        init_attention(params, f"{prefix}.self", d, stream.child(1))
        add_layer_norm(params, f"{prefix}.ln_cross", d)
        add_layer_norm(params, f"{prefix}.ln_ctx", d)
        init_attention(params, f"{prefix}.cross", d, stream.child(2))
        add_layer_norm(params, f"{prefix}.ln_ffn", d)
        init_feedforward(params, f"{prefix}.ffn", d, stream.child(3))
    add_layer_norm(params, "final_ln", d)
    add_linear(params, "dec.proj", d, c1, rng.child(3))
    add_conv(params, "dec.conv", 2 * c1, c1, 3, rng.child(4))
    add_conv(params, "dec.head", c1, 1, 1, rng.child(5), scale=0.01)
    return params


def _pixel_coords(r: int) -> np.ndarray:
    ys, xs = np.meshgrid(np.arange(r), np.arange(r), indexing="ij")
    return np.stack([ys.ravel(), xs.ravel()], axis=1).astype(np.float64)


def _encode_maps(config: GlobalModelConfig, params: ParamSet, images: np.ndarray, labels: np.ndarray):
    """(N, r, r) images and labels -> per-pixel tokens (N*r*r, d) and the full-res skip."""
    n, r, _ = images.shape
    x = Tensor(np.stack([images, labels], axis=1))
    skip = F.gelu(conv(params, "enc.conv1", x))
    h = F.gelu(conv(params, "enc.conv2", skip))
    c2 = h.shape[1]
    pixels = F.reshape(F.transpose(h, (0, 2, 3, 1)), (n * r * r, c2))
    tokens = F.add(linear(params, "enc.proj", pixels), resolution_encoding(r, config.d))
    return tokens, skip


def working_resolution(config: GlobalModelConfig, task: TaskInstance) -> int:
    r = config.resolution or task.resolution
    if r > config.resolution_cap:
        raise ResolutionCapError(
            f"dense baseline capped at r={config.resolution_cap}, asked for r={r}; "
            "use the analytic cost model (bench-flops --cost-only) for larger resolutions"
        )
    return r


def global_logits(task: TaskInstance, config: GlobalModelConfig, params: ParamSet) -> Tensor:
    """(r, r) logits at the working resolution."""
    r = working_resolution(config, task)
    target = resample_image(task.target_image, r)[None]
    context_images = np.stack([resample_image(c.image, r) for c in task.context])
    context_masks = np.stack([resample_mask(c.mask, r) for c in task.context])

    x, skip = _encode_maps(config, params, target, np.zeros_like(target))
    ctx, _ = _encode_maps(config, params, context_images, context_masks)
    coords = _pixel_coords(r)
    ctx_coords = np.tile(coords, (len(task.context), 1))
    target_kind = np.full(r * r, int(TokenKind.TARGET))
    context_kind = np.full(ctx.shape[0], int(TokenKind.CONTEXT_JOINT))

    for layer in range(config.layers):
        prefix = f"layers.{layer}"
        table = params[f"{prefix}.type"]
        x = F.add(x, F.take_rows(table, target_kind))
        keys = layer_norm(params, f"{prefix}.ln_ctx", F.add(ctx, F.take_rows(table, context_kind)))
        h = layer_norm(params, f"{prefix}.ln_self", x)
        x = F.add(x, attention(params, f"{prefix}.self", h, h, config.heads, coords, coords))
        h = layer_norm(params, f"{prefix}.ln_cross", x)
        x = F.add(x, attention(params, f"{prefix}.cross", h, keys, config.heads, coords, ctx_coords))
        x = F.add(x, feedforward(params, f"{prefix}.ffn", layer_norm(params, f"{prefix}.ln_ffn", x)))
    x = layer_norm(params, "final_ln", x)

    c1 = config.channels[0]
    features = F.transpose(F.reshape(linear(params, "dec.proj", x), (1, r, r, c1)), (0, 3, 1, 2))
    h = F.gelu(conv(params, "dec.conv", F.concat([features, skip], axis=1)))
    return F.reshape(conv(params, "dec.head", h), (r, r))


def global_forward(task: TaskInstance, config: GlobalModelConfig, params: ParamSet) -> np.ndarray:
    """Probability map at the task's input resolution."""
    logits = global_logits(task, config, params)
    probs = expit(logits.numpy())
    return F.resize_array(probs, task.resolution, "bilinear").clip(0.0, 1.0)
