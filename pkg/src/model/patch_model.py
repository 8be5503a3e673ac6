"""Patch encoder, joint attention stack and patch decoder.

One set of weights serves every cascade level; the level enters only through
the sinusoidal resolution code added to each patch embedding.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..errors import ShapeMismatchError
from ..numerics import ParamSet, RngStream, Tensor
from ..numerics import functional as F
from .config import ModelConfig, PatchTokens, TokenKind
from .layers import (
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

logger = logging.getLogger(__name__)


class SkipFeatures(BaseModel):
    """Encoder feature maps kept for the decoder."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    full: Tensor  # (N, c1, P, P)
    half: Tensor  # (N, c2, P/2, P/2)

    def take(self, index) -> "SkipFeatures":
        return SkipFeatures(full=F.getitem(self.full, index), half=F.getitem(self.half, index))


def init_patch_model(config: ModelConfig, rng: RngStream) -> ParamSet:
    """Fresh parameters; every draw comes from ``rng`` in a fixed order."""
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
        add_layer_norm(params, f"{prefix}.ln1", d)
        init_attention(params, f"{prefix}.attn", d, stream.child(1))
        add_layer_norm(params, f"{prefix}.ln2", d)
        init_feedforward(params, f"{prefix}.ffn", d, stream.child(2))
    add_layer_norm(params, "final_ln", d)
    add_linear(params, "dec.proj", d, c2, rng.child(3))
    add_conv(params, "dec.conv1", c2, c1, 3, rng.child(4))
    add_conv(params, "dec.conv2", 2 * c1, c1, 3, rng.child(5))
    # Small head so initial logits sit near zero.
    add_conv(params, "dec.head", c1, 1, 1, rng.child(6), scale=0.01)
    logger.debug("initialised patch model with %d trainable scalars", params.num_scalars())
    return params


def encode_patches(
    config: ModelConfig, params: ParamSet, images, labels: Optional[np.ndarray], resolution: int
) -> Tuple[Tensor, SkipFeatures]:
    """Embed a batch of (N, P, P) patches, with label channel when given.

    Target patches pass ``labels=None`` and get an all-zero label channel.
    """
    images = F.as_tensor(images)
    p = config.patch_size
    if images.ndim != 3 or images.shape[1:] != (p, p):
        raise ShapeMismatchError("encode_patch", images.shape, ("N", p, p))
    if labels is None:
        labels = np.zeros(images.shape)
    labels = F.as_tensor(labels)
    if labels.shape != images.shape:
        raise ShapeMismatchError("encode_patch", images.shape, labels.shape)
    x = F.stack([images, labels], axis=1)
    skip_full = F.gelu(conv(params, "enc.conv1", x))
    skip_half = F.gelu(conv(params, "enc.conv2", F.avg_pool2d(skip_full, 2)))
    pooled = F.mean(skip_half, axis=(2, 3))
    embedding = F.add(linear(params, "enc.proj", pooled), resolution_encoding(resolution, config.d))
    return embedding, SkipFeatures(full=skip_full, half=skip_half)


def encode_patch(
    config: ModelConfig, params: ParamSet, image_patch, label_patch, resolution: int
) -> Tuple[Tensor, SkipFeatures]:
    """Single-patch form of ``encode_patches``; returns a (d,) embedding."""
    image = F.as_tensor(image_patch)
    labels = None if label_patch is None else np.asarray(label_patch, dtype=np.float64)[None]
    emb, skips = encode_patches(config, params, F.reshape(image, (1,) + image.shape), labels, resolution)
    return F.reshape(emb, (config.d,)), skips


def attention_stack(config: ModelConfig, params: ParamSet, tokens: PatchTokens) -> Tensor:
    """Pre-norm transformer over all tokens; returns (T, d) in input order."""
    if len(tokens) == 0:
        raise ValueError("attention stack needs at least one token")
    x = tokens.embeddings
    if x.ndim != 2 or x.shape[1] != config.d:
        raise ShapeMismatchError("attention_stack", x.shape, ("T", config.d))
    for layer in range(config.layers):
        prefix = f"layers.{layer}"
        x = F.add(x, F.take_rows(params[f"{prefix}.type"], tokens.kinds))
        h = layer_norm(params, f"{prefix}.ln1", x)
        x = F.add(x, attention(params, f"{prefix}.attn", h, h, config.heads, tokens.coords, tokens.coords))
        x = F.add(x, feedforward(params, f"{prefix}.ffn", layer_norm(params, f"{prefix}.ln2", x)))
    return layer_norm(params, "final_ln", x)


def decode_patches(config: ModelConfig, params: ParamSet, attended, skips: SkipFeatures) -> Tensor:
    """(N, d) attended embeddings plus their skips -> (N, P, P) logits."""
    attended = F.as_tensor(attended)
    c1, c2 = config.channels
    p = config.patch_size
    n = attended.shape[0]
    if skips.half.shape != (n, c2, p // 2, p // 2) or skips.full.shape != (n, c1, p, p):
        raise ShapeMismatchError("decode_patch", attended.shape, skips.half.shape, skips.full.shape)
    seed = F.tile_spatial(linear(params, "dec.proj", attended), p // 2, p // 2)
    h = F.gelu(conv(params, "dec.conv1", F.add(seed, skips.half)))
    h = F.resize(h, p, mode="nearest")
    h = F.gelu(conv(params, "dec.conv2", F.concat([h, skips.full], axis=1)))
    logits = conv(params, "dec.head", h)
    return F.reshape(logits, (n, p, p))


def decode_patch(config: ModelConfig, params: ParamSet, attended, skips: SkipFeatures) -> Tensor:
    attended = F.as_tensor(attended)
    out = decode_patches(config, params, F.reshape(attended, (1, config.d)), skips)
    return F.reshape(out, (config.patch_size, config.patch_size))
