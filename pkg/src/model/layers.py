"""Parameter initialisers and the building blocks shared by both architectures.

Blocks are plain functions of a ``ParamSet`` and a name prefix so that the
same weights can be reused across cascade levels and gradient checks can
swap parameter values freely.
"""

import numpy as np

from ..errors import ShapeMismatchError
from ..numerics import ParamSet, RngStream, Tensor
from ..numerics import functional as F
from .rope import apply_rope


def add_linear(params: ParamSet, name: str, fan_in: int, fan_out: int, rng: RngStream, scale: float = 1.0) -> None:
    params.add(f"{name}.w", rng.normal(0.0, scale / np.sqrt(fan_in), (fan_in, fan_out)))
    params.add(f"{name}.b", np.zeros(fan_out))


def add_conv(params: ParamSet, name: str, c_in: int, c_out: int, k: int, rng: RngStream, scale: float = 1.0) -> None:
    params.add(f"{name}.w", rng.normal(0.0, scale / np.sqrt(c_in * k * k), (c_out, c_in, k, k)))
    params.add(f"{name}.b", np.zeros(c_out))


def add_layer_norm(params: ParamSet, name: str, d: int) -> None:
    params.add(f"{name}.g", np.ones(d))
    params.add(f"{name}.b", np.zeros(d))


def linear(params: ParamSet, name: str, x) -> Tensor:
    return F.linear(x, params[f"{name}.w"], params[f"{name}.b"])


def conv(params: ParamSet, name: str, x) -> Tensor:
    return F.conv2d(x, params[f"{name}.w"], params[f"{name}.b"])


def layer_norm(params: ParamSet, name: str, x) -> Tensor:
    return F.layer_norm(x, params[f"{name}.g"], params[f"{name}.b"])


def resolution_encoding(r: int, d: int) -> np.ndarray:
    """Sinusoidal code of a resolution: [sin(r/ω_0), cos(r/ω_0), sin(r/ω_1), ...]."""
    if d % 2:
        raise ShapeMismatchError("resolution_encoding", (d,), ("even",))
    if r < 0:
        raise ValueError(f"resolution must be nonnegative, got {r}")
    omega = 10000.0 ** (2.0 * np.arange(d // 2) / d)
    out = np.empty(d)
    out[0::2] = np.sin(r / omega)
    out[1::2] = np.cos(r / omega)
    return out


# Attention


def init_attention(params: ParamSet, name: str, d: int, rng: RngStream) -> None:
    for proj in ("wq", "wk", "wv", "wo"):
        params.add(f"{name}.{proj}", rng.normal(0.0, 1.0 / np.sqrt(d), (d, d)))
    params.add(f"{name}.bo", np.zeros(d))


def _split_heads(x: Tensor, heads: int) -> Tensor:
    t, d = x.shape
    return F.transpose(F.reshape(x, (t, heads, d // heads)), (1, 0, 2))


def _merge_heads(x: Tensor) -> Tensor:
    heads, t, dh = x.shape
    return F.reshape(F.transpose(x, (1, 0, 2)), (t, heads * dh))


def attention(
    params: ParamSet,
    name: str,
    queries: Tensor,
    keys: Tensor,
    heads: int,
    query_coords: np.ndarray,
    key_coords: np.ndarray,
) -> Tensor:
    """Multi-head attention of ``queries`` (Tq, d) over ``keys`` (Tk, d).

    Rotary embeddings rotate q and k by their coordinates; values stay put.
    """
    q = _split_heads(F.matmul(queries, params[f"{name}.wq"]), heads)
    k = _split_heads(F.matmul(keys, params[f"{name}.wk"]), heads)
    v = _split_heads(F.matmul(keys, params[f"{name}.wv"]), heads)
    q = apply_rope(q, query_coords)
    k = apply_rope(k, key_coords)
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = F.mul(F.matmul(q, F.transpose(k, (0, 2, 1))), scale)
    mixed = F.matmul(F.softmax(scores, axis=-1), v)
    return F.linear(_merge_heads(mixed), params[f"{name}.wo"], params[f"{name}.bo"])


def init_feedforward(params: ParamSet, name: str, d: int, rng: RngStream) -> None:
    add_linear(params, f"{name}.1", d, 4 * d, rng)
    add_linear(params, f"{name}.2", 4 * d, d, rng)


def feedforward(params: ParamSet, name: str, x: Tensor) -> Tensor:
    return linear(params, f"{name}.2", F.gelu(linear(params, f"{name}.1", x)))
