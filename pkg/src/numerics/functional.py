"""Differentiable operations on ``Tensor``.

Every op computes its forward result with NumPy and hands ``emit`` a
vector-Jacobian product closure. Elementwise broadcasting is restricted to
leading-dimension expansion: the smaller operand's shape must be a suffix of
the larger one's.
"""

import functools
from fractions import Fraction
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, log_expit

from ..errors import BoxOutOfBoundsError, ShapeMismatchError
from .tensor import Tensor, emit

Operand = Union[Tensor, np.ndarray, float, int]


def as_tensor(x: Operand) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _leading_broadcast(op: str, sa: Tuple[int, ...], sb: Tuple[int, ...]) -> Tuple[int, ...]:
    if sa == sb:
        return sa
    if len(sa) >= len(sb) and sa[len(sa) - len(sb) :] == sb:
        return sa
    if len(sb) > len(sa) and sb[len(sb) - len(sa) :] == sa:
        return sb
    raise ShapeMismatchError(op, sa, sb)


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g


# Elementwise arithmetic


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _leading_broadcast("add", a.shape, b.shape)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return emit("add", a.data + b.data, (a, b), vjp)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _leading_broadcast("sub", a.shape, b.shape)

    def vjp(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return emit("sub", a.data - b.data, (a, b), vjp)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _leading_broadcast("mul", a.shape, b.shape)

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return emit("mul", a.data * b.data, (a, b), vjp)


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _leading_broadcast("div", a.shape, b.shape)
    out = a.data / b.data

    def vjp(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return emit("div", out, (a, b), vjp)


def neg(a: Operand) -> Tensor:
    a = as_tensor(a)
    return emit("neg", -a.data, (a,), lambda g: (-g,))


def exp(a: Operand) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return emit("exp", out, (a,), lambda g: (g * out,))


def log(a: Operand) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return emit("log", out, (a,), lambda g: (g / a.data,))


def sigmoid(a: Operand) -> Tensor:
    a = as_tensor(a)
    out = expit(a.data)
    return emit("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a: Operand) -> Tensor:
    """log(1 + e^x), evaluated without overflow."""
    a = as_tensor(a)
    out = -log_expit(-a.data)
    return emit("softplus", out, (a,), lambda g: (g * expit(a.data),))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a: Operand) -> Tensor:
    """Tanh approximation of the Gaussian error linear unit."""
    a = as_tensor(a)
    x = a.data
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    out = 0.5 * x * (1.0 + t)

    def vjp(g):
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return emit("gelu", out, (a,), vjp)


def softmax(a: Operand, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return emit("softmax", out, (a,), vjp)


# Reductions and shape manipulation


def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(ax % ndim for ax in axes)


def sum(a: Operand, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return emit("sum", out, (a,), vjp)


def mean(a: Operand, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape),)

    return emit("mean", out, (a,), vjp)


def reshape(a: Operand, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeMismatchError("reshape", a.shape, tuple(shape)) from None
    return emit("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Operand, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return emit("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def getitem(a: Operand, idx) -> Tensor:
    a = as_tensor(a)
    out = a.data[idx]

    def vjp(g):
        full = np.zeros(a.shape)
        np.add.at(full, idx, g)
        return (full,)

    return emit("getitem", out, (a,), vjp)


def concat(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatchError("concat", *(t.shape for t in tensors)) from None
    cuts = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return emit("concat", out, tensors, lambda g: tuple(np.split(g, cuts, axis=axis)))


def stack(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatchError("stack", *(t.shape for t in tensors)) from None

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return emit("stack", out, tensors, vjp)


def take_rows(table: Operand, index: np.ndarray) -> Tensor:
    """Gather rows of a 2D table, e.g. an embedding lookup."""
    table = as_tensor(table)
    index = np.asarray(index, dtype=np.int64)

    def vjp(g):
        full = np.zeros(table.shape)
        np.add.at(full, index, g)
        return (full,)

    return emit("take_rows", table.data[index], (table,), vjp)


def tile_spatial(a: Operand, height: int, width: int) -> Tensor:
    """Repeat an (N, C) tensor over a spatial grid, giving (N, C, height, width)."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeMismatchError("tile_spatial", a.shape, ("N", "C"))
    out = np.broadcast_to(a.data[:, :, None, None], a.shape + (height, width))
    return emit("tile_spatial", out, (a,), lambda g: (g.sum(axis=(2, 3)),))


# Linear algebra


def matmul(a: Operand, b: Operand) -> Tensor:
    """Matrix product on the trailing two axes."""
    a, b = as_tensor(a), as_tensor(b)
    ok = a.ndim >= 2 and b.ndim >= 2 and a.shape[-1] == b.shape[-2]
    ok = ok and (a.ndim == 2 or b.ndim == 2 or a.shape[:-2] == b.shape[:-2])
    if not ok:
        raise ShapeMismatchError("matmul", a.shape, b.shape)

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return emit("matmul", a.data @ b.data, (a, b), vjp)


def linear(x: Operand, weight: Operand, bias: Optional[Operand] = None) -> Tensor:
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def layer_norm(x: Operand, gamma: Operand, beta: Operand, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if gamma.shape != x.shape[-1:] or beta.shape != x.shape[-1:]:
        raise ShapeMismatchError("layer_norm", x.shape, gamma.shape, beta.shape)
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv
    out = xhat * gamma.data + beta.data

    def vjp(g):
        g_gamma = _unbroadcast(g * xhat, gamma.shape)
        g_beta = _unbroadcast(g, beta.shape)
        gx_hat = g * gamma.data
        gx = inv * (
            gx_hat - gx_hat.mean(axis=-1, keepdims=True) - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, g_gamma, g_beta

    return emit("layer_norm", out, (x, gamma, beta), vjp)


def rotary(x: Operand, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Rotate consecutive feature pairs (2i, 2i+1) by per-row angles.

    ``x`` is (..., T, D); ``cos``/``sin`` are (T, D/2).
    """
    x = as_tensor(x)
    if x.shape[-1] % 2 or cos.shape != x.shape[-2:-1] + (x.shape[-1] // 2,):
        raise ShapeMismatchError("rotary", x.shape, cos.shape)
    even, odd = x.data[..., 0::2], x.data[..., 1::2]
    out = np.empty(x.shape)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos

    def vjp(g):
        ge, go = g[..., 0::2], g[..., 1::2]
        gx = np.empty(x.shape)
        gx[..., 0::2] = ge * cos + go * sin
        gx[..., 1::2] = -ge * sin + go * cos
        return (gx,)

    return emit("rotary", out, (x,), vjp)


# Convolution, pooling, resampling


def conv2d(x: Operand, weight: Operand, bias: Optional[Operand] = None) -> Tensor:
    """Same-padded 2D convolution: x (N, C, H, W), weight (O, C, k, k), k odd."""
    x, weight = as_tensor(x), as_tensor(weight)
    inputs: Tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        inputs = inputs + (bias,)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError("conv2d", x.shape, weight.shape)
    k = weight.shape[2]
    if k % 2 == 0 or weight.shape[3] != k:
        raise ShapeMismatchError("conv2d", weight.shape, ("O", "C", "odd k", "odd k"))
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeMismatchError("conv2d", bias.shape, (weight.shape[0],))
    n, _, h, w = x.shape
    pad = k // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))  # (N, C, H, W, k, k)
    out = np.tensordot(cols, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def vjp(g):
        g_weight = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
        g_xp = np.zeros(xp.shape)
        for i in range(k):
            for j in range(k):
                g_xp[:, :, i : i + h, j : j + w] += np.tensordot(g, weight.data[:, :, i, j], axes=([1], [0])).transpose(
                    0, 3, 1, 2
                )
        g_x = g_xp[:, :, pad : pad + h, pad : pad + w]
        if bias is None:
            return g_x, g_weight
        return g_x, g_weight, g.sum(axis=(0, 2, 3))

    return emit("conv2d", out, inputs, vjp)


def avg_pool2d(x: Operand, factor: int = 2) -> Tensor:
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise ShapeMismatchError("avg_pool2d", x.shape, (n, c, f"h%{factor}", f"w%{factor}"))
    out = x.data.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))

    def vjp(g):
        up = np.repeat(np.repeat(g, factor, axis=2), factor, axis=3)
        return (up / (factor * factor),)

    return emit("avg_pool2d", out, (x,), vjp)


@functools.lru_cache(maxsize=None)
def interpolation_matrix(n_in: int, n_out: int, mode: str) -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix resampling one axis.

    ``bilinear`` uses half-pixel centres with border clamping, ``nearest``
    picks ``floor(i * n_in / n_out)`` and ``area`` averages the exact overlap
    of each output cell with the input cells.
    """
    if n_in < 1 or n_out < 1:
        raise ShapeMismatchError("resize", (n_in,), (n_out,))
    m = np.zeros((n_out, n_in))
    if mode == "nearest":
        for i in range(n_out):
            m[i, min(i * n_in // n_out, n_in - 1)] = 1.0
    elif mode == "bilinear":
        for i in range(n_out):
            src = Fraction((2 * i + 1) * n_in - n_out, 2 * n_out)
            src = min(max(src, Fraction(0)), Fraction(n_in - 1))
            i0 = int(src)
            i1 = min(i0 + 1, n_in - 1)
            w1 = float(src - i0)
            m[i, i0] += 1.0 - w1
            m[i, i1] += w1
    elif mode == "area":
        scale = Fraction(n_in, n_out)
        for i in range(n_out):
            start, end = i * scale, (i + 1) * scale
            for j in range(int(start), min(-(-end.numerator // end.denominator), n_in)):
                overlap = min(end, Fraction(j + 1)) - max(start, Fraction(j))
                if overlap > 0:
                    m[i, j] = float(overlap / scale)
    else:
        raise ValueError(f"unknown resize mode {mode!r}")
    m.setflags(write=False)
    return m


def resize(x: Operand, size: int, mode: str = "bilinear") -> Tensor:
    """Resample the trailing two (square) axes to ``size`` x ``size``."""
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-1] != x.shape[-2]:
        raise ShapeMismatchError("resize", x.shape, ("...", "n", "n"))
    if x.shape[-1] == size:
        return x
    a = interpolation_matrix(x.shape[-1], size, mode)
    out = a @ x.data @ a.T

    def vjp(g):
        return (a.T @ g @ a,)

    return emit(f"resize_{mode}", out, (x,), vjp)


def resize_array(x: np.ndarray, size: int, mode: str = "bilinear") -> np.ndarray:
    """Non-differentiable twin of ``resize`` for plain arrays."""
    if x.shape[-1] == size:
        return np.asarray(x, dtype=np.float64)
    a = interpolation_matrix(x.shape[-1], size, mode)
    return a @ np.asarray(x, dtype=np.float64) @ a.T


# Patch aggregation


def average_patches(
    patches: Operand, boxes: Sequence[Tuple[int, int, int]], resolution: int
) -> Tuple[Tensor, np.ndarray]:
    """Average overlapping patches into a ``resolution`` x ``resolution`` map.

    ``boxes`` holds (y0, x0, size) per patch. Uncovered pixels are 0. Returns
    the map and the boolean coverage mask.
    """
    patches = as_tensor(patches)
    if patches.ndim != 3 or len(boxes) != patches.shape[0]:
        raise ShapeMismatchError("average_patches", patches.shape, (len(boxes), "P", "P"))
    sums = np.zeros((resolution, resolution))
    counts = np.zeros((resolution, resolution))
    for k, (y0, x0, size) in enumerate(boxes):
        if y0 < 0 or x0 < 0 or y0 + size > resolution or x0 + size > resolution:
            raise BoxOutOfBoundsError(f"box (y0={y0}, x0={x0}, size={size}) outside {resolution}x{resolution}")
        if patches.shape[1:] != (size, size):
            raise ShapeMismatchError("average_patches", patches.shape[1:], (size, size))
        sums[y0 : y0 + size, x0 : x0 + size] += patches.data[k]
        counts[y0 : y0 + size, x0 : x0 + size] += 1.0
    coverage = counts > 0
    safe = np.where(coverage, counts, 1.0)
    out = np.where(coverage, sums / safe, 0.0)

    def vjp(g):
        scaled = np.where(coverage, g / safe, 0.0)
        grads = np.stack([scaled[y0 : y0 + s, x0 : x0 + s] for (y0, x0, s) in boxes])
        return (grads,)

    return emit("average_patches", out, (patches,), vjp), coverage
