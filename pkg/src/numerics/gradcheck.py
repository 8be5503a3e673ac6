"""Central finite-difference gradient oracle."""

from typing import Callable, Dict, Union

import numpy as np

from ..errors import NonDeterministicLossError
from .params import ParamSet
from .tensor import Tensor, no_recording

LossFn = Callable[[ParamSet], Union[Tensor, float]]


def _evaluate(loss_fn: LossFn, params: ParamSet) -> float:
    with no_recording():
        value = loss_fn(params)
    return value.item() if isinstance(value, Tensor) else float(value)


def finite_diff_grad(loss_fn: LossFn, params: ParamSet, step: float = 1e-5) -> Dict[str, Tensor]:
    """Estimate (f(θ + h e_i) - f(θ - h e_i)) / 2h for every trainable scalar.

    ``loss_fn`` must be deterministic for fixed parameters; callers freeze
    any randomness (fixed RngStream, noise disabled).
    """
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    first, second = _evaluate(loss_fn, params), _evaluate(loss_fn, params)
    if first != second:
        raise NonDeterministicLossError(f"loss changed between evaluations at the same point: {first!r} vs {second!r}")

    grads: Dict[str, Tensor] = {}
    for name, tensor in params.trainable_items():
        base = tensor.data
        flat_grad = np.zeros(base.size)
        for i in range(base.size):
            plus = base.copy().reshape(-1)
            minus = base.copy().reshape(-1)
            plus[i] += step
            minus[i] -= step
            f_plus = _evaluate(loss_fn, params.with_value(name, plus.reshape(base.shape)))
            f_minus = _evaluate(loss_fn, params.with_value(name, minus.reshape(base.shape)))
            flat_grad[i] = (f_plus - f_minus) / (2.0 * step)
        grads[name] = Tensor(flat_grad.reshape(base.shape))
    return grads


def relative_error(analytic: Dict[str, Tensor], numeric: Dict[str, Tensor]) -> Dict[str, float]:
    """Per-parameter max|a - n| / max(max|a|, max|n|, 1e-8)."""
    errors = {}
    for name, a in analytic.items():
        n = numeric[name].data
        scale = max(np.abs(a.data).max(initial=0.0), np.abs(n).max(initial=0.0), 1e-8)
        errors[name] = float(np.abs(a.data - n).max(initial=0.0) / scale)
    return errors
