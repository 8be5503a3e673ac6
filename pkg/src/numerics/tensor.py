"""Dense float64 tensors with tape-based reverse-mode differentiation.

A ``Tensor`` wraps a read-only NumPy array. Operations in ``functional`` record
an entry on the active ``Tape`` whenever one of their inputs requires a
gradient; ``backward`` replays the tape in reverse. The active tape is held in a
context variable and follows work submitted under a copied context.
"""

import logging
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DetachedGraphError, NonFiniteError, NotScalarError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]
Vjp = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_DEBUG = False


def set_debug(enabled: bool) -> None:
    """Toggle non-finite checks after every operation."""
    global _DEBUG
    _DEBUG = bool(enabled)


def is_debug() -> bool:
    return _DEBUG


class Tensor:
    """Immutable dense array of 64-bit floats."""

    __slots__ = ("data", "requires_grad", "op", "_tape")

    # Makes ``ndarray <op> Tensor`` dispatch to the Tensor reflected operators.
    __array_priority__ = 1000

    def __init__(self, values: ArrayLike, requires_grad: bool = False):
        data = np.array(values, dtype=np.float64)
        if not np.isfinite(data).all():
            raise NonFiniteError("Tensor")
        data.setflags(write=False)
        self.data = data
        self.requires_grad = requires_grad
        self.op = "leaf"
        self._tape: Optional["Tape"] = None

    @classmethod
    def _from_op(cls, data: np.ndarray, op: str) -> "Tensor":
        out = cls.__new__(cls)
        data = np.asarray(data, dtype=np.float64)
        if _DEBUG and not np.isfinite(data).all():
            raise NonFiniteError(op)
        data.setflags(write=False)
        out.data = data
        out.requires_grad = False
        out.op = op
        out._tape = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        """Read-only view of the values."""
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor._from_op(self.data, "detach")

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # Arithmetic sugar; the implementations live in functional.

    def __add__(self, other):
        return F.add(self, other)

    def __radd__(self, other):
        return F.add(other, self)

    def __sub__(self, other):
        return F.sub(self, other)

    def __rsub__(self, other):
        return F.sub(other, self)

    def __mul__(self, other):
        return F.mul(self, other)

    def __rmul__(self, other):
        return F.mul(other, self)

    def __truediv__(self, other):
        return F.div(self, other)

    def __rtruediv__(self, other):
        return F.div(other, self)

    def __neg__(self):
        return F.neg(self)

    def __matmul__(self, other):
        return F.matmul(self, other)

    def __getitem__(self, idx):
        return F.getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes or None)

    @property
    def T(self) -> "Tensor":
        return F.transpose(self, None)


class TapeEntry:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out: Tensor, inputs: Tuple[Tensor, ...], vjp: Vjp):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of differentiable operations for one training step."""

    def __init__(self):
        self.entries: List[TapeEntry] = []

    def record(self, out: Tensor, inputs: Tuple[Tensor, ...], vjp: Vjp) -> None:
        out._tape = self
        self.entries.append(TapeEntry(out, inputs, vjp))

    def reset(self) -> None:
        for entry in self.entries:
            entry.out._tape = None
        self.entries.clear()

    def __len__(self) -> int:
        return len(self.entries)


_tapes: ContextVar[Tuple[Optional["Tape"], ...]] = ContextVar("patchcascade_tapes", default=())


def current_tape() -> Optional[Tape]:
    stack = _tapes.get()
    return stack[-1] if stack else None


@contextmanager
def recording(tape: Optional[Tape] = None) -> Iterator[Tape]:
    """Record differentiable operations on ``tape`` (a fresh one by default)."""
    tape = tape if tape is not None else Tape()
    token = _tapes.set(_tapes.get() + (tape,))
    try:
        yield tape
    finally:
        _tapes.reset(token)


@contextmanager
def no_recording() -> Iterator[None]:
    """Suspend recording, e.g. while evaluating a loss with finite differences."""
    token = _tapes.set(_tapes.get() + (None,))
    try:
        yield
    finally:
        _tapes.reset(token)


def emit(op: str, data: np.ndarray, inputs: Tuple[Tensor, ...], vjp: Vjp) -> Tensor:
    """Wrap an op result and record it when any input needs a gradient."""
    out = Tensor._from_op(data, op)
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, vjp)
    return out


def backward(loss: Tensor, params) -> Dict[str, Tensor]:
    """Reverse-mode gradient of a scalar ``loss`` for every trainable parameter.

    Parameters that do not influence the loss receive zero gradients.
    """
    if loss.shape != ():
        raise NotScalarError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise DetachedGraphError("loss was not recorded on a tape; run the forward pass inside recording()")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for entry in reversed(tape.entries):
        g = grads.pop(id(entry.out), None)
        if g is None:
            continue
        for tensor, g_in in zip(entry.inputs, entry.vjp(g)):
            if g_in is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            prev = grads.get(key)
            grads[key] = g_in if prev is None else prev + g_in

    result: Dict[str, Tensor] = {}
    for name, param in params.trainable_items():
        g = grads.get(id(param))
        if g is None:
            g = np.zeros(param.shape)
        result[name] = Tensor._from_op(np.broadcast_to(g, param.shape).copy(), "grad")
    return result


from . import functional as F  # noqa: E402  (functional needs Tensor defined first)
