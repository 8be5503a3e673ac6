"""Minimal float64 tensor library with reverse-mode differentiation."""

from . import functional
from .checkpoint import load_params, read_tensors, save_params, write_tensors
from .gradcheck import finite_diff_grad, relative_error
from .optim import Adam
from .params import ParamSet
from .rng import RngStream
from .tensor import Tape, Tensor, backward, current_tape, is_debug, no_recording, recording, set_debug

__all__ = [
    "Adam",
    "ParamSet",
    "RngStream",
    "Tape",
    "Tensor",
    "backward",
    "current_tape",
    "finite_diff_grad",
    "functional",
    "is_debug",
    "load_params",
    "no_recording",
    "read_tensors",
    "recording",
    "relative_error",
    "save_params",
    "set_debug",
    "write_tensors",
]
