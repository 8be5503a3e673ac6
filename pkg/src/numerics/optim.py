"""Adaptive-moment optimiser with serialisable state."""

from pathlib import Path
from typing import Dict, Union

import numpy as np

from ..errors import CheckpointError
from .checkpoint import read_tensors, write_tensors
from .params import ParamSet
from .tensor import Tensor


class Adam:
    def __init__(self, params: ParamSet, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros(p.shape) for name, p in params.trainable_items()}
        self.v = {name: np.zeros(p.shape) for name, p in params.trainable_items()}

    def step(self, grads: Dict[str, Tensor]) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for name, _ in list(self.params.trainable_items()):
            g = grads[name].data
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            update = self.lr * (self.m[name] / bias1) / (np.sqrt(self.v[name] / bias2) + self.eps)
            self.params.assign(name, self.params[name].data - update)

    def save(self, path: Union[str, Path]) -> Path:
        tensors = {"adam.t": np.asarray(float(self.t))}
        tensors.update({f"adam.m.{n}": m for n, m in self.m.items()})
        tensors.update({f"adam.v.{n}": v for n, v in self.v.items()})
        return write_tensors(path, tensors)

    def load(self, path: Union[str, Path]) -> None:
        stored = read_tensors(path)
        if "adam.t" not in stored:
            raise CheckpointError(f"{path}: not an optimiser checkpoint")
        self.t = int(stored["adam.t"])
        for name in self.m:
            try:
                self.m[name] = stored[f"adam.m.{name}"].reshape(self.m[name].shape)
                self.v[name] = stored[f"adam.v.{name}"].reshape(self.v[name].shape)
            except KeyError as exc:
                raise CheckpointError(f"{path}: missing optimiser state {exc}") from exc
