"""Named parameter container."""

from typing import Dict, Iterator, List, Tuple

import numpy as np

from .tensor import ArrayLike, Tensor


class ParamSet:
    """Ordered name -> Tensor mapping with a trainable flag per entry.

    Tensors are immutable, so updating a parameter rebinds its name to a new
    tensor. Iteration follows insertion order.
    """

    def __init__(self):
        self._values: Dict[str, Tensor] = {}
        self._trainable: Dict[str, bool] = {}

    def add(self, name: str, values: ArrayLike, trainable: bool = True) -> Tensor:
        if name in self._values:
            raise ValueError(f"duplicate parameter name {name!r}")
        tensor = Tensor(values, requires_grad=trainable)
        self._values[name] = tensor
        self._trainable[name] = trainable
        return tensor

    def assign(self, name: str, values: ArrayLike) -> None:
        current = self._values[name]
        values = np.asarray(values, dtype=np.float64)
        if values.shape != current.shape:
            raise ValueError(f"parameter {name!r}: shape {values.shape} does not match {current.shape}")
        self._values[name] = Tensor(values, requires_grad=self._trainable[name])

    def with_value(self, name: str, values: ArrayLike) -> "ParamSet":
        """Copy of this set with one parameter replaced."""
        other = self.copy()
        other.assign(name, values)
        return other

    def copy(self) -> "ParamSet":
        other = ParamSet()
        other._values = dict(self._values)
        other._trainable = dict(self._trainable)
        return other

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def names(self) -> List[str]:
        return list(self._values)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._values.items())

    def trainable_items(self) -> Iterator[Tuple[str, Tensor]]:
        return ((n, t) for n, t in self._values.items() if self._trainable[n])

    def num_scalars(self, trainable_only: bool = True) -> int:
        items = self.trainable_items() if trainable_only else self.items()
        return int(sum(t.size for _, t in items))

    def __getitem__(self, name: str) -> Tensor:
        return self._values[name]

    def __contains__(self, name: object) -> bool:
        return name in self._values

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        return f"ParamSet({len(self)} tensors, {self.num_scalars()} trainable scalars)"
