"""2D rotary position embeddings over patch-grid coordinates."""

from typing import Tuple

import numpy as np

from ..errors import ShapeMismatchError
from ..numerics import Tensor
from ..numerics import functional as F

BASE = 10000.0


def rope_frequencies(head_dim: int) -> np.ndarray:
    """θ_i = BASE^(-2i / (head_dim/2)) for the head_dim/4 pairs of each axis."""
    if head_dim % 4:
        raise ShapeMismatchError("rope_2d", (head_dim,), ("multiple of 4",))
    half = head_dim // 2
    return BASE ** (-2.0 * np.arange(half // 2) / half)


def rope_tables(coords: np.ndarray, head_dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """cos/sin tables of shape (T, head_dim/2) for (T, 2) (y, x) coordinates.

    The first head_dim/4 pairs rotate with y, the rest with x.
    """
    theta = rope_frequencies(head_dim)
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    angles = np.concatenate([coords[:, :1] * theta, coords[:, 1:] * theta], axis=1)
    return np.cos(angles), np.sin(angles)


def apply_rope(x, coords: np.ndarray) -> Tensor:
    """Rotate (..., T, head_dim) queries or keys by their tokens' coordinates."""
    cos, sin = rope_tables(coords, x.shape[-1])
    return F.rotary(x, cos, sin)


def rope_2d(vector: np.ndarray, coord: Tuple[float, float]) -> np.ndarray:
    """Rotate a single head vector; plain-array form of ``apply_rope``."""
    vector = np.asarray(vector, dtype=np.float64)
    return apply_rope(Tensor(vector[None, :]), np.array([coord])).numpy()[0]
