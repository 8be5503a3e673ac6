"""Shape classes and their rasterisers."""

from typing import Callable, Dict, List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..numerics import RngStream

Split = Literal["train", "heldout"]


class ShapeClass(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    split: Split


class ShapeParams(BaseModel):
    """Placement of one shape instance, in pixels and radians."""

    cy: float
    cx: float
    size: float = Field(gt=0, description="Circumscribed radius")
    angle: float = 0.0
    aspect: float = Field(default=1.0, gt=0, le=1.0)


def _local_coords(resolution: int, p: ShapeParams):
    ys, xs = np.mgrid[0:resolution, 0:resolution].astype(np.float64)
    dy, dx = ys + 0.5 - p.cy, xs + 0.5 - p.cx
    c, s = np.cos(p.angle), np.sin(p.angle)
    return c * dx + s * dy, -s * dx + c * dy


def _disk(u, v, p: ShapeParams):
    return u * u + v * v <= p.size**2


def _ellipse(u, v, p: ShapeParams):
    return (u / p.size) ** 2 + (v / (p.size * p.aspect)) ** 2 <= 1.0


def _rectangle(u, v, p: ShapeParams):
    return (np.abs(u) <= p.size * 0.75) & (np.abs(v) <= p.size * 0.75 * p.aspect)


def _ring(u, v, p: ShapeParams):
    rr = u * u + v * v
    return (rr <= p.size**2) & (rr >= (0.55 * p.size) ** 2)


def _cross(u, v, p: ShapeParams):
    arm = 0.3 * p.size
    return ((np.abs(u) <= arm) & (np.abs(v) <= p.size)) | ((np.abs(v) <= arm) & (np.abs(u) <= p.size))


def _triangle(u, v, p: ShapeParams):
    # Equilateral: inside the three half-planes at the inradius (half the circumradius).
    inside = np.ones_like(u, dtype=bool)
    for phi in (np.pi / 6, 5 * np.pi / 6, 3 * np.pi / 2):
        inside &= u * np.cos(phi) + v * np.sin(phi) <= 0.5 * p.size
    return inside


RASTERISERS: Dict[str, Callable] = {
    "disk": _disk,
    "rectangle": _rectangle,
    "triangle": _triangle,
    "cross": _cross,
    "ring": _ring,
    "ellipse": _ellipse,
}

# Aspect ranges; classes absent here are drawn with aspect 1.
ASPECT_RANGE = {"rectangle": (0.45, 0.9), "ellipse": (0.4, 0.65)}

SHAPE_CLASSES: Dict[str, ShapeClass] = {
    "disk": ShapeClass(name="disk", split="train"),
    "rectangle": ShapeClass(name="rectangle", split="train"),
    "triangle": ShapeClass(name="triangle", split="train"),
    "cross": ShapeClass(name="cross", split="train"),
    "ring": ShapeClass(name="ring", split="heldout"),
    "ellipse": ShapeClass(name="ellipse", split="heldout"),
}


def classes_in(split: Split) -> List[ShapeClass]:
    return [c for c in SHAPE_CLASSES.values() if c.split == split]


def get_class(name: str) -> ShapeClass:
    try:
        return SHAPE_CLASSES[name]
    except KeyError:
        raise ValueError(f"unknown shape class {name!r}; expected one of {sorted(SHAPE_CLASSES)}") from None


def draw_params(name: str, resolution: int, rng: RngStream, size_range=(0.14, 0.28)) -> ShapeParams:
    size = float(resolution * (size_range[0] + (size_range[1] - size_range[0]) * rng.uniform()))
    margin = size
    span = max(resolution - 2 * margin, 1e-6)
    low, high = ASPECT_RANGE.get(name, (1.0, 1.0))
    return ShapeParams(
        cy=float(margin + span * rng.uniform()),
        cx=float(margin + span * rng.uniform()),
        size=size,
        angle=float(2 * np.pi * rng.uniform()),
        aspect=float(low + (high - low) * rng.uniform()),
    )


def render_shape(name: str, resolution: int, params: ShapeParams) -> np.ndarray:
    """Boolean (resolution, resolution) mask of one shape instance."""
    u, v = _local_coords(resolution, params)
    return RASTERISERS[name](u, v, params)
