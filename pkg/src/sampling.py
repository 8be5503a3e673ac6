"""Patch selection: entropy maps, candidate grids, Gumbel-top-K and context weights."""

import itertools
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.ndimage import distance_transform_edt

from .errors import (
    GridError,
    NoInformativeCandidatesError,
    ProbabilityRangeError,
    ResolutionMismatchError,
)
from .numerics import RngStream

logger = logging.getLogger(__name__)


class PatchBox(BaseModel):
    """Square patch addressed by its top-left pixel (inclusive)."""

    model_config = ConfigDict(frozen=True)

    y0: int = Field(ge=0)
    x0: int = Field(ge=0)
    size: int = Field(ge=1)

    def fits(self, resolution: int) -> bool:
        return self.y0 + self.size <= resolution and self.x0 + self.size <= resolution

    def as_tuple(self) -> Tuple[int, int, int]:
        return self.y0, self.x0, self.size


class CandidateGrid(BaseModel):
    boxes: List[PatchBox]
    resolution: int
    stride: int

    @property
    def patch_size(self) -> int:
        return self.boxes[0].size

    def __len__(self) -> int:
        return len(self.boxes)


class SampledPatchSet(BaseModel):
    """Outcome of one Gumbel-top-K draw (the set S_ℓ)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    selected: List[Tuple[int, Optional[PatchBox]]]
    weights: np.ndarray = Field(description="Mean weight per candidate")
    noise: np.ndarray = Field(description="Gumbel draw per candidate (zeros when noise is off)")
    k: int

    @property
    def indices(self) -> List[int]:
        return [i for i, _ in self.selected]

    @property
    def boxes(self) -> List[PatchBox]:
        return [b for _, b in self.selected]


class EntropyMap(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray

    @model_validator(mode="after")
    def _bounded(self):
        if self.values.size and (self.values.min() < 0 or self.values.max() > np.log(2.0) + 1e-15):
            raise ValueError("entropy values must lie in [0, ln 2]")
        return self

    @property
    def resolution(self) -> int:
        return self.values.shape[-1]


def entropy_map(prob: np.ndarray) -> EntropyMap:
    """Binary entropy in nats, with 0·log 0 = 0 at the boundary."""
    prob = np.asarray(prob, dtype=np.float64)
    bad = ~((prob >= 0.0) & (prob <= 1.0))
    if bad.any():
        y, x = np.argwhere(bad)[0][-2:] if prob.ndim >= 2 else (0, int(np.argwhere(bad)[0][0]))
        raise ProbabilityRangeError(int(y), int(x), float(prob[..., y, x] if prob.ndim >= 2 else prob[x]))
    q = 1.0 - prob
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(prob > 0, prob * np.log(prob), 0.0) - np.where(q > 0, q * np.log(q), 0.0)
    return EntropyMap(values=np.clip(h, 0.0, np.log(2.0)))


def _grid_positions(resolution: int, size: int, stride: int) -> List[int]:
    positions = list(range(0, resolution - size + 1, stride))
    if positions[-1] + size < resolution:
        positions.append(resolution - size)
    return positions


def candidate_grid(resolution: int, patch_size: int, stride: int) -> CandidateGrid:
    """Regular row-major grid of boxes, plus border-flush boxes when the stride leaves a gap."""
    if not 1 <= patch_size <= resolution:
        raise GridError(f"patch size {patch_size} must lie in [1, {resolution}]")
    if stride < 1:
        raise GridError(f"stride must be >= 1, got {stride}")
    positions = _grid_positions(resolution, patch_size, stride)
    boxes = [PatchBox(y0=y, x0=x, size=patch_size) for y, x in itertools.product(positions, positions)]
    return CandidateGrid(boxes=boxes, resolution=resolution, stride=stride)


def patch_mean_weights(weight_map, grid: CandidateGrid) -> np.ndarray:
    """Mean of the map over each candidate box."""
    values = weight_map.values if isinstance(weight_map, EntropyMap) else np.asarray(weight_map, dtype=np.float64)
    if values.shape != (grid.resolution, grid.resolution):
        raise ResolutionMismatchError(f"map {values.shape} does not match grid resolution {grid.resolution}")
    # Summed-area table turns every box mean into four lookups.
    sat = np.zeros((grid.resolution + 1, grid.resolution + 1))
    sat[1:, 1:] = values.cumsum(axis=0).cumsum(axis=1)
    out = np.empty(len(grid.boxes))
    for k, box in enumerate(grid.boxes):
        y0, x0, s = box.as_tuple()
        total = sat[y0 + s, x0 + s] - sat[y0, x0 + s] - sat[y0 + s, x0] + sat[y0, x0]
        out[k] = total / (s * s)
    return out


def perturbed_top_k(log_weights: np.ndarray, noise: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest keys ``log_weights + noise``, ties to the lower index.

    ``noise`` may carry a leading batch axis of independent draws; the result
    then has shape (draws, k) and row i ranks draw i.
    """
    keys = np.where(np.isneginf(log_weights), -np.inf, log_weights + noise)
    k = min(k, keys.shape[-1])
    # Stable sort on the negated keys keeps equal keys in index order.
    order = np.argsort(-keys, axis=-1, kind="stable")
    return order[..., :k]


def gumbel_top_k(weights: Sequence[float], k: int, rng: RngStream, noise_enabled: bool = True) -> SampledPatchSet:
    """Select ``k`` candidates without replacement by perturbed log-weights.

    Zero-weight candidates get key -inf and only fill the selection once every
    positive-weight candidate is taken. With ``noise_enabled`` off the result
    is the deterministic top-k.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    if weights.size == 0 or not (weights > 0).any():
        raise NoInformativeCandidatesError()
    if (weights < 0).any():
        raise ValueError("sampling weights must be nonnegative")
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    noise = rng.gumbel(weights.shape) if noise_enabled else np.zeros(weights.shape)
    chosen = perturbed_top_k(log_w, noise, k)
    return SampledPatchSet(selected=[(int(i), None) for i in chosen], weights=weights, noise=noise, k=k)


def plackett_luce_probability(weights: Sequence[float], ordered: Sequence[int]) -> float:
    """Probability of drawing ``ordered`` first, in that order, without replacement."""
    weights = np.asarray(weights, dtype=np.float64)
    remaining = float(weights.sum())
    prob = 1.0
    for i in ordered:
        prob *= weights[i] / remaining
        remaining -= weights[i]
    return prob


def boundary_pixels(label: np.ndarray) -> np.ndarray:
    """Pixels 4-adjacent to the other class (both sides of the contour)."""
    fg = np.asarray(label) > 0
    boundary = np.zeros_like(fg)
    for axis in (0, 1):
        for shift in (1, -1):
            neighbour = np.roll(fg, shift, axis=axis)
            valid = np.ones_like(fg)
            if shift == 1:
                index = [slice(None)] * 2
                index[axis] = 0
                valid[tuple(index)] = False
            else:
                index = [slice(None)] * 2
                index[axis] = -1
                valid[tuple(index)] = False
            boundary |= valid & (neighbour != fg)
    return boundary


def boundary_distance_weights(label: np.ndarray, grid: CandidateGrid) -> np.ndarray:
    """1 / (1 + mean distance to the mask boundary) per candidate.

    Empty or full masks have no boundary; every candidate then gets weight 1.
    """
    label = np.asarray(label)
    if label.shape != (grid.resolution, grid.resolution):
        raise ResolutionMismatchError(f"label {label.shape} does not match grid resolution {grid.resolution}")
    boundary = boundary_pixels(label)
    if not boundary.any():
        return np.ones(len(grid.boxes))
    distance = distance_transform_edt(~boundary)
    return 1.0 / (1.0 + patch_mean_weights(distance, grid))


def attach_boxes(sampled: SampledPatchSet, grid: CandidateGrid) -> SampledPatchSet:
    """Fill in the PatchBox for each selected candidate index."""
    selected = [(i, grid.boxes[i]) for i, _ in sampled.selected]
    return sampled.model_copy(update={"selected": selected})


def sample_patches(
    weights: np.ndarray, grid: CandidateGrid, k: int, rng: RngStream, noise_enabled: bool
) -> SampledPatchSet:
    return attach_boxes(gumbel_top_k(weights, k, rng, noise_enabled), grid)
