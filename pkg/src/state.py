"""State schema for the coarse-to-fine cascade."""

from typing import List, Optional, TypedDict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import expit

from .model import PatchTokens, SkipFeatures
from .numerics import RngStream, Tensor
from .sampling import CandidateGrid, SampledPatchSet


class LevelInputs(BaseModel):
    """An episode resampled to one level's resolution."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    resolution: int
    target_image: np.ndarray
    target_mask: np.ndarray = Field(description="Binary mask at this resolution (supervision only)")
    context_images: List[np.ndarray]
    context_masks: List[np.ndarray]


class LevelPrediction(BaseModel):
    """Result of one cascade level."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    resolution: int
    logits: Tensor = Field(description="Aggregated patch logits, zero outside coverage")
    coverage: np.ndarray = Field(description="Binary coverage mask M_l")
    combined: Tensor = Field(description="Combined logits after additive fusion")
    patches: SampledPatchSet
    context_patches: List[SampledPatchSet] = Field(default_factory=list)
    uniform_fallback: bool = Field(default=False, description="Sampling fell back to uniform weights")

    def probabilities(self) -> np.ndarray:
        return expit(self.combined.numpy())


class PredictionPyramid(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    levels: List[LevelPrediction]
    final: np.ndarray = Field(description="Probability map at the input resolution")

    @field_validator("final")
    @classmethod
    def in_unit_range(cls, v: np.ndarray) -> np.ndarray:
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("final probabilities must lie in [0, 1]")
        return v

    @property
    def resolutions(self) -> List[int]:
        return [level.resolution for level in self.levels]


class LevelState(TypedDict, total=False):
    """Working state threaded through the nodes of one level."""

    level_index: int
    inputs: LevelInputs
    prev: Optional[LevelPrediction]
    rng: RngStream

    grid: CandidateGrid
    target_patches: SampledPatchSet
    context_patches: List[SampledPatchSet]
    uniform_fallback: bool

    tokens: PatchTokens
    target_skips: SkipFeatures
    attended: Tensor
    patch_logits: Tensor

    logits: Tensor
    coverage: np.ndarray
    combined: Tensor
