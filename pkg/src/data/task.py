"""In-context episode container."""

from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ContextPair(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    image: np.ndarray
    mask: np.ndarray
    case_id: int = -1
    source_episode: str = ""


class TaskInstance(BaseModel):
    """One episode: a target image and mask plus N_c annotated context pairs."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    episode_id: str = ""
    class_name: str = ""
    case_id: int = -1
    target_image: np.ndarray = Field(description="(H, W) grayscale in [0, 1]")
    target_mask: np.ndarray = Field(description="(H, W) binary")
    context: List[ContextPair]

    @field_validator("target_image", "target_mask", mode="before")
    @classmethod
    def as_float(cls, v):
        return np.asarray(v, dtype=np.float64)

    @model_validator(mode="after")
    def consistent(self):
        shape = self.target_image.shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError(f"target image must be square 2D, got {shape}")
        if self.target_mask.shape != shape:
            raise ValueError(f"target mask {self.target_mask.shape} does not match image {shape}")
        if not self.context:
            raise ValueError("an episode needs at least one context pair")
        for i, pair in enumerate(self.context):
            if pair.image.shape != shape or pair.mask.shape != shape:
                raise ValueError(f"context pair {i} has shape {pair.image.shape}/{pair.mask.shape}, expected {shape}")
            if not np.any(pair.mask > 0):
                raise ValueError(f"context pair {i} has an empty mask")
        return self

    @property
    def resolution(self) -> int:
        return self.target_image.shape[0]

    @property
    def n_context(self) -> int:
        return len(self.context)

    def with_context(self, context: List[ContextPair]) -> "TaskInstance":
        return self.model_copy(update={"context": list(context)})
