"""Model hyperparameters and token containers."""

from enum import IntEnum
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..numerics import Tensor
from ..numerics import functional as F


class TokenKind(IntEnum):
    """Row of the per-layer type-embedding table a token receives."""

    TARGET = 0
    CONTEXT_JOINT = 1


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d: int = Field(default=32, ge=4, description="Token embedding width")
    layers: int = Field(default=2, ge=1, description="Transformer layer count")
    heads: int = Field(default=2, ge=1)
    patch_size: int = Field(default=8, ge=2)
    channels: List[int] = Field(default_factory=lambda: [16, 32], description="Encoder widths of the two conv blocks")

    @field_validator("channels")
    @classmethod
    def two_blocks(cls, v: List[int]) -> List[int]:
        if len(v) != 2 or min(v) < 1:
            raise ValueError("channels must list two positive widths")
        return v

    @model_validator(mode="after")
    def head_dims(self):
        if self.d % self.heads:
            raise ValueError(f"d={self.d} is not divisible by heads={self.heads}")
        if self.head_dim % 4:
            raise ValueError(f"head width {self.head_dim} must be divisible by 4 for 2D rotary embeddings")
        if self.patch_size % 2:
            raise ValueError(f"patch_size={self.patch_size} must be even (the encoder pools by 2)")
        return self

    @property
    def head_dim(self) -> int:
        return self.d // self.heads


class PatchToken(BaseModel):
    """A single token: embedding z_k, its patch-grid coordinate and its kind."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    embedding: Tensor
    coord: Tuple[float, float]
    kind: TokenKind

    @field_validator("coord")
    @classmethod
    def nonnegative(cls, v):
        if v[0] < 0 or v[1] < 0:
            raise ValueError(f"token coordinates must be nonnegative, got {v}")
        return v


class PatchTokens(BaseModel):
    """A batch of tokens stacked for the attention stack."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    embeddings: Tensor = Field(description="(T, d)")
    coords: np.ndarray = Field(description="(T, 2) patch-grid (y, x)")
    kinds: np.ndarray = Field(description="(T,) TokenKind values")

    @classmethod
    def from_tokens(cls, tokens: Sequence[PatchToken]) -> "PatchTokens":
        return cls(
            embeddings=F.stack([t.embedding for t in tokens]),
            coords=np.array([t.coord for t in tokens], dtype=np.float64).reshape(-1, 2),
            kinds=np.array([int(t.kind) for t in tokens], dtype=np.int64),
        )

    @classmethod
    def concat(cls, parts: Sequence["PatchTokens"]) -> "PatchTokens":
        return cls(
            embeddings=F.concat([p.embeddings for p in parts], axis=0),
            coords=np.concatenate([p.coords for p in parts], axis=0),
            kinds=np.concatenate([p.kinds for p in parts], axis=0),
        )

    def __len__(self) -> int:
        return self.embeddings.shape[0]
