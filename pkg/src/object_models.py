"""Pydantic models for the structured results the evaluation code reports."""

import math
from typing import Dict, List, Literal

from pydantic import BaseModel, Field, computed_field, model_validator

Arch = Literal["cascade", "global"]

FLOP_CONVENTION = "1 multiply-add = 2 FLOPs"


class FlopsReport(BaseModel):
    """
    Analytic operation count of one architecture at one input resolution.

    Components are counted from closed-form formulas (see ``formulas``), not
    measured, so reports are identical on every platform.
    """

    arch: Arch
    resolution: int = Field(ge=1)

    # Patch or pixel encoders, including context pairs.
    encoder: int = Field(ge=0)
    # Score and mixing products plus q/k/v/o projections.
    attention: int = Field(ge=0)
    # Transformer MLPs.
    feedforward: int = Field(ge=0)
    decoder: int = Field(ge=0)
    # Entropy maps, candidate means, boundary weighting.
    sampling: int = Field(default=0, ge=0)
    # Overlap averaging, fusion and the final upsample.
    aggregation: int = Field(default=0, ge=0)

    formulas: Dict[str, str] = Field(default_factory=dict)
    convention: str = FLOP_CONVENTION

    @computed_field
    @property
    def total(self) -> int:
        return self.encoder + self.attention + self.feedforward + self.decoder + self.sampling + self.aggregation

    @property
    def other(self) -> int:
        """Everything outside attention, encoder and decoder."""
        return self.total - self.attention - self.encoder - self.decoder


class DiceResult(BaseModel):
    """
    Dice over a set of episodes.

    Mean and standard deviation use exactly rounded sums, so they do not
    depend on the order in which episode scores arrive.
    """

    episode_ids: List[str]
    per_episode: List[float]

    @model_validator(mode="after")
    def check_scores(self):
        if len(self.episode_ids) != len(self.per_episode):
            raise ValueError("episode_ids and per_episode differ in length")
        if any(not 0.0 <= v <= 1.0 for v in self.per_episode):
            raise ValueError("Dice scores must lie in [0, 1]")
        return self

    @classmethod
    def from_scores(cls, scores: Dict[str, float]) -> "DiceResult":
        ids = sorted(scores)
        return cls(episode_ids=ids, per_episode=[float(scores[i]) for i in ids])

    @computed_field
    @property
    def n(self) -> int:
        return len(self.per_episode)

    @computed_field
    @property
    def mean(self) -> float:
        if not self.per_episode:
            return float("nan")
        m = math.fsum(self.per_episode) / self.n
        return min(max(m, min(self.per_episode)), max(self.per_episode))

    @computed_field
    @property
    def std(self) -> float:
        """Population standard deviation."""
        if not self.per_episode:
            return float("nan")
        m = self.mean
        return math.sqrt(math.fsum((v - m) ** 2 for v in self.per_episode) / self.n)


class EpisodeScore(BaseModel):
    episode_id: str
    class_name: str
    arch: Arch
    dice: float = Field(ge=0.0, le=1.0)
    foreground: int = Field(ge=0)
