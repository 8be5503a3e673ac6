"""Run settings: YAML file plus command-line overrides.

Priority is overrides > YAML file > defaults. Environment variables and
dotenv files are not read.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict, YamlConfigSettingsSource

from .baseline import GlobalModelConfig
from .cascade import CascadeConfig, LevelConfig, default_levels
from .data.dataset import DatasetManifest
from .data.synthetic import DEFAULT_NOISE_SIGMA
from .errors import ConfigError
from .model import ModelConfig
from .object_models import Arch
from .training import TrainConfig

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = Path("configs/base.yaml")
LOCK_FILE = "run.lock"


class DataSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    resolution: int = Field(default=64, ge=16)
    episodes: int = Field(default=512, ge=2)
    heldout_fraction: float = Field(default=0.25, gt=0.0, lt=1.0)
    n_context: int = Field(default=3, ge=1)
    episodes_per_case: int = Field(default=2, ge=1)
    noise_sigma: float = Field(default=DEFAULT_NOISE_SIGMA, ge=0.0)

    def manifest(self, seed: int) -> DatasetManifest:
        return DatasetManifest.for_total(
            seed,
            self.episodes,
            heldout_fraction=self.heldout_fraction,
            resolution=self.resolution,
            n_context=self.n_context,
            episodes_per_case=self.episodes_per_case,
            noise_sigma=self.noise_sigma,
        )


class CascadeSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    levels: List[LevelConfig] = Field(default_factory=default_levels)
    noise_enabled: bool = True
    entropy_floor: float = Field(default=1e-9, ge=0.0)


class EvalSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    arch: Arch = "cascade"
    split: Literal["train", "heldout"] = "heldout"
    allow_train: bool = False
    n_context: Optional[int] = Field(default=None, ge=1)
    dump_patches: bool = False
    checkpoint: Optional[Path] = None


class BenchSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    resolutions: List[int] = Field(default_factory=lambda: [64, 128, 256, 512])
    n_context: int = Field(default=3, ge=1)
    cost_only: bool = False
    episodes: Optional[int] = Field(default=None, ge=1)
    cascade_checkpoint: Optional[Path] = None
    global_checkpoint: Optional[Path] = None

    @field_validator("resolutions")
    @classmethod
    def positive_sorted(cls, v):
        if not v or min(v) < 1:
            raise ValueError("resolutions must be a nonempty list of positive integers")
        return sorted(set(v))


class RunSettings(BaseSettings):
    model_config = SettingsConfigDict(extra="forbid")

    seed: int = Field(default=0, ge=0, lt=2**64)
    out: Path = Path("runs/default")
    data_dir: Path = Path("data")
    jobs: int = Field(default=1, ge=1)
    debug: bool = False

    data: DataSettings = Field(default_factory=DataSettings)
    model: ModelConfig = Field(default_factory=ModelConfig)
    cascade: CascadeSettings = Field(default_factory=CascadeSettings)
    global_model: GlobalModelConfig = Field(default_factory=GlobalModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalSettings = Field(default_factory=EvalSettings)
    bench: BenchSettings = Field(default_factory=BenchSettings)

    @classmethod
    def settings_customise_sources(cls, settings_cls, init_settings, env_settings, dotenv_settings, file_secret_settings):
        return (init_settings,)

    def cascade_config(self) -> CascadeConfig:
        try:
            return CascadeConfig(
                levels=self.cascade.levels,
                model=self.model,
                noise_enabled=self.cascade.noise_enabled,
                entropy_floor=self.cascade.entropy_floor,
            )
        except ValidationError as exc:
            raise ConfigError(f"invalid cascade schedule: {exc}") from exc

    def write_lock(self, out: Optional[Path] = None) -> Path:
        """Dump the fully resolved settings next to the run outputs."""
        out = Path(out or self.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / LOCK_FILE
        path.write_text(yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False), encoding="utf-8")
        return path


def _deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            current = merged.get(key)
            merged[key] = _deep_merge(current if isinstance(current, dict) else {}, value)
        else:
            merged[key] = value
    return merged


def load_settings(path: Optional[Union[str, Path]] = None, **overrides: Any) -> RunSettings:
    """Resolve settings from ``path`` (YAML) and keyword overrides.

    Override values of ``None`` mean "not given" and leave the file value in
    place; nested sections are given as dicts and merged key by key.
    """
    values: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            values = YamlConfigSettingsSource(RunSettings, yaml_file=path)() or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    try:
        settings = RunSettings(**_deep_merge(values, overrides))
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    logger.debug("resolved settings from %s", path or "defaults")
    return settings
