"""Model factories shared by the CLI and the tests."""

import logging
from pathlib import Path
from typing import Optional, Tuple, Union

from .baseline import GlobalModelConfig, init_global_model
from .cascade import CascadeConfig
from .errors import CheckpointError
from .model import init_patch_model
from .numerics import ParamSet, RngStream, load_params
from .object_models import Arch
from .settings import RunSettings

logger = logging.getLogger(__name__)

INIT_STREAM = 0x1417

ModelConfigs = Union[CascadeConfig, GlobalModelConfig]


def init_model(arch: Arch, settings: RunSettings) -> Tuple[ModelConfigs, ParamSet]:
    """Fresh (config, params) for ``arch``, seeded from ``settings.seed``."""
    rng = RngStream(settings.seed, INIT_STREAM)
    if arch == "global":
        return settings.global_model, init_global_model(settings.global_model, rng)
    config = settings.cascade_config()
    return config, init_patch_model(config.model, rng)


def load_model(
    arch: Arch, settings: RunSettings, checkpoint: Optional[Path], option: str = "--checkpoint"
) -> Tuple[ModelConfigs, ParamSet]:
    """(config, params) with parameters read from ``checkpoint``; ``option`` names the flag that sets it."""
    if checkpoint is None:
        raise CheckpointError(f"no checkpoint given for the {arch} model; pass {option} PATH")
    checkpoint = Path(checkpoint)
    if not checkpoint.is_file():
        raise CheckpointError(f"checkpoint not found: {checkpoint}")
    config, params = init_model(arch, settings)
    load_params(checkpoint, params)
    logger.info("loaded %s parameters from %s", arch, checkpoint)
    return config, params
