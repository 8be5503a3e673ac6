import pytest

from src.baseline import GlobalModelConfig
from src.cascade import CascadeConfig, LevelConfig
from src.data import generate_episode, get_class
from src.model import ModelConfig
from src.numerics import RngStream

from .factories import make_task


@pytest.fixture
def tiny_model():
    return ModelConfig(d=8, layers=2, heads=2, patch_size=8, channels=[2, 4])


@pytest.fixture
def tiny_cascade(tiny_model):
    """Two levels, 8 -> 16; level 2 selects every candidate."""
    return CascadeConfig(
        levels=[
            LevelConfig(resolution=8, k_target=1, k_context=1, patch_size=8, stride=8),
            LevelConfig(resolution=16, k_target=4, k_context=2, patch_size=8, stride=8),
        ],
        model=tiny_model,
        noise_enabled=False,
    )


@pytest.fixture
def tiny_global():
    return GlobalModelConfig(d=8, layers=1, heads=2, channels=[2, 4], resolution=8)


@pytest.fixture
def task16():
    return make_task(16)


@pytest.fixture
def shape_task():
    """A generated episode at r=32."""
    return generate_episode(get_class("disk"), 0, 32, RngStream(3, 1), n_context=2, episode_id="train-00000")
