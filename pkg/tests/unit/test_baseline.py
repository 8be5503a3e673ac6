import numpy as np
import pytest
from pydantic import ValidationError

from src.baseline import GlobalModelConfig, global_forward, global_logits, init_global_model, working_resolution
from src.cascade import level_loss, resample_mask
from src.errors import ResolutionCapError
from src.numerics import RngStream, backward, finite_diff_grad, recording, relative_error

from .factories import make_task


def test_logits_at_working_resolution(tiny_global):
    params = init_global_model(tiny_global, RngStream(0))
    task = make_task(16)
    assert global_logits(task, tiny_global, params).shape == (8, 8)
    probs = global_forward(task, tiny_global, params)
    assert probs.shape == (16, 16)
    assert probs.min() >= 0.0 and probs.max() <= 1.0


def test_none_resolution_uses_input_size(tiny_global):
    config = tiny_global.model_copy(update={"resolution": None})
    assert working_resolution(config, make_task(16)) == 16


def test_resolution_cap(tiny_global):
    config = tiny_global.model_copy(update={"resolution": None, "resolution_cap": 8})
    with pytest.raises(ResolutionCapError, match="cost-only"):
        global_logits(make_task(16), config, init_global_model(config, RngStream(0)))


def test_prediction_depends_on_context(tiny_global):
    params = init_global_model(tiny_global, RngStream(0))
    task = make_task(16)
    flipped = task.with_context([c.model_copy(update={"image": 1.0 - c.image}) for c in task.context])
    assert not np.allclose(global_logits(task, tiny_global, params).numpy(), global_logits(flipped, tiny_global, params).numpy())


def test_every_block_receives_gradient(tiny_global):
    params = init_global_model(tiny_global, RngStream(0))
    task = make_task(16)
    with recording():
        logits = global_logits(task, tiny_global, params)
        grads = backward(level_loss(logits, resample_mask(task.target_mask, 8)), params)
    for name in ("enc.conv1.w", "layers.0.self.wq", "layers.0.cross.wk", "layers.0.ffn.1.w", "dec.head.w"):
        assert np.abs(grads[name].numpy()).max() > 0, name


def test_config_validation():
    with pytest.raises(ValidationError):
        GlobalModelConfig(d=12, heads=2)
    with pytest.raises(ValidationError):
        GlobalModelConfig(channels=[4, 4, 4])


@pytest.mark.parametrize("seed", [0, 3])
def test_baseline_gradients_match_finite_differences(seed):
    config = GlobalModelConfig(d=4, layers=1, heads=1, channels=[2, 2], resolution=8)
    params = init_global_model(config, RngStream(seed))
    task = make_task(16, seed=seed)
    target = resample_mask(task.target_mask, 8)

    def loss(p):
        return level_loss(global_logits(task, config, p), target)

    with recording():
        analytic = backward(loss(params), params)
    errors = relative_error(analytic, finite_diff_grad(loss, params))
    worst = max(errors, key=errors.get)
    assert errors[worst] <= 1e-4, (worst, errors[worst])
