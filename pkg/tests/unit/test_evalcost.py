import math
import random

import numpy as np
import pytest

from src.baseline import GlobalModelConfig, init_global_model
from src.cascade import CascadeConfig, LevelConfig
from src.errors import CostModelError, ShapeMismatchError
from src.evaluation import (
    SWEEP_COLUMNS,
    benchmark_sweep,
    class_table,
    crossover_resolution,
    dice_score,
    evaluate_episodes,
    flops_cascade,
    flops_cascade_at,
    flops_global,
)
from src.evaluation.runner import cascade_predictor, dump_patch_overlays, episodes_frame, global_predictor
from src.graph import forward
from src.model import ModelConfig, init_patch_model
from src.numerics import RngStream
from src.object_models import DiceResult

from .factories import make_task

RESOLUTIONS = [64, 128, 256, 512]


def _one_level(k_target, k_context=2, resolution=64, model=None):
    model = model or ModelConfig(d=8, layers=1, heads=2, patch_size=8, channels=[2, 4])
    return CascadeConfig(
        levels=[LevelConfig(resolution=resolution, k_target=k_target, k_context=k_context, stride=8)], model=model
    )


def _slope(xs, ys):
    return np.polyfit(np.log(xs), np.log(ys), 1)[0]


def test_dice_examples():
    a = np.zeros((4, 4))
    a[0, :] = 1
    b = np.zeros((4, 4))
    b[0, 2:] = 1
    b[1, :2] = 1
    assert dice_score(a, a) == 1.0
    assert dice_score(a, 1 - a) == 0.0
    assert dice_score(a, b) == 0.5
    assert dice_score(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0
    with pytest.raises(ShapeMismatchError):
        dice_score(a, np.zeros((2, 2)))


def test_dice_thresholds_probabilities_and_is_symmetric():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p, q = rng.uniform(size=(8, 8)), rng.uniform(size=(8, 8))
        assert dice_score(p, q) == dice_score(q, p)
    assert dice_score(np.full((2, 2), 0.5), np.ones((2, 2))) == 1.0
    assert dice_score(np.full((2, 2), 0.49), np.ones((2, 2))) == 0.0


def test_flops_components_add_up():
    configs = [CascadeConfig(), _one_level(4), _one_level(64, k_context=8, resolution=128)]
    for config in configs:
        for n_context in (1, 3):
            report = flops_cascade(config, n_context)
            parts = report.encoder + report.attention + report.feedforward + report.decoder
            assert report.total == parts + report.sampling + report.aggregation
            assert report.other == report.total - report.attention - report.encoder - report.decoder
    for r in (8, 32, 128):
        report = flops_global(GlobalModelConfig(), r)
        assert report.total == report.encoder + report.attention + report.feedforward + report.decoder
        assert report.sampling == 0 and report.aggregation == 0


def test_doubling_target_patches_roughly_quadruples_attention():
    small = flops_cascade(_one_level(256), n_context=3).attention
    large = flops_cascade(_one_level(512), n_context=3).attention
    assert 3.5 <= large / small <= 4.0


def test_cascade_attention_ignores_resolution():
    attention = {r: flops_cascade(_one_level(4, resolution=r)).attention for r in (16, 64, 256)}
    assert len(set(attention.values())) == 1


def test_single_level_matches_hand_count():
    config = _one_level(2, k_context=1, resolution=16)
    report = flops_cascade(config, n_context=1)
    # T = 3 tokens, d = 8, two heads, one layer, channels 2 -> 4, 8x8 patches.
    assert report.encoder == 3 * (4608 + 2304 + 64)
    assert report.attention == 288 + 1536
    assert report.feedforward == 3072
    assert report.decoder == 2 * (64 + 2304 + 9216 + 256)
    assert report.sampling == 5120
    assert report.aggregation == 256 + 1536 + 1024
    assert report.total == 57440
    assert "attention" in report.formulas


def test_empty_schedule_is_rejected():
    with pytest.raises(CostModelError):
        flops_cascade(CascadeConfig.model_construct(levels=[], model=ModelConfig()))
    with pytest.raises(CostModelError):
        flops_global(GlobalModelConfig(), 0)


def test_global_cost_grows_sixteenfold_per_doubling():
    config = GlobalModelConfig()
    assert flops_global(config, 512).total / flops_global(config, 256).total == pytest.approx(16.0, abs=0.5)
    ratio = flops_global(config, 4).total / flops_global(config, 2).total
    assert ratio < 16.0
    attention = [flops_global(config, r).attention for r in (64, 128)]
    assert 15.5 <= attention[1] / attention[0] <= 16.0


def test_attention_scaling_slopes():
    cascade = CascadeConfig()
    global_attention = [flops_global(GlobalModelConfig(), r).attention for r in RESOLUTIONS]
    cascade_attention = [flops_cascade_at(cascade, r).attention for r in RESOLUTIONS]
    assert _slope(RESOLUTIONS, global_attention) == pytest.approx(4.0, abs=0.1)
    assert _slope(RESOLUTIONS, cascade_attention) == pytest.approx(0.0, abs=0.1)


def test_cost_only_sweep_and_crossover():
    sweep = benchmark_sweep(RESOLUTIONS, CascadeConfig(), GlobalModelConfig())
    assert list(sweep.columns) == SWEEP_COLUMNS
    assert len(sweep) == 2 * len(RESOLUTIONS)
    assert sweep["dice_mean"].isna().all()
    global_totals = sweep[sweep["arch"] == "global"]["flops_total"].tolist()
    assert global_totals == sorted(global_totals)
    crossover = crossover_resolution(sweep)
    assert crossover is not None and crossover <= 512
    at_512 = sweep[sweep["resolution"] == 512].set_index("arch")["flops_total"]
    assert at_512["cascade"] < at_512["global"]


def test_crossover_absent():
    sweep = benchmark_sweep([64], CascadeConfig(), GlobalModelConfig())
    sweep.loc[sweep["arch"] == "cascade", "flops_total"] = 10**18
    assert crossover_resolution(sweep) is None


def test_dice_result_aggregation_is_order_independent():
    rng = np.random.default_rng(1)
    values = {f"ep-{i}": float(v) for i, v in enumerate(rng.uniform(size=37))}
    keys = list(values)
    random.Random(0).shuffle(keys)
    shuffled = DiceResult.from_scores({k: values[k] for k in keys})
    ordered = DiceResult.from_scores(values)
    assert shuffled.mean == ordered.mean and shuffled.std == ordered.std
    brute = list(values.values())
    mean = sum(brute) / len(brute)
    assert abs(ordered.mean - mean) <= 1e-12
    assert abs(ordered.std - math.sqrt(sum((v - mean) ** 2 for v in brute) / len(brute))) <= 1e-12
    assert min(brute) <= ordered.mean <= max(brute)
    assert ordered.n == 37


def test_evaluation_does_not_depend_on_jobs(tiny_cascade, tiny_model):
    params = init_patch_model(tiny_model, RngStream(0))
    tasks = [make_task(16, seed=i, episode_id=f"ep-{i}", class_name="disk" if i % 2 else "ring") for i in range(6)]
    predict = cascade_predictor(tiny_cascade.model_copy(update={"noise_enabled": True}), params, seed=3)
    serial, serial_scores = evaluate_episodes(tasks, predict, "cascade", jobs=1)
    parallel, parallel_scores = evaluate_episodes(list(reversed(tasks)), predict, "cascade", jobs=4)
    assert serial == parallel
    assert [s.episode_id for s in serial_scores] == [f"ep-{i}" for i in range(6)]
    assert episodes_frame(serial_scores).equals(episodes_frame(parallel_scores))

    table = class_table(serial_scores)
    assert table["class_name"].tolist() == ["disk", "ring", "Overall"]
    assert table.iloc[-1]["n"] == 6
    assert table.iloc[-1]["dice_mean"] == pytest.approx(serial.mean)


def test_sweep_with_trained_models_fills_dice(tiny_global):
    model = ModelConfig(d=8, layers=1, heads=2, patch_size=8, channels=[2, 4])
    cascade = CascadeConfig(
        levels=[
            LevelConfig(resolution=8, k_target=1, k_context=1, stride=8),
            LevelConfig(resolution=16, k_target=2, k_context=1, stride=8),
        ],
        model=model,
        noise_enabled=False,
    )
    global_config = tiny_global.model_copy(update={"resolution_cap": 16})
    tasks = [make_task(16, seed=i, episode_id=f"ep-{i}") for i in range(2)]
    sweep = benchmark_sweep(
        [16, 32],
        cascade,
        global_config,
        n_context=2,
        tasks=tasks,
        cascade_params=init_patch_model(model, RngStream(0)),
        global_params=init_global_model(global_config, RngStream(1)),
    )
    rows = sweep.set_index(["resolution", "arch"])
    assert rows.loc[(16, "cascade"), "n"] == 2
    assert rows.loc[(32, "cascade"), "n"] == 2
    assert rows.loc[(16, "global"), "n"] == 2
    assert np.isnan(rows.loc[(32, "global"), "dice_mean"])


def test_global_predictor_returns_input_resolution(tiny_global):
    predict = global_predictor(tiny_global, init_global_model(tiny_global, RngStream(0)))
    assert predict(make_task(16)).shape == (16, 16)


def test_patch_overlays(tmp_path, tiny_cascade, tiny_model, task16):
    pyramid = forward(task16, tiny_cascade, init_patch_model(tiny_model, RngStream(0)), RngStream(1))
    paths = dump_patch_overlays(task16, pyramid, tmp_path)
    assert [p.name for p in paths] == ["ep-0_level0_r8.pgm", "ep-0_level1_r16.pgm"]
    assert paths[1].read_bytes().startswith(b"P5")
