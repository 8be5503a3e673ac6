from pathlib import Path

import pytest
import yaml

from src.errors import ConfigError
from src.settings import LOCK_FILE, RunSettings, load_settings


def _write(tmp_path, data, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def test_defaults():
    settings = load_settings()
    assert settings.seed == 0
    assert settings.out == Path("runs/default")
    assert settings.data.resolution == 64 and settings.data.episodes == 512
    assert settings.cascade_config().resolutions == [16, 32, 64]
    assert settings.bench.resolutions == [64, 128, 256, 512]
    assert settings.train.arch == "cascade"


def test_yaml_then_overrides(tmp_path):
    path = _write(tmp_path, {"seed": 5, "data": {"resolution": 32, "episodes": 20}, "train": {"steps": 7}})
    settings = load_settings(path, seed=None, data={"episodes": 40, "n_context": None}, train={"lr": 0.5})
    assert settings.seed == 5
    assert settings.data.resolution == 32
    assert settings.data.episodes == 40
    assert settings.data.n_context == 3
    assert settings.train.steps == 7 and settings.train.lr == 0.5


def test_override_section_missing_from_file(tmp_path):
    path = _write(tmp_path, {"seed": 1})
    settings = load_settings(path, eval={"split": "train", "arch": None})
    assert settings.eval.split == "train"
    assert settings.eval.arch == "cascade"


def test_bench_resolutions_are_sorted_and_unique():
    assert load_settings(bench={"resolutions": [256, 64, 64]}).bench.resolutions == [64, 256]
    with pytest.raises(ConfigError):
        load_settings(bench={"resolutions": []})


@pytest.mark.parametrize(
    "overrides",
    [
        {"seed": -1},
        {"data": {"episodes": 1}},
        {"unknown_key": 1},
        {"train": {"arch": "unet"}},
        {"model": {"d": 30, "heads": 4}},
    ],
)
def test_invalid_values_raise_config_error(overrides):
    with pytest.raises(ConfigError):
        load_settings(**overrides)


def test_inconsistent_cascade_schedule(tmp_path):
    settings = load_settings(model={"patch_size": 4})
    with pytest.raises(ConfigError):
        settings.cascade_config()


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_settings(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: [1, 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_settings(bad)


def test_environment_is_ignored(monkeypatch):
    monkeypatch.setenv("SEED", "99")
    monkeypatch.setenv("seed", "99")
    assert load_settings().seed == 0
    assert RunSettings().seed == 0


def test_lock_round_trip(tmp_path):
    settings = load_settings(seed=11, out=tmp_path / "run", cascade={"noise_enabled": False})
    path = settings.write_lock()
    assert path == tmp_path / "run" / LOCK_FILE
    assert load_settings(path) == settings


def test_manifest_from_data_settings():
    manifest = load_settings(data={"episodes": 8, "resolution": 32}).data.manifest(seed=4)
    assert manifest.total_episodes == 8
    assert manifest.episodes["heldout"] == 2
    assert manifest.resolution == 32 and manifest.seed == 4
