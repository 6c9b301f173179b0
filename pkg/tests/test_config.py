import json
from pathlib import Path

import pytest
import torch

from app.config import load_environment, load_run_config, parse_run_config
from app.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]


def test_documented_defaults_match_schema():
    assert load_run_config(ROOT / "configs" / "default.toml") == parse_run_config({})


def test_default_hyperparameters():
    train = parse_run_config({}).train
    assert (train.inner_lr, train.outer_lr, train.mask_lr, train.disc_lr) == (1e-2, 3e-5, 1e-4, 1e-4)
    assert (train.beta1, train.beta2) == (0.5, 0.999)
    assert train.weights == (1.0, 0.5, 0.1, 0.002)


def test_tiny_fixture():
    config = load_run_config(ROOT / "fixtures" / "tiny.toml")
    assert config.train.steps == 50
    assert config.masknet.layers == 8
    assert config.seed == 7
    assert config.srnet.scale == config.scale == 4


def test_acceptance_fixture_matches_tiny_architecture():
    tiny = load_run_config(ROOT / "fixtures" / "tiny.toml")
    config = load_run_config(ROOT / "fixtures" / "acceptance.toml")
    assert config.train.steps == 400
    assert config.train.tasks_per_step == 4
    assert config.train.mask_lr > tiny.train.mask_lr
    assert config.restorer.strength == config.eval.mask_strength == 0.8
    for section in ("srnet", "masknet", "discriminator", "perceptual", "scenes"):
        assert getattr(config, section) == getattr(tiny, section)


def test_missing_path_gives_defaults():
    assert load_run_config(None) == parse_run_config({})


def test_echo_round_trip(tiny_config):
    echoed = json.loads(json.dumps(tiny_config.echo()))
    assert parse_run_config(echoed) == tiny_config


def test_adapt_lr_falls_back_to_inner_lr():
    assert parse_run_config({}).adapt_lr == 1e-2
    assert parse_run_config({"adapt": {"inner_lr": 5e-3}}).adapt_lr == 5e-3


@pytest.mark.parametrize(
    "payload",
    [
        {"unknown": 1},
        {"train": {"inner_lr": 0.0}},
        {"train": {"outer_lr": -1e-3}},
        {"train": {"inner_steps": 2}},
        {"scale": 2},
        {"scenes": {"size": [30, 30]}},
        {"masknet": {"kernel_size": 4}},
        {"restorer": {"strength": 1.5}},
        {"degradation": {"preset": "jpeg-only"}},
        {"workers": 0},
    ],
)
def test_invalid_configs(payload):
    with pytest.raises(ConfigError):
        parse_run_config(payload)


def test_profile_override_is_validated():
    with pytest.raises(ConfigError):
        parse_run_config({"degradation": {"stage1": {"sigma": [3.0, 0.2]}}})


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.toml")


def test_broken_toml(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("seed = = 1\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(path)


def test_load_environment_reads_threads(monkeypatch):
    monkeypatch.setenv("FSR_NUM_THREADS", "2")
    load_environment()
    assert torch.get_num_threads() == 2
    torch.set_num_threads(1)
