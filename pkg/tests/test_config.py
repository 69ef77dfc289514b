import pytest
import yaml

from glioseg.config import load_run_config, run_config_from_dict, save_run_config
from glioseg.errors import ConfigError


def test_empty_config_gets_defaults():
    cfg = run_config_from_dict({})
    assert cfg.train.architecture == "bifpn"
    assert cfg.scheduler.kind == "cosine"
    assert cfg.network.encoder_channels == (16, 32, 64, 128)
    assert cfg.augment.crop_size == (128, 128, 96)


def test_unetpp_defaults():
    cfg = run_config_from_dict({"train": {"architecture": "unetpp"}})
    assert cfg.scheduler.kind == "polynomial"
    assert cfg.network.encoder_channels == (32, 64, 128, 256)
    assert cfg.network.lstm_layers == 3
    assert cfg.augment.crop_size == (128, 128, 128)
    assert cfg.train.resolved_batch_size == 2


def test_run_seed_flows_into_training():
    cfg = run_config_from_dict({"seed": 17})
    assert cfg.train.seed == 17
    cfg = run_config_from_dict({"seed": 17, "train": {"seed": 4}})
    assert cfg.train.seed == 4


def test_explicit_values_override_defaults():
    cfg = run_config_from_dict(
        {
            "train": {"architecture": "unetpp"},
            "scheduler": {"kind": "cosine"},
            "augment": {"crop_size": [64, 64, 64]},
        }
    )
    assert cfg.scheduler.kind == "cosine"
    assert cfg.augment.crop_size == (64, 64, 64)


def test_unknown_top_level_key():
    with pytest.raises(ConfigError, match="optimizer"):
        run_config_from_dict({"optimizer": {}})


def test_unknown_nested_key():
    with pytest.raises(ConfigError, match="momentum"):
        run_config_from_dict({"train": {"momentum": 0.9}})


def test_invalid_scheduler_kind_names_field():
    with pytest.raises(ConfigError, match="kind"):
        run_config_from_dict({"scheduler": {"kind": "exponential"}})


def test_yaml_roundtrip(tmp_path):
    cfg = run_config_from_dict(
        {"seed": 5, "train": {"architecture": "unetpp"}, "loss": {"focal_gamma": 1.5}}
    )
    path = tmp_path / "run.yaml"
    save_run_config(cfg, path)
    loaded = load_run_config(path)
    assert loaded == cfg


def test_tta_flip_lists_become_tuples(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({"inference": {"tta_flips": [[], [0], [0, 2]]}}))
    cfg = load_run_config(path)
    assert cfg.inference.tta_flips == ((), (0,), (0, 2))


def test_missing_file():
    with pytest.raises(ConfigError):
        load_run_config("/nonexistent/run.yaml")
