"""Flat config format: parsing, diagnostics, round-trips, resolution."""

import pytest

from msar.blocks import MsarSettings
from msar.config import (ExperimentConfig, parse_config, serialize_config,
                         msar_settings, to_network_spec, train_settings)


def test_defaults_from_empty_text():
    cfg = parse_config("")
    assert cfg == ExperimentConfig()
    assert cfg.optimizer_momentum == 0.9
    assert cfg.optimizer_weight_decay == 1e-4
    assert cfg.optimizer_drops == (80, 120)
    assert cfg.run_precision == 64
    assert cfg.msar_scales == (1, 2, 4)
    assert not cfg.msar_enabled


def test_comments_and_blank_lines_ignored():
    cfg = parse_config("\n# a comment\n  \nrun.seed = 9\n")
    assert cfg.run_seed == 9


def test_scales_parse_and_reject_zero():
    cfg = parse_config("msar.scales = 1,2,8\n")
    assert cfg.msar_scales == (1, 2, 8)
    with pytest.raises(ValueError, match="line 1"):
        parse_config("msar.scales = 0\n")
    with pytest.raises(ValueError, match="line 3"):
        parse_config("run.seed = 1\nrun.epochs = 5\nmsar.scales = 2,2\n")


def test_unknown_and_malformed_keys_carry_line_numbers():
    with pytest.raises(ValueError, match="line 2.*unknown key"):
        parse_config("run.seed = 1\nnetwork.depht = 20\n")
    with pytest.raises(ValueError, match="line 1"):
        parse_config("just some words\n")
    with pytest.raises(ValueError, match="line 2.*duplicate"):
        parse_config("run.seed = 1\nrun.seed = 2\n")


def test_type_errors_are_line_precise():
    with pytest.raises(ValueError, match="line 1"):
        parse_config("run.epochs = many\n")
    with pytest.raises(ValueError, match="line 1"):
        parse_config("msar.enabled = yes\n")
    with pytest.raises(ValueError, match="line 1"):
        parse_config("network.stages = 16:3\n")


def test_roundtrip_is_identity():
    text = ("network.preset = resnet32\nmsar.enabled = on\n"
            "msar.strategy = sliding\noptimizer.lr = 0.05\n"
            "data.train_path = /data/train.bin\nrun.log_timing = off\n")
    cfg = parse_config(text)
    canon = serialize_config(cfg)
    again = parse_config(canon)
    assert again == cfg
    assert serialize_config(again) == canon


def test_every_preset_resolves():
    for preset, family in [("resnet20", "residual"), ("resnet110", "residual"),
                           ("densenet100", "dense"),
                           ("resnet18-ilsvrc", "residual"),
                           ("resnet34-ilsvrc", "residual"),
                           ("resnext50-ilsvrc", "grouped")]:
        cfg = parse_config(f"network.preset = {preset}\n")
        spec = to_network_spec(cfg)
        assert spec.family == family


def test_preset_with_recalibration_tags_name():
    cfg = parse_config("network.preset = resnet56\nmsar.enabled = on\n")
    spec = to_network_spec(cfg)
    assert spec.name == "resnet56-msar"
    assert spec.msar == MsarSettings(scales=(1, 2, 4), strategy="regional")


def test_depth_shorthand():
    cfg = parse_config("network.kind = dense\nnetwork.depth = 40\n"
                       "network.growth = 24\n")
    spec = to_network_spec(cfg)
    assert spec.family == "dense"
    assert spec.growth == 24
    assert spec.stem_width == 48


def test_custom_stages():
    cfg = parse_config("network.stages = 8:1:1,16:2:2\nnetwork.classes = 2\n")
    spec = to_network_spec(cfg)
    assert [(s.width, s.blocks, s.stride) for s in spec.stages] == [(8, 1, 1), (16, 2, 2)]
    assert spec.stem_width == 8  # defaults to the first stage width


def test_network_requires_some_shape():
    with pytest.raises(ValueError, match="preset"):
        to_network_spec(parse_config(""))


def test_msar_settings_resolution():
    assert msar_settings(parse_config("")) is None
    cfg = parse_config("msar.enabled = on\nmsar.scales = 2\n"
                       "msar.stage_mode = single\n")
    got = msar_settings(cfg)
    assert got == MsarSettings(scales=(2,), strategy="regional",
                               stage_mode="single")


def test_train_settings_resolution():
    cfg = parse_config("optimizer.lr = 0.2\noptimizer.drops = 10,20\n"
                       "run.epochs = 25\nrun.batch_size = 64\nrun.seed = 3\n")
    ts = train_settings(cfg)
    assert ts.lr == 0.2
    assert ts.drops == (10, 20)
    assert ts.epochs == 25
    assert ts.batch_size == 64
    assert ts.seed == 3
    assert ts.momentum == 0.9


def test_float_values_survive_roundtrip_exactly():
    cfg = parse_config("optimizer.lr = 0.30000000000000004\n")
    text = serialize_config(cfg)
    assert parse_config(text).optimizer_lr == cfg.optimizer_lr
