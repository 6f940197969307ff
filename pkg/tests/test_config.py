"""Config parsing, validation, and checkpoint serialization."""

import numpy as np
import pytest

from dhan.checkpoint import (
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from dhan.config import (
    ConfigError,
    RunConfig,
    apply_setting,
    config_from_dict,
    config_to_dict,
    load_config,
    parse_config_text,
)
from dhan.tensor import ParamStore
from dhan.time_sequence import TimeFusionMode


def test_defaults_match_published_hyperparameters():
    cfg = RunConfig()
    assert (cfg.d, cfg.d_prime, cfg.L, cfg.K) == (64, 256, 10, 20)
    assert (cfg.lr, cfg.batch_size, cfg.weight_decay, cfg.dropout) == (
        1e-3, 256, 1e-4, 0.2,
    )
    assert cfg.time_mode == "both" and cfg.layers == "S+E+N"
    assert cfg.dns_enabled and cfg.dns_k == 4 and cfg.dns_pool_size == 128
    assert cfg.n_eval_negatives == 99 and cfg.min_interactions == 15


def test_parse_config_text():
    cfg = parse_config_text("d = 32  # comment\n\nlayers = S+N\ndns.k = 2\n")
    assert cfg.d == 32 and cfg.layers == "S+N" and cfg.dns_k == 2


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config_text("nope = 1\n")


def test_bad_value_types():
    with pytest.raises(ConfigError):
        parse_config_text("d = abc\n")
    with pytest.raises(ConfigError):
        parse_config_text("dns.enabled = maybe\n")
    with pytest.raises(ConfigError):
        parse_config_text("just a line\n")


def test_validate_rejects_bad_combinations():
    with pytest.raises(ConfigError):
        RunConfig(time_mode="sometimes").validate()
    with pytest.raises(ConfigError):
        RunConfig(layers="S+Q").validate()
    with pytest.raises(ConfigError):
        RunConfig(heads=3).validate()
    with pytest.raises(ConfigError):
        RunConfig(d=10, heads=4).validate()
    with pytest.raises(ConfigError):
        RunConfig(dropout=1.0).validate()
    with pytest.raises(ConfigError):
        RunConfig(epochs=-1).validate()


def test_fusion_mode_and_layer_set():
    cfg = RunConfig(time_mode="relative", layers="S + E")
    assert cfg.fusion_mode() is TimeFusionMode.RELATIVE
    assert cfg.layer_set() == frozenset("SE")


def test_load_config_overrides_win(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("d = 32\nepochs = 5\n")
    cfg = load_config(str(p), ["epochs=9"])
    assert cfg.d == 32 and cfg.epochs == 9
    with pytest.raises(ConfigError):
        load_config(str(p), ["no-equals-sign"])


def test_env_seed_override(tmp_path, monkeypatch):
    monkeypatch.setenv("DHAN_SEED", "123")
    assert load_config(None, []).seed == 123
    monkeypatch.setenv("DHAN_SEED", "xyz")
    with pytest.raises(ConfigError):
        load_config(None, [])


def test_apply_setting_alias():
    cfg = RunConfig()
    apply_setting(cfg, "dns.pool_size", "64")
    assert cfg.dns_pool_size == 64


def test_config_dict_round_trip():
    cfg = RunConfig(d=16, layers="E+N", dns_enabled=False)
    assert config_from_dict(config_to_dict(cfg)) == cfg


# -- checkpoints --------------------------------------------------------------


def make_store(rng):
    store = ParamStore()
    store.add("a", rng.normal(size=(3, 4)))
    store.add("b", rng.normal(size=7))
    return store


def test_checkpoint_round_trip_bitwise(tmp_path, rng):
    store = make_store(rng)
    cfg = RunConfig(d=16)
    p = tmp_path / "ck.dhan"
    save_checkpoint(p, store, cfg, epoch=3,
                    metric_history=[{"hr@10": 0.5}], loss_history=[0.7])
    ck = load_checkpoint(p)
    assert ck.config == cfg
    assert ck.epoch == 3
    assert ck.metric_history == [{"hr@10": 0.5}] and ck.loss_history == [0.7]
    fresh = make_store(np.random.default_rng(99))
    ck.restore_into(fresh)
    for name in store:
        assert fresh[name].data.tobytes() == store[name].data.tobytes()


def test_checkpoint_rejects_wrong_magic(tmp_path, rng):
    p = tmp_path / "bad.dhan"
    p.write_bytes(b"NOTDHAN!" + b"\x00" * 32)
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_checkpoint_rejects_truncation(tmp_path, rng):
    p = tmp_path / "ck.dhan"
    save_checkpoint(p, make_store(rng), RunConfig(), 0, [], [])
    blob = p.read_bytes()
    p.write_bytes(blob[:-16])
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_checkpoint_restore_shape_mismatch(tmp_path, rng):
    p = tmp_path / "ck.dhan"
    save_checkpoint(p, make_store(rng), RunConfig(), 0, [], [])
    ck = load_checkpoint(p)
    other = ParamStore()
    other.add("a", np.zeros((2, 2)))
    other.add("b", np.zeros(7))
    with pytest.raises(CheckpointError):
        ck.restore_into(other)
