import pytest

from spikenas.config import RunConfig, config_from_dict, dump_config, load_config
from spikenas.errors import ConfigError


def test_defaults_validate():
    cfg = load_config(None)
    assert cfg == RunConfig()
    assert cfg.train.lr == 0.1 and cfg.train.epochs == 20 and not cfg.train.augment
    assert cfg.network.timesteps == 5 and cfg.scoring.layers == "downstream"
    net = cfg.network_config()
    assert net.input_dims == (3, 16, 16) and net.num_classes == 4


def test_dump_load_round_trip(tmp_path):
    cfg = config_from_dict({"network": {"channels": 8}, "train": {"lr": 0.05},
                            "dataset": {"synthetic": {"noise_std": 0.5}}})
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg
    assert dump_config(load_config(path)) == dump_config(cfg)


@pytest.mark.parametrize("data", [
    {"netwrok": {}},
    {"network": {"chanels": 4}},
    {"dataset": {"synthetic": {"colour": 1}}},
])
def test_unknown_keys_rejected(data):
    with pytest.raises(ConfigError, match="unknown key"):
        config_from_dict(data)


@pytest.mark.parametrize("data", [
    {"network": {"channels": "16"}},
    {"network": {"channels": 1.5}},
    {"network": {"channels": True}},
    {"train": {"augment": 1}},
    {"train": {"lr": "fast"}},
    {"search": {"mode": 3}},
    {"network": []},
])
def test_types_checked(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_int_accepted_for_float():
    assert config_from_dict({"train": {"lr": 1}}).train.lr == 1.0


@pytest.mark.parametrize("data", [
    {"search": {"num_candidates": 0}},
    {"search": {"mode": "sideways"}},
    {"scoring": {"layers": "some"}},
    {"correlate": {"population": 4}},
    {"dataset": {"kind": "cifar10"}},
    {"dataset": {"kind": "mnist"}},
    {"train": {"epochs": 0}},
    {"network": {"timesteps": 0}},
])
def test_values_checked(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("network: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    assert load_config(empty) == RunConfig()
