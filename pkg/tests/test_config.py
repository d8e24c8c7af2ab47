import copy
import json

import pytest

from fedcontrib.config import IdxSource, SyntheticSource, config_from_dict, load_preset, parse_config
from fedcontrib.errors import ConfigError

MINIMAL = {
    "dataset": {"source": "synthetic"},
    "clients": [
        {"id": 1, "num_samples": 50, "classes": [0, 1, 2]},
        {"id": 2, "num_samples": 50, "classes": [3, 4]},
        {"id": 3, "num_samples": 50, "classes": [5, 6, 7, 8, 9]},
    ],
    "hyper": {"batch_size": 10, "local_epochs": 1, "learning_rate": 0.1, "rounds": 2},
    "methods": ["swc"],
    "seeds": [0],
}


def with_change(path, value):
    doc = copy.deepcopy(MINIMAL)
    node = doc
    keys = path.split(".")
    for k in keys[:-1]:
        node = node[int(k)] if isinstance(node, list) else node.setdefault(k, {})
    if isinstance(node, list):
        node[int(keys[-1])] = value
    else:
        node[keys[-1]] = value
    return doc


def test_minimal_config_gets_defaults():
    cfg = config_from_dict(MINIMAL)
    assert cfg.score_basis == "accuracy"
    assert cfg.allow_overlap is False
    assert cfg.weighting == "samples"
    assert cfg.hidden == (32,)
    assert cfg.dataset == SyntheticSource()
    assert [c.variety for c in cfg.clients] == [3, 2, 5]


def test_parse_from_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(MINIMAL))
    assert parse_config(p) == config_from_dict(MINIMAL)


def test_config_dict_round_trip():
    cfg = config_from_dict(MINIMAL)
    assert config_from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("path,value,where", [
    ("hyper.learning_rate", -1, "hyper.learning_rate"),
    ("hyper.batch_size", 0, "hyper.batch_size"),
    ("hyper.rounds", 2.5, "hyper.rounds"),
    ("seeds", [], "seeds"),
    ("seeds", ["a"], "seeds[0]"),
    ("methods", [], "methods"),
    ("methods", ["swc", "shapley"], "methods[1]"),
    ("clients.1.classes", [3, 12], "clients[1].classes"),
    ("clients.0.num_samples", 0, "clients[0].num_samples"),
    ("clients.2.id", 1, "clients[2].id"),
    ("dataset.spread", 0, "dataset.spread"),
    ("dataset.source", "csv", "dataset.source"),
    ("options.score_basis", "f1", "options.score_basis"),
    ("options.allow_overlap", "yes", "options.allow_overlap"),
    ("schema_version", 2, "schema_version"),
])
def test_invalid_values_name_their_path(path, value, where):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(with_change(path, value))
    assert exc.value.path == where
    assert where in str(exc.value)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({**MINIMAL, "extra": 1})
    assert exc.value.path == "extra"
    with pytest.raises(ConfigError) as exc:
        config_from_dict(with_change("hyper.momentum", 0.9))
    assert exc.value.path == "hyper.momentum"


@pytest.mark.parametrize("key", ["dataset", "clients", "hyper", "methods", "seeds"])
def test_missing_key(key):
    doc = {k: v for k, v in MINIMAL.items() if k != key}
    with pytest.raises(ConfigError) as exc:
        config_from_dict(doc)
    assert exc.value.path == key


def test_idx_paths_resolve_relative_to_config(tmp_path):
    doc = dict(MINIMAL, dataset={"source": "idx", "train_images": "a", "train_labels": "b",
                                  "test_images": "c", "test_labels": "d"})
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    ds = parse_config(p).dataset
    assert isinstance(ds, IdxSource)
    assert ds.train_images == str(tmp_path / "a")
    assert ds.train_limit == 50000


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(ConfigError):
        parse_config(p)


def test_full_presets():
    for name in ("full_variety7", "full_variety5", "mnist_variety7"):
        cfg = load_preset(name)
        h = cfg.hyper
        assert (h.batch_size, h.local_epochs, h.rounds, h.learning_rate) == (50, 30, 30, 0.25)
        assert [c.num_samples for c in cfg.clients] == [350, 350, 350]
    assert [c.variety for c in load_preset("full_variety7").clients] == [7, 7, 3]
    assert [c.variety for c in load_preset("full_variety5").clients] == [7, 5, 3]


def test_unknown_preset():
    with pytest.raises(ConfigError, match="available"):
        load_preset("nope")
