import dataclasses
import json
import tempfile
from pathlib import Path
from typing import Tuple

import pytest
import yaml

from cascade_volcomp.errors import ConfigError
from cascade_volcomp.train import (
    OptimizerConfig,
    TrainConfig,
    deep_to_flat,
    dump_config,
    flat_to_deep,
    load_config,
    schema_keys,
    to_dict_format,
)
from cascade_volcomp.train.registry import cfg_serializable, get_class


@dataclasses.dataclass
class InnerConfig:
    i: int = 1
    f: float = 0.5
    b: bool = True
    s: str = "abc"
    t: Tuple[int, int] = (1, 2)


@dataclasses.dataclass
class OuterConfig:
    inner: InnerConfig = dataclasses.field(default_factory=InnerConfig)
    seed: int = 0


@cfg_serializable
class SimpleClass:
    cfg_class = InnerConfig


def test_flat_deep_roundtrip():
    cfg = {"a": {"b": 1, "c": {"d": 2}}, "e": 3}
    flat = deep_to_flat(cfg)
    assert flat == {"a.b": 1, "a.c.d": 2, "e": 3}
    assert flat_to_deep(flat) == cfg
    with pytest.raises(ConfigError):
        flat_to_deep({"a": 1, "a.b": 2})


def test_to_dict_format():
    cfg = to_dict_format(OuterConfig())
    assert cfg == {
        "inner": {"i": 1, "f": 0.5, "b": True, "s": "abc", "t": [1, 2]},
        "seed": 0,
    }


def test_schema_keys():
    keys = schema_keys(OuterConfig)
    assert keys["inner.i"] is int
    assert keys["seed"] is int
    assert "inner" not in keys


def test_load_defaults():
    assert load_config(OuterConfig) == OuterConfig()


@pytest.mark.parametrize("nested", [True, False])
def test_load_file_and_overrides(nested):
    if nested:
        doc = {"inner": {"i": 5, "t": [3, 4]}}
    else:
        doc = {"inner.i": 5, "inner.t": [3, 4]}
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "cfg.yaml"
        path.write_text(yaml.dump(doc))
        cfg = load_config(OuterConfig, path, overrides={"inner.s": "x", "seed": 3})
    assert cfg.inner == InnerConfig(i=5, s="x", t=(3, 4))
    assert cfg.seed == 3


@pytest.mark.parametrize(
    "overrides",
    [
        {"inner.j": 1},  # Unknown key
        {"unknown": {"x": 1}},  # Unknown section
        {"inner.i": 1.5},  # Not an integer
        {"inner.i": "a"},
        {"inner.b": "yes"},  # Not a boolean
        {"inner.s": 3},
        {"inner.t": [1, 2, 3]},  # Wrong length
        {"inner.t": 3},
    ],
)
def test_load_strict(overrides):
    with pytest.raises(ConfigError):
        load_config(OuterConfig, overrides=overrides)


def test_load_coerces_numbers():
    cfg = load_config(OuterConfig, overrides={"inner.f": 2, "inner.i": 4.0})
    assert cfg.inner.f == 2.0 and isinstance(cfg.inner.f, float)
    assert cfg.inner.i == 4 and isinstance(cfg.inner.i, int)


def test_load_errors():
    with pytest.raises(FileNotFoundError):
        load_config(OuterConfig, "does_not_exist.yaml")
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "cfg.yaml"
        path.write_text("- a\n- b\n")
        with pytest.raises(ConfigError):
            load_config(OuterConfig, path)
        path.write_text("a: [")
        with pytest.raises(ConfigError):
            load_config(OuterConfig, path)
        path.write_text("")
        assert load_config(OuterConfig, path) == OuterConfig()


def test_dump_and_reload():
    cfg = OuterConfig(inner=InnerConfig(i=7, t=(5, 6)), seed=2)
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "sub" / "cfg.yaml"
        dump_config(cfg, path)
        assert load_config(OuterConfig, path) == cfg


def test_load_run_json():
    """A run.json stores the resolved config under `config`."""
    cfg = OuterConfig(seed=9)
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "run.json"
        path.write_text(
            json.dumps({"command": "phantom", "config": to_dict_format(cfg)})
        )
        assert load_config(OuterConfig, path) == cfg


def test_validation_surfaces_as_config_error():
    with pytest.raises(ConfigError):
        load_config(TrainConfig, overrides={"stage": "segment"})
    with pytest.raises(ConfigError):
        load_config(TrainConfig, overrides={"max_degrees": 10.0})


def test_train_config_defaults():
    cfg = TrainConfig(stage="generate").resolved()
    assert cfg.model_name == "asmm_desk"
    assert (cfg.beta_start, cfg.beta_end, cfg.timesteps) == (1e-4, 5e-3, 4000)
    assert cfg.optimizer == OptimizerConfig()
    assert cfg.optimizer.lr == 2e-4

    cfg = TrainConfig(stage="sr").resolved()
    assert cfg.model_name == "sr_desk"
    assert (cfg.beta_end, cfg.timesteps) == (2e-2, 1000)
    sched = cfg.schedule()
    assert sched.T == 1000
    assert sched.beta(1000) == 2e-2

    # Explicit values win over stage defaults
    cfg = TrainConfig(stage="sr", timesteps=10, model_name="sr_tiny").resolved()
    assert (cfg.model_name, cfg.timesteps) == ("sr_tiny", 10)


def test_get_class():
    assert get_class("SimpleClass") is SimpleClass
    with pytest.raises(ValueError):
        get_class("UnknownClass")
    with pytest.raises(ConfigError):
        cfg_serializable(InnerConfig)
