"""
Configurations are nested dataclasses. On disk they are YAML documents whose keys can
be nested or flat with "." joining the levels, e.g., ``train_generate.max_steps: 0``.
Loading is strict: keys that are not part of the schema are rejected.
"""
import dataclasses
import json
import logging
import typing
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from ..errors import ConfigError


def to_dict_format(cfg):
    """
    A configuration is a nested dictionary with potentially dataclasses as values. This
    function converts dataclasses to dictionaries for easier serialization. Tuples are
    converted to lists.
    """
    if dataclasses.is_dataclass(cfg):
        cfg = dataclasses.asdict(cfg)

    res_cfg = {}
    for key, val in cfg.items():
        if isinstance(val, dict) or dataclasses.is_dataclass(val):
            res_cfg[key] = to_dict_format(val)
        elif isinstance(val, tuple):
            res_cfg[key] = list(val)
        else:
            res_cfg[key] = val
    return res_cfg


def deep_to_flat(cfg):
    """
    Function flattens a nested config in dictionary format by joining keys of nested
    dictionaries with ".".

    For example,
    ```
    >>> cfg = {"a": {"b": 1, "c": 2}, "d": 3}
    >>> print(deep_to_flat(cfg))
    {"a.b": 1, "a.c": 2, "d": 3}
    ```
    """
    res_cfg = {}
    for key, val in cfg.items():
        if isinstance(val, dict):
            val = deep_to_flat(val)
            # After recursive flattening, `val` is now a flat dictionary. Add its keys
            # to the current level
            for sub_key, sub_val in val.items():
                res_cfg[f"{key}.{sub_key}"] = sub_val
        else:
            res_cfg[key] = val
    return res_cfg


def flat_to_deep(cfg):
    """
    Function converts a flat config to a nested config in dictionary format. This is
    the inverse of `deep_to_flat()`.
    """
    res_cfg = {}
    # By iterating over the items of `cfg` we resolve one level of nesting.
    for key, val in cfg.items():
        if "." in key:
            root, leaf = tuple(key.split(".", 1))  # Split off the first part
            if root not in res_cfg:
                res_cfg[root] = {}
            elif not isinstance(res_cfg[root], dict):
                raise ConfigError(f"Key `{root}` is both a value and a section.")
            res_cfg[root][leaf] = val
        else:
            if isinstance(res_cfg.get(key), dict):
                raise ConfigError(f"Key `{key}` is both a value and a section.")
            res_cfg[key] = val

    # Now we iterate again and call the function recursively to resolve deeper levels
    # of nesting.
    for key, val in res_cfg.items():
        if isinstance(val, dict):
            res_cfg[key] = flat_to_deep(val)

    return res_cfg


def dump_config(cfg, filename):
    """Converts a config to nested dictionaries and saves them in yaml format."""
    cfg = to_dict_format(cfg)
    # Create directory for `filename` if it doesn't exist
    Path(filename).parents[0].mkdir(parents=True, exist_ok=True)
    with open(filename, "w") as yaml_file:
        yaml.dump(cfg, yaml_file, default_flow_style=False, sort_keys=False)


def pprint(cfg, indent=2):
    """Nicely prints nested config."""
    cfg = to_dict_format(cfg)
    for key, val in cfg.items():
        if isinstance(val, dict):
            logging.info(" " * indent + str(key) + ":")
            pprint(val, indent + 2)
        else:
            logging.info(" " * indent + str(key) + "=" + str(val))


def schema_keys(cfg_class) -> Dict[str, Any]:
    """Flat keys of a (nested) config class, mapped to their declared types."""
    keys = {}
    hints = typing.get_type_hints(cfg_class)
    for f in dataclasses.fields(cfg_class):
        tp = hints[f.name]
        if dataclasses.is_dataclass(tp):
            for sub_key, sub_tp in schema_keys(tp).items():
                keys[f"{f.name}.{sub_key}"] = sub_tp
        else:
            keys[f.name] = tp
    return keys


def _coerce(key: str, value, tp):
    """Converts a value read from YAML to the declared field type."""
    origin = typing.get_origin(tp)
    try:
        if tp is bool:
            if not isinstance(value, bool):
                raise TypeError(f"expected a boolean, got {value!r}")
            return value
        if tp is int:
            if isinstance(value, bool) or int(value) != value:
                raise TypeError(f"expected an integer, got {value!r}")
            return int(value)
        if tp is float:
            if isinstance(value, bool):
                raise TypeError(f"expected a number, got {value!r}")
            return float(value)
        if tp is str:
            if not isinstance(value, str):
                raise TypeError(f"expected a string, got {value!r}")
            return value
        if origin is tuple or tp is tuple:
            if not isinstance(value, (list, tuple)):
                raise TypeError(f"expected a list, got {value!r}")
            args = typing.get_args(tp)
            if len(args) == 2 and args[1] is Ellipsis:
                args = (args[0],) * len(value)
            elif args and len(args) != len(value):
                raise TypeError(f"expected {len(args)} entries, got {len(value)}")
            if not args:
                return tuple(value)
            return tuple(_coerce(key, v, a) for v, a in zip(value, args))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value for `{key}`: {e}.") from e
    return value


def _build(cfg_class, deep: dict):
    hints = typing.get_type_hints(cfg_class)
    kwargs = {}
    for f in dataclasses.fields(cfg_class):
        if f.name not in deep:
            continue
        tp = hints[f.name]
        value = deep[f.name]
        if dataclasses.is_dataclass(tp):
            kwargs[f.name] = _build(tp, value)
        else:
            kwargs[f.name] = value
    return cfg_class(**kwargs)


def _read_document(path: Union[str, Path]) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file {path} does not exist.")
    with open(path, "r") as f:
        try:
            if path.suffix == ".json":
                doc = json.load(f)
                # A run.json stores the resolved config under `config`
                if isinstance(doc, dict) and "command" in doc and "config" in doc:
                    doc = doc["config"]
            else:
                doc = yaml.safe_load(f)
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"Cannot parse config file {path}: {e}") from e
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"Config file {path} has to contain a mapping.")
    return doc


def load_config(
    cfg_class,
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[dict] = None,
):
    """
    Builds a config of type ``cfg_class`` from defaults, an optional YAML (or
    ``run.json``) file and optional overrides, in increasing priority.

    Args:
        cfg_class: Config dataclass, possibly with nested config dataclasses.
        path: YAML document with nested or "."-joined keys.
        overrides: Nested or flat dictionary applied after the file.

    Returns:
        Instance of ``cfg_class``.

    Raises:
        ConfigError: If any key is not part of the schema or a value has the wrong
            type. Validation done by the config classes themselves also surfaces as
            ``ConfigError``.
    """
    schema = schema_keys(cfg_class)
    flat = deep_to_flat(to_dict_format(cfg_class()))

    updates = {}
    if path is not None:
        updates.update(deep_to_flat(_read_document(path)))
    if overrides:
        updates.update(deep_to_flat(overrides))

    unknown = sorted(key for key in updates if key not in schema)
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}.")
    for key, value in updates.items():
        flat[key] = _coerce(key, value, schema[key])
    for key, value in flat.items():
        flat[key] = _coerce(key, value, schema[key])

    try:
        return _build(cfg_class, flat_to_deep(flat))
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
