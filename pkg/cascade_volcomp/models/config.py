import typing
from dataclasses import dataclass


@dataclass
class ModelConfig:
    """Shared base class for model configurations."""

    name: str = ""


def cfg_from_dict(cfg_class, cfg: dict):
    """
    Rebuilds a model config from the dictionary stored in a checkpoint header. JSON
    has no tuples, so lists are turned back into tuples for fields declared as tuples.
    """
    hints = typing.get_type_hints(cfg_class)
    kwargs = {}
    for key, value in cfg.items():
        origin = typing.get_origin(hints.get(key))
        if isinstance(value, list) and origin is tuple:
            value = tuple(value)
        kwargs[key] = value
    return cfg_class(**kwargs)
