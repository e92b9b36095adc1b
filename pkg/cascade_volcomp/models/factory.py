import logging

import tensorflow as tf

from .checkpoint import load_checkpoint
from .registry import is_model, model_class, model_config


def create_model(model_name: str, model_path: str = "", **kwargs) -> tf.keras.Model:
    """Creates a model.

    Args:
        model_name: Name of model to instantiate
        model_path: Path of a checkpoint to load weights from after the model is built.
            The checkpoint has to store the same config as the created model.
        **kwargs: Overrides of config fields, e.g., ``in_dims``. The keyword ``name``
            is passed on to ``tf.keras.Model``.
    """
    if not is_model(model_name):
        raise ValueError(f"Unknown model: {model_name}.")
    cls = model_class(model_name)
    cfg = model_config(model_name)

    # `keras.Model` kwargs need separate treatment. For now we support only `name`.
    model_kwargs = {}
    if "name" in kwargs:
        model_kwargs["name"] = kwargs.pop("name")

    # Update config with kwargs
    for key, value in kwargs.items():
        if hasattr(cfg, key):
            if isinstance(getattr(cfg, key), tuple):
                value = tuple(value)
            setattr(cfg, key, value)
        else:
            logging.warning(
                f"Config for model {model_name} does not have field `{key}`. "
                "Ignoring field."
            )

    if model_path:
        loaded_model, _ = load_checkpoint(model_path)
        if loaded_model.cfg == cfg:
            return loaded_model
        raise ValueError(
            f"Checkpoint {model_path} stores config {loaded_model.cfg}, "
            f"which differs from the requested {cfg}."
        )

    model = cls(cfg, **model_kwargs)
    model(model.dummy_inputs)  # Call model to build layers
    return model
