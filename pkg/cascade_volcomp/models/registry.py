"""
Model Registry

Each network of the cascade is registered under a name by a function that returns a
``(model_class, config)`` pair and is named like the model. Model classes declare the
stage of the cascade they denoise for in the class attribute ``stage``, so training
can refuse a network that does not fit the stage it is asked to train.
"""
import fnmatch
import re
import sys
from copy import deepcopy
from typing import List, Union

__all__ = [
    "MODEL_STAGES",
    "is_model",
    "list_models",
    "model_class",
    "model_class_by_cfg",
    "model_config",
    "model_stage",
    "register_model",
]

MODEL_STAGES = ("generate", "sr")

_model_class = {}
_model_config = {}
_model_stage = {}


def register_model(fn):
    cls, cfg = fn()
    model_name = cfg.name
    if fn.__name__ != model_name:
        raise ValueError(f"Model name({model_name}) != function name ({fn.__name__}).")
    stage = getattr(cls, "stage", None)
    if stage not in MODEL_STAGES:
        raise ValueError(
            f"Model class {cls.__name__} declares stage {stage}, expected one of "
            f"{MODEL_STAGES}."
        )

    # Add model function to __all__ in the defining module
    mod = sys.modules[fn.__module__]
    if hasattr(mod, "__all__"):
        mod.__all__.append(model_name)
    else:
        mod.__all__ = [model_name]

    _model_class[model_name] = cls
    _model_config[model_name] = deepcopy(cfg)
    _model_stage[model_name] = stage
    return fn


def _natural_key(string_):
    return [int(s) if s.isdigit() else s for s in re.split(r"(\d+)", string_.lower())]


def _matches(model_name: str, filters: Union[str, List[str]]) -> bool:
    if not isinstance(filters, (tuple, list)):
        filters = [filters]
    return any(fnmatch.fnmatch(model_name, f) for f in filters)


def list_models(
    name_filter: Union[str, List[str]] = "",
    stage: str = "",
    exclude_filters: Union[str, List[str]] = "",
) -> List[str]:
    """Returns list of registered model names in natural sort order.

    Args:
        name_filter: Wildcard filter string (or list of them) that works with fnmatch
        stage: Only return models for this stage, ``"generate"`` or ``"sr"``
        exclude_filters: Wildcard filters to exclude models after including them with
            ``name_filter``

    Example:
        list_models("asmm*") -- returns all models starting with "asmm"
        list_models("*tiny", stage="sr") -- returns the tiny refine-stage models
    """
    if stage and stage not in MODEL_STAGES:
        raise ValueError(f"Unknown stage {stage}, expected one of {MODEL_STAGES}.")

    models = [m for m in _model_class if not stage or _model_stage[m] == stage]
    if name_filter:
        models = [m for m in models if _matches(m, name_filter)]
    if exclude_filters:
        models = [m for m in models if not _matches(m, exclude_filters)]
    return sorted(models, key=_natural_key)


def is_model(model_name):
    """Check if a model name exists"""
    return model_name in _model_class


def _check_model(model_name):
    if not is_model(model_name):
        raise ValueError(f"Unknown model: {model_name}.")


def model_class(model_name):
    """Fetch the model class for specified model name"""
    _check_model(model_name)
    return _model_class[model_name]


def model_config(model_name):
    """Fetch a copy of the model config for specified model name"""
    _check_model(model_name)
    return deepcopy(_model_config[model_name])


def model_stage(model_name) -> str:
    """Stage of the cascade the model denoises for"""
    _check_model(model_name)
    return _model_stage[model_name]


def model_class_by_cfg(cfg_class_name: str):
    """
    Fetch the model class whose ``cfg_class`` is called ``cfg_class_name``. Used when
    rebuilding a model from a stored config that has been modified after creation.
    """
    for cls in _model_class.values():
        if cls.cfg_class.__name__ == cfg_class_name:
            return cls
    raise ValueError(f"No registered model uses config class {cfg_class_name}.")
