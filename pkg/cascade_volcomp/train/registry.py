from ..errors import ConfigError

_classes = {}


def cfg_serializable(cls):
    """
    Registers a class that is configured by the dataclass in its `cfg_class`
    attribute, so it can be instantiated by name.
    ```
    @dataclass
    class TrainConfig:
        stage: str

    @cfg_serializable
    class Trainer:
        cfg_class = TrainConfig

        def __init__(self, cfg: TrainConfig, ...):
            ...
    ```

    The trainer uses this to look up the problem class that trains a given stage.
    """
    if not hasattr(cls, "cfg_class"):
        raise ConfigError(f"Class {cls.__name__} has no `cfg_class` attribute.")
    _classes[cls.__name__] = cls
    return cls


def get_class(cls):
    """Retrieves the registered class."""
    if cls not in _classes:
        raise ConfigError(f"Unknown class: {cls}.")
    return _classes[cls]
