from .checkpoint import load_checkpoint, save_checkpoint, weight_manifest  # noqa: F401
from .config import ModelConfig, cfg_from_dict  # noqa: F401
from .factory import create_model  # noqa: F401
from .gradcheck import (  # noqa: F401
    GradientCheckResult,
    floatx,
    loss_gradient_check,
    randomize_weights,
)
from .registry import (  # noqa: F401
    MODEL_STAGES,
    is_model,
    list_models,
    model_class,
    model_class_by_cfg,
    model_config,
    model_stage,
    register_model,
)
