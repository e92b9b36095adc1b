from .config import (  # noqa: F401
    deep_to_flat,
    dump_config,
    flat_to_deep,
    load_config,
    pprint,
    schema_keys,
    to_dict_format,
)
from .datasets import (  # noqa: F401
    MAX_ROTATION_DEGREES,
    GeneratePairDataset,
    SrPairDataset,
    augment_guidance,
    make_sr_pair,
    make_training_pair,
)
from .interface import ProblemBase  # noqa: F401
from .optimizer import OptimizerConfig, OptimizerFactory  # noqa: F401
from .registry import cfg_serializable, get_class  # noqa: F401
from .trainer import (  # noqa: F401
    STAGE_DEFAULTS,
    TrainConfig,
    Trainer,
    TrainResult,
    train_stage,
)
from .problems import DiffusionProblem, GenerateProblem, SrProblem  # noqa: F401
from .utils import (  # noqa: F401
    LOG_LEVEL_ENV,
    log_level_from_env,
    set_determinism,
    setup_logging,
)
