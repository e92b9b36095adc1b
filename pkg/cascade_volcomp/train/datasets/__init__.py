from .cohort import (  # noqa: F401
    MAX_ROTATION_DEGREES,
    GeneratePairDataset,
    SrPairDataset,
    augment_guidance,
    make_sr_pair,
    make_training_pair,
)
