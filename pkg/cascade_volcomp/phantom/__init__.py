from .phantom import (  # noqa: F401
    ContrastLaw,
    GrowthLaw,
    PhantomConfig,
    PhantomTruth,
    generate_cohort,
    mask_missing,
    write_phantom_cohort,
)
