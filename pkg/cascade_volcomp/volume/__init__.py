from .io import (  # noqa: F401
    MANIFEST_NAME,
    CohortBundle,
    read_cohort,
    read_scan,
    read_volume,
    write_cohort,
    write_scan,
    write_volume,
)
from .ops import (  # noqa: F401
    crop_pad_to,
    normalize_intensity,
    prepare_volume,
    resample_down2,
    rotate,
    upsample_trilinear,
)
from .volume import (  # noqa: F401
    MAX_AGE_MONTHS,
    LongitudinalCohort,
    Provenance,
    ScanRecord,
    Volume3D,
)
