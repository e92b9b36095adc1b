"""Small fixtures shared by the test modules."""
import numpy as np

from cascade_volcomp.phantom import ContrastLaw, GrowthLaw, PhantomConfig
from cascade_volcomp.volume import LongitudinalCohort, ScanRecord, Volume3D

# Class intensities that do not change with age. Thresholds (0.35, 0.65) separate
# them with a wide margin.
FIXED_CONTRAST = ContrastLaw(
    young=(0.2, 0.5, 0.8), mature=(0.2, 0.5, 0.8), young_age=3.0, mature_age=9.0
)


def small_phantom_config(**kwargs) -> PhantomConfig:
    """8x8x8 low-res grid with 2mm voxels, stored at 16x16x16."""
    params = dict(
        dims=(8, 8, 8),
        spacing=(2.0, 2.0, 2.0),
        n_subjects=3,
        age_grid=(12.0, 18.0, 24.0),
        seed=0,
    )
    params.update(kwargs)
    return PhantomConfig(**params)


def quiet_growth_law(**kwargs) -> GrowthLaw:
    params = dict(sigma_subject=2.0, sigma_noise=1.0)
    params.update(kwargs)
    return GrowthLaw(**params)


def random_cohort(
    nb_subjects=2, ages=(6.0, 12.0, 18.0), dims=(16, 16, 16), spacing=1.0, seed=0
) -> LongitudinalCohort:
    """Cohort of uniform noise volumes, quicker to build than phantoms."""
    rng = np.random.default_rng(seed)
    records = [
        ScanRecord(
            subject_id=f"sub-{i:03d}",
            age_months=age,
            volume=Volume3D(rng.uniform(size=dims), spacing),
        )
        for i in range(nb_subjects)
        for age in ages
    ]
    return LongitudinalCohort.from_records(records, age_grid=ages)

