import math

import numpy as np
import pandas as pd
import pytest

from cascade_volcomp.errors import DataError
from cascade_volcomp.evaluation import (
    fit_lmm_loglinear,
    fit_trajectories,
    hull_coverage,
    trajectory_table,
)
from cascade_volcomp.phantom import generate_cohort
from cascade_volcomp.volume import Provenance

from ..helpers import FIXED_CONTRAST, quiet_growth_law, small_phantom_config

AGES = (3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0, 24.0)


def _simulate(rng, beta0, beta1, sigma_b, sigma_e, nb_subjects, ages=AGES):
    observations = []
    for i in range(nb_subjects):
        b = rng.normal(0.0, sigma_b)
        for age in ages:
            v = beta0 + beta1 * math.log(age) + b + rng.normal(0.0, sigma_e)
            observations.append((f"sub-{i:03d}", age, v))
    return observations


def test_exact_fit():
    observations = [("a", age, 2.0 + 3.0 * math.log(age)) for age in (1, 2, 4, 8)]
    model = fit_lmm_loglinear(observations)
    assert abs(model.beta0 - 2.0) < 1e-9
    assert abs(model.beta1 - 3.0) < 1e-9
    assert model.sigma_b2 == 0.0 and model.sigma_e2 == 0.0
    assert model.converged
    assert (model.n_obs, model.n_subjects) == (4, 1)
    assert np.allclose(model.predict([1.0, 8.0]), [2.0, 2.0 + 3.0 * math.log(8)])


def test_single_subject_with_noise():
    rng = np.random.default_rng(0)
    observations = _simulate(rng, 10.0, 5.0, 0.0, 1.0, nb_subjects=1)
    model = fit_lmm_loglinear(observations)
    assert model.sigma_b2 == 0.0
    assert model.sigma_e2 > 0.0
    assert math.isfinite(model.loglik)


@pytest.mark.timeout(120)
def test_recovers_parameters():
    """Averaged over repetitions, the fit recovers the simulated parameters."""
    estimates = []
    for rep in range(20):
        rng = np.random.default_rng(rep)
        observations = _simulate(rng, 200.0, 150.0, 10.0, 5.0, nb_subjects=50)
        model = fit_lmm_loglinear(observations)
        assert model.converged
        assert model.sigma_b2 >= 0.0 and model.sigma_e2 >= 0.0
        estimates.append([model.beta0, model.beta1, model.sigma_b2, model.sigma_e2])
    beta0, beta1, sigma_b2, sigma_e2 = np.mean(estimates, axis=0)
    assert abs(beta0 - 200.0) < 1.5
    assert abs(beta1 - 150.0) < 0.5
    assert abs(sigma_b2 - 100.0) < 15.0
    assert abs(sigma_e2 - 25.0) < 2.0


def test_iteration_limit():
    rng = np.random.default_rng(1)
    observations = _simulate(rng, 50.0, 20.0, 3.0, 2.0, nb_subjects=10)
    short = fit_lmm_loglinear(observations, tol=0.0, max_iter=1)
    full = fit_lmm_loglinear(observations)
    assert not short.converged
    assert short.iterations == 1
    assert full.converged
    assert full.iterations > 1


@pytest.mark.parametrize(
    "observations",
    [
        [("a", 1.0, 1.0), ("a", 2.0, 2.0)],  # Too few observations
        [("a", 3.0, 1.0), ("b", 3.0, 2.0), ("c", 3.0, 3.0)],  # One distinct age
        [("a", 0.0, 1.0), ("a", 2.0, 2.0), ("a", 4.0, 3.0)],  # Non-positive age
        [("a", 1.0, np.nan), ("a", 2.0, 2.0), ("a", 4.0, 3.0)],
    ],
)
def test_invalid_observations(observations):
    with pytest.raises(ValueError):
        fit_lmm_loglinear(observations)


def test_trajectory_table_and_fit():
    cfg = small_phantom_config(
        contrast_law=FIXED_CONTRAST, intensity_noise=0.0, normalize=False
    )
    cohort, truth = generate_cohort(cfg, quiet_growth_law())
    table = trajectory_table(cohort.records(), background_cut=0.1)

    assert list(table.columns) == ["subject", "age", "class", "volume", "provenance"]
    assert len(table) == 3 * cohort.count
    assert set(table["provenance"]) == {Provenance.OBSERVED.value}

    # Segmented volumes are voxel counts of the true label map
    voxel_volume = float(np.prod(cfg.stored_spacing))
    row = table[(table["subject"] == "sub-000") & (table["age"] == 12.0)]
    labels = truth[("sub-000", 12.0)].labels
    for name, label in [("csf", 1), ("gm", 2), ("wm", 3)]:
        volume = row[row["class"] == name]["volume"].item()
        assert volume == np.count_nonzero(labels == label) * voxel_volume

    models = fit_trajectories(table)
    assert list(models) == ["csf", "gm", "wm"]
    for name, model in models.items():
        assert model.tissue_class == name
        assert model.n_obs == cohort.count
        assert model.n_subjects == 3
    # Gray and white matter grow clearly with age in the default growth law
    assert models["gm"].beta1 > 0 and models["wm"].beta1 > 0

    assert fit_trajectories(pd.DataFrame(columns=table.columns)) == {}


def _table(observed, generated, name="gm"):
    rows = [
        ("a", age, name, volume, provenance.value)
        for points, provenance in [
            (observed, Provenance.OBSERVED),
            (generated, Provenance.GENERATED),
        ]
        for age, volume in points
    ]
    return pd.DataFrame(
        rows, columns=["subject", "age", "class", "volume", "provenance"]
    )


def test_hull_coverage():
    observed = [(6.0, 100.0), (12.0, 50.0), (18.0, 200.0), (12.0, 250.0)]
    # Inside, on a vertex, above the hull and beyond the oldest age
    generated = [(12.0, 150.0), (6.0, 100.0), (12.0, 300.0), (24.0, 150.0)]
    assert hull_coverage(_table(observed, generated)) == {"gm": 0.5}

    # Classes without generated points are left out
    assert hull_coverage(_table(observed, [])) == {}


@pytest.mark.parametrize(
    "observed",
    [
        [(6.0, 100.0), (12.0, 200.0)],  # Too few points
        [(6.0, 1.0), (12.0, 2.0), (24.0, 3.0)],  # On a line in (ln age, volume)
        [(12.0, 1.0), (12.0, 2.0), (12.0, 3.0)],  # Single age
    ],
)
def test_hull_coverage_degenerate(observed):
    with pytest.raises(DataError):
        hull_coverage(_table(observed, [(12.0, 2.0)]))
