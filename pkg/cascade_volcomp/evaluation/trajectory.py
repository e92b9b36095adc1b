"""
Log-linear growth trajectories with a random subject intercept,

    V_ij = beta0 + beta1 * ln(age_ij) + b_i + e_ij,
    b_i ~ N(0, sigma_b2),  e_ij ~ N(0, sigma_e2),

fitted by maximum likelihood with expectation-maximization. Fixed effects are
re-estimated by generalized least squares given the current variance components in
every iteration. This is plain ML, not REML, so variance components are biased low by
a factor of roughly (1 - 1 / n_subjects).
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import spatial

from ..errors import DataError
from ..tissue import TISSUE_CLASSES
from ..volume import Provenance, ScanRecord
from .segmentation import segment_tissues, tissue_volumes

__all__ = [
    "TrajectoryModel",
    "fit_lmm_loglinear",
    "fit_trajectories",
    "hull_coverage",
    "trajectory_table",
]

LOG_2PI = math.log(2 * math.pi)
# Relative residual sum of squares below which data is treated as noise-free
EXACT_FIT_RTOL = 1e-20


@dataclass
class TrajectoryModel:
    """
    Fitted trajectory of one tissue class.

    Attributes:
        tissue_class: Name of the class, empty if fitted outside a table.
        beta0: Intercept in mm^3.
        beta1: Slope in mm^3 per log-month.
        sigma_b2: Variance of the subject intercepts.
        sigma_e2: Residual variance.
        loglik: Log-likelihood at the estimate, ``inf`` for exact fits.
        iterations: Number of EM iterations.
        converged: Whether the convergence criterion was met.
        n_obs: Number of observations.
        n_subjects: Number of subjects.
    """

    tissue_class: str
    beta0: float
    beta1: float
    sigma_b2: float
    sigma_e2: float
    loglik: float
    iterations: int
    converged: bool
    n_obs: int
    n_subjects: int

    def predict(self, age_months) -> np.ndarray:
        """Population mean volume at the given age(s)."""
        ages = np.asarray(age_months, dtype=np.float64)
        return self.beta0 + self.beta1 * np.log(ages)


def _design(ages: np.ndarray) -> np.ndarray:
    return np.stack([np.ones_like(ages), np.log(ages)], axis=1)


def _gls(X, y, groups, counts, sigma_b2, sigma_e2) -> np.ndarray:
    """
    GLS estimate with block covariance ``sigma_e2 * I + sigma_b2 * 11'`` per subject.
    Uses V_i^{-1} = (I - g_i 11') / sigma_e2 with g_i = sigma_b2 / (sigma_e2 +
    n_i sigma_b2).
    """
    g = sigma_b2 / (sigma_e2 + counts * sigma_b2)
    nb_groups = len(counts)
    sum_x = np.stack(
        [np.bincount(groups, X[:, k], minlength=nb_groups) for k in range(X.shape[1])],
        axis=1,
    )
    sum_y = np.bincount(groups, y, minlength=nb_groups)
    xtvx = X.T @ X - (sum_x.T * g) @ sum_x
    xtvy = X.T @ y - (sum_x.T * g) @ sum_y
    return np.linalg.solve(xtvx, xtvy)


def _loglik(resid, groups, counts, sigma_b2, sigma_e2) -> float:
    nb_groups = len(counts)
    sum_r = np.bincount(groups, resid, minlength=nb_groups)
    sum_r2 = np.bincount(groups, resid**2, minlength=nb_groups)
    denom = sigma_e2 + counts * sigma_b2
    logdet = (counts - 1) * np.log(sigma_e2) + np.log(denom)
    quad = (sum_r2 - sigma_b2 / denom * sum_r**2) / sigma_e2
    return float(-0.5 * np.sum(counts * LOG_2PI + logdet + quad))


def fit_lmm_loglinear(
    observations: Iterable[Tuple[str, float, float]],
    tol: float = 1e-8,
    max_iter: int = 500,
    tissue_class: str = "",
) -> TrajectoryModel:
    """
    Fits the random-intercept log-linear model.

    Args:
        observations: Tuples ``(subject_id, age_months, volume)``.
        tol: Convergence when the relative change of the log-likelihood is below
            ``tol``.
        max_iter: Maximal number of EM iterations. If reached, the current estimate
            is returned with ``converged=False``.
        tissue_class: Stored in the result.

    Returns:
        The fitted :class:`TrajectoryModel`.
    """
    observations = list(observations)
    if len(observations) < 3:
        raise ValueError(f"Need at least 3 observations, got {len(observations)}.")
    subjects = [str(o[0]) for o in observations]
    ages = np.array([o[1] for o in observations], dtype=np.float64)
    y = np.array([o[2] for o in observations], dtype=np.float64)
    if np.any(ages <= 0):
        raise ValueError("Ages have to be positive.")
    if len(np.unique(ages)) < 2:
        raise ValueError("Need at least 2 distinct ages to identify the slope.")
    if not np.all(np.isfinite(y)):
        raise ValueError("Volumes have to be finite.")

    subject_ids, groups = np.unique(subjects, return_inverse=True)
    counts = np.bincount(groups).astype(np.float64)
    nb_obs, nb_subjects = len(y), len(subject_ids)
    X = _design(ages)

    def _result(beta, sigma_b2, sigma_e2, loglik, iterations, converged):
        return TrajectoryModel(
            tissue_class=tissue_class,
            beta0=float(beta[0]),
            beta1=float(beta[1]),
            sigma_b2=float(sigma_b2),
            sigma_e2=float(sigma_e2),
            loglik=float(loglik),
            iterations=iterations,
            converged=converged,
            n_obs=nb_obs,
            n_subjects=nb_subjects,
        )

    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    rss = float(resid @ resid)
    if rss <= EXACT_FIT_RTOL * max(float(y @ y), 1.0):
        return _result(beta, 0.0, 0.0, math.inf, 0, True)
    if nb_subjects == 1:
        # The random intercept cannot be separated from beta0
        sigma_e2 = rss / nb_obs
        loglik = _loglik(resid, groups, counts, 0.0, sigma_e2)
        return _result(beta, 0.0, sigma_e2, loglik, 0, True)

    sigma_b2 = sigma_e2 = rss / nb_obs / 2
    loglik = _loglik(resid, groups, counts, sigma_b2, sigma_e2)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        beta = _gls(X, y, groups, counts, sigma_b2, sigma_e2)
        resid = y - X @ beta

        # E-step: posterior of the subject intercepts
        post_var = 1.0 / (1.0 / sigma_b2 + counts / sigma_e2)
        post_mean = post_var * np.bincount(groups, resid) / sigma_e2

        # M-step
        sigma_b2 = float(np.mean(post_mean**2 + post_var))
        within = resid - post_mean[groups]
        sigma_e2 = float((within @ within + np.sum(counts * post_var)) / nb_obs)
        # Keep the variances strictly positive so that the next E-step is defined
        sigma_b2 = max(sigma_b2, np.finfo(np.float64).tiny)
        sigma_e2 = max(sigma_e2, np.finfo(np.float64).tiny)

        new_loglik = _loglik(resid, groups, counts, sigma_b2, sigma_e2)
        change = abs(new_loglik - loglik) / max(abs(loglik), 1e-300)
        loglik = new_loglik
        if change < tol:
            converged = True
            break

    beta = _gls(X, y, groups, counts, sigma_b2, sigma_e2)
    if not converged:
        logging.warning(
            f"LMM fit {tissue_class or ''} did not converge in {max_iter} iterations."
        )
    return _result(beta, sigma_b2, sigma_e2, loglik, it, converged)


def trajectory_table(
    records: Iterable[ScanRecord],
    thresholds: Sequence[float] = (0.35, 0.65),
    background_cut: Optional[float] = None,
) -> pd.DataFrame:
    """
    Segments every scan and returns a long table with columns ``subject``, ``age``,
    ``class``, ``volume`` (mm^3) and ``provenance``.
    """
    rows = []
    for record in records:
        labels = segment_tissues(record.volume, thresholds, background_cut)
        volumes = tissue_volumes(labels, record.volume.spacing)
        for name in TISSUE_CLASSES:
            rows.append(
                {
                    "subject": record.subject_id,
                    "age": record.age_months,
                    "class": name,
                    "volume": volumes[name],
                    "provenance": record.provenance.value,
                }
            )
    return pd.DataFrame(
        rows, columns=["subject", "age", "class", "volume", "provenance"]
    )


def fit_trajectories(table: pd.DataFrame, **kwargs) -> Dict[str, TrajectoryModel]:
    """Fits one trajectory per tissue class of a :func:`trajectory_table`."""
    models = {}
    for name in TISSUE_CLASSES:
        rows = table[table["class"] == name]
        if rows.empty:
            continue
        observations = zip(rows["subject"], rows["age"], rows["volume"])
        models[name] = fit_lmm_loglinear(observations, tissue_class=name, **kwargs)
    return models


def hull_coverage(table: pd.DataFrame) -> Dict[str, float]:
    """
    Fraction of generated points per tissue class of a :func:`trajectory_table` that
    lie inside the convex hull of the observed points in the (ln age, volume) plane.
    Points on the hull boundary count as inside. Classes without generated points are
    left out.
    """
    coverage = {}
    for name in TISSUE_CLASSES:
        rows = table[table["class"] == name]
        generated = rows[rows["provenance"] == Provenance.GENERATED.value]
        if generated.empty:
            continue
        observed = rows[rows["provenance"] == Provenance.OBSERVED.value]
        hull_pts = np.column_stack([np.log(observed["age"]), observed["volume"]])
        query = np.column_stack([np.log(generated["age"]), generated["volume"]])

        # Both coordinates are standardized, so the tolerance means the same along
        # both axes.
        if len(hull_pts) < 3:
            raise DataError(f"Need 3 observed {name} volumes, got {len(hull_pts)}.")
        center, scale = hull_pts.mean(axis=0), hull_pts.std(axis=0)
        if np.any(scale == 0.0):
            raise DataError(f"Observed {name} volumes do not span a 2D hull.")
        hull_pts = (hull_pts - center) / scale
        if np.linalg.matrix_rank(hull_pts) < 2:
            raise DataError(f"Observed {name} volumes are collinear.")
        hull = spatial.Delaunay(hull_pts)
        inside = hull.find_simplex((query - center) / scale, tol=1e-9) >= 0
        coverage[name] = float(np.mean(inside))
    return coverage
