"""
CSV report writers. Infinite PSNR values (identical volumes) are written as "+inf".
"""
import dataclasses
import math
from pathlib import Path
from typing import Dict, Union

import pandas as pd

from .trajectory import TrajectoryModel

__all__ = [
    "format_psnr",
    "write_ablation_csv",
    "write_metrics_csv",
    "write_trajectory_csv",
    "write_trajectory_points_csv",
]

PathLike = Union[str, Path]

TRAJECTORY_COLUMNS = [
    "class",
    "beta0",
    "beta1",
    "sigma_b2",
    "sigma_e2",
    "n_obs",
    "n_subjects",
    "loglik",
    "iterations",
    "converged",
]


def format_psnr(value: float) -> str:
    if math.isinf(value) and value > 0:
        return "+inf"
    return repr(float(value))


def _write(df: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)
    return path


def write_metrics_csv(scores: pd.DataFrame, path: PathLike) -> Path:
    """Columns ``scan_id``, ``variant``, ``psnr_db``, ``ssim``."""
    df = scores[["scan_id", "variant", "psnr_db", "ssim"]].copy()
    df["psnr_db"] = [format_psnr(v) for v in df["psnr_db"]]
    return _write(df, path)


def write_ablation_csv(summary: pd.DataFrame, path: PathLike) -> Path:
    df = summary.copy()
    for column in ["psnr_mean", "psnr_std"]:
        if column in df:
            df[column] = [format_psnr(v) for v in df[column]]
    return _write(df, path)


def write_trajectory_csv(models: Dict[str, TrajectoryModel], path: PathLike) -> Path:
    """One row per tissue class with the fitted parameters and fit diagnostics."""
    rows = []
    for name, model in models.items():
        row = dataclasses.asdict(model)
        row["class"] = row.pop("tissue_class") or name
        rows.append(row)
    return _write(pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS), path)


def write_trajectory_points_csv(table: pd.DataFrame, path: PathLike) -> Path:
    """Columns ``subject``, ``age``, ``class``, ``volume``, ``provenance``."""
    return _write(table[["subject", "age", "class", "volume", "provenance"]], path)
