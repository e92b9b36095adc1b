from .ablation import (  # noqa: F401
    COPY_VARIANT,
    REFERENCE_SCORES,
    ablation_report,
    copy_baseline,
    refine_vs_trilinear,
    score_completions,
    summarize_scores,
)
from .metrics import SsimParams, psnr, ssim3d  # noqa: F401
from .report import (  # noqa: F401
    format_psnr,
    write_ablation_csv,
    write_metrics_csv,
    write_trajectory_csv,
    write_trajectory_points_csv,
)
from .segmentation import (  # noqa: F401
    SegmentationConfig,
    segment_tissues,
    tissue_volumes,
)
from .trajectory import (  # noqa: F401
    TrajectoryModel,
    fit_lmm_loglinear,
    fit_trajectories,
    hull_coverage,
    trajectory_table,
)
