from .completion import (  # noqa: F401
    CascadeStage,
    CompletionRequest,
    GuidancePolicy,
    SamplingConfig,
    complete_cohort,
    complete_subject,
    generate_low_res,
    load_stage,
    missing_ages,
    normalize_completion,
    refine,
    select_guidance,
)
