from .core import (  # noqa: F401
    ddim_step,
    ddpm_step,
    predict_x0,
    q_sample,
    training_loss,
)
from .sampler import (  # noqa: F401
    ddim_sample,
    ddim_timesteps,
    ddpm_sample,
    oracle_denoiser,
)
from .schedule import DiffusionState, NoiseSchedule, make_linear_schedule  # noqa: F401
