from .diffusion import DiffusionProblem, GenerateProblem, SrProblem  # noqa: F401
