"""Barrier-guided diffusion trajectory planner for closed-track racing.

A small score-based generative model is trained on expert racing lines;
at inference the reverse SDE is steered by barrier-function gradients so
the sampled trajectories avoid obstacles and stay on the track, with a
warm-start replanning loop for closed-loop use.
"""

from diffplan.errors import InfeasibleSceneError, OutOfCorridorError, SamplerError
from diffplan.trajectory import NominalTrajectory, TrajectorySample

__version__ = "0.1.0"

__all__ = [
    "InfeasibleSceneError",
    "OutOfCorridorError",
    "SamplerError",
    "NominalTrajectory",
    "TrajectorySample",
    "__version__",
]
