"""Meshfree particle simulation of a vision-based macroscopic pedestrian model.

The nonlocal model, its local approximation and a social-force/Eikonal
baseline, run on a bidirectional corridor.
"""
from .dynamics import Domain, ExitSegment, Mode, RepulsionParams, State, StepConfig, VisionModel, step
from .errors import VisionPedError
from .interaction import VisionParams
from .meshfree import WeightParams
from .runner import RunReport, compare_runs, run
from .scenario import RunConfig, Scenario, seed_particles
from .socialforce import SocialForceParams

__version__ = "0.1.0"

__all__ = [
    "Domain", "ExitSegment", "Mode", "RepulsionParams", "RunConfig", "RunReport", "Scenario",
    "SocialForceParams", "State", "StepConfig", "VisionModel", "VisionParams", "VisionPedError",
    "WeightParams", "compare_runs", "run", "seed_particles", "step",
]
