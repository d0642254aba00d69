"""Domain models: stabilization parameters, problems and experiment configs."""
from ucfem.models.experiment import ExperimentConfig
from ucfem.models.params import StabilizationParams
from ucfem.models.problem import ExactSolution, LineSource, Perturbation, ProblemSpec

__all__ = [
    # Parameters
    "StabilizationParams",
    # Problems
    "ExactSolution",
    "LineSource",
    "Perturbation",
    "ProblemSpec",
    # Experiments
    "ExperimentConfig",
]
