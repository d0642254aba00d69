"""Service layer - solver, analysis, problem library, mesh cache and experiments."""
from ucfem.services.analysis_service import analysis_service
from ucfem.services.experiment_service import experiment_service
from ucfem.services.mesh_cache_service import mesh_cache_service
from ucfem.services.problem_service import builtin_problem, problem_service
from ucfem.services.solver_service import solver_service

__all__ = [
    "analysis_service",
    "builtin_problem",
    "experiment_service",
    "mesh_cache_service",
    "problem_service",
    "solver_service",
]
