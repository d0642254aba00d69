"""
Application configuration.

All tunables of the solver stack and the experiment runner live here and can
be overridden through ``UCFEM_*`` environment variables or a ``.env`` file.
"""

from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings configuration."""

    # Application
    app_name: str = "UC Stabilized FEM"
    app_version: str = "1.0.0"
    debug: bool = False

    # Logging
    log_level: str = "INFO"
    log_dir: str = "logs"
    log_to_file: bool = True

    # Output and caching
    output_dir: str = "runs"
    mesh_cache_dir: str = ".mesh_cache"
    use_mesh_cache: bool = False
    record_wall_time: bool = False  # wall_ms breaks byte-identical CSVs

    # Mesh levels
    rectangle_n_min: int = 20  # grid lines on x = pi/4, 3pi/4 and y = 0.05, 0.75
    rectangle_levels: int = 4
    disk_n_min: int = 4
    disk_levels: int = 4
    disk_sectors: int = 6

    # Quadrature: degree = 2p + offset
    assembly_quadrature_offset: int = 0
    error_quadrature_offset: int = 2

    # Linear algebra
    solve_rtol: float = 1e-10
    max_refinement_steps: int = 3
    mass_solve_rtol: float = 1e-12
    power_iteration_rtol: float = 1e-3
    power_iteration_max_iter: int = 10000
    perturbation_power_steps: int = 20

    # Stabilization defaults
    tikhonov_inner: Literal["h1", "h1_seminorm"] = "h1"

    model_config = SettingsConfigDict(
        env_prefix="UCFEM_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


# Global settings instance
settings = Settings()

# Named parameter rows (alpha, eta, tau) for optimal L2 / H1 convergence
PRESETS = {
    "L2-optimal": {"alpha": 1.0, "eta": 0.0, "tau": 2.0},
    "H1-optimal": {"alpha": 0.0, "eta": float("inf"), "tau": 0.0},
}

# errors.csv column order
ERROR_COLUMNS = [
    "problem", "p", "alpha", "eta", "tau", "s_reg", "level", "h", "dofs",
    "l2_B", "h1_B", "l2_omega", "l2_Omega", "h1_Omega",
    "res_hm1", "res_hm2_proxy", "prs", "dus", "cond", "wall_ms",
]

# rates.csv column order
RATE_COLUMNS = ["norm", "slope_global", "slope_last", "kappa_est"]

# Norm columns a rate is fitted for
RATE_NORMS = [
    "l2_B", "h1_B", "l2_omega", "l2_Omega", "h1_Omega",
    "res_hm1", "res_hm2_proxy", "prs", "dus",
]

# Built-in problem library: name -> one-line description
BUILTIN_PROBLEMS = {
    "disk-kink": "Unit disk, P = 0, line source on y = 0, kinked solution -y for y > 0",
    "hadamard-conv": "Hadamard problem on (0, pi) x (0, 1) with log potential, convex-hull data set",
    "hadamard-nonconv": "Hadamard problem on (0, pi) x (0, 1) with log potential, target outside the data hull",
    "smoke-harmonic": "Unit square, P = 0, f = 0, harmonic solution xy",
}
