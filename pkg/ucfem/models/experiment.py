"""Experiment configuration model."""
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator

from ucfem.config import BUILTIN_PROBLEMS, PRESETS, settings
from ucfem.models.params import StabilizationParams

# option keys that belong to StabilizationParams
PARAM_KEYS = ("alpha", "eta", "tau", "s_reg", "tikhonov_off", "tikhonov_inner")


class ExperimentConfig(BaseModel):
    """One experiment: a problem, an order, a parameter row and a mesh sequence."""

    problem: str = Field(..., description="Built-in problem name")
    order: int = Field(1, ge=1, le=3, description="Polynomial order p")
    params: StabilizationParams = Field(default_factory=StabilizationParams)
    preset: Optional[str] = Field(None, description="Preset the parameters were taken from")
    n_min: Optional[int] = Field(None, ge=1, description="Subdivision count of the coarsest mesh")
    levels: Optional[int] = Field(None, ge=1, description="Number of meshes (rate fits need 3)")
    compute_errors: bool = Field(True, description="Write errors.csv and rates.csv")
    compute_residuals: bool = Field(True, description="Evaluate residual dual norms")
    compute_condition: bool = Field(False, description="Estimate condition numbers")
    output_dir: str = Field(default_factory=lambda: settings.output_dir, description="Artifact directory")
    seed: int = Field(0, ge=0, description="Seed of perturbation noise and power iteration")
    perturb_q: float = Field(0.0, ge=0.0, description="L2(omega) amplitude of delta q")
    perturb_f: float = Field(0.0, ge=0.0, description="L2(Omega) amplitude of delta f")
    perturb_mode: Literal["noise", "constant", "dominant"] = Field("noise", description="Perturbation realization")

    @field_validator("problem")
    @classmethod
    def validate_problem(cls, v: str) -> str:
        """Validate problem name."""
        if v not in BUILTIN_PROBLEMS:
            raise ValueError(f"problem must be one of: {', '.join(sorted(BUILTIN_PROBLEMS))}")
        return v

    @field_validator("preset")
    @classmethod
    def validate_preset(cls, v: Optional[str]) -> Optional[str]:
        """Validate preset name."""
        if v is not None and v not in PRESETS:
            raise ValueError(f"preset must be one of: {', '.join(sorted(PRESETS))}")
        return v

    @classmethod
    def from_options(cls, options: Dict[str, Any]) -> "ExperimentConfig":
        """
        Build a config from flat options (CLI flags or a config file).

        Parameter keys (alpha, eta, tau, s_reg, tikhonov_off) override the
        preset row when both are given; ``out`` is accepted for ``output_dir``.
        """
        options = {k: v for k, v in options.items() if v is not None}
        preset = options.pop("preset", None)
        param_values = {key: options.pop(key) for key in PARAM_KEYS if key in options}
        if preset is not None:
            if preset not in PRESETS:
                raise ValueError(f"preset must be one of: {', '.join(sorted(PRESETS))}")
            params = StabilizationParams.preset(preset, **param_values)
        else:
            params = StabilizationParams(**param_values)
        if "out" in options:
            options["output_dir"] = options.pop("out")
        known = set(cls.model_fields)
        return cls(params=params, preset=preset, **{k: v for k, v in options.items() if k in known})

    def grid(self, alphas: List[float], etas: List[float], taus: List[float]) -> List["ExperimentConfig"]:
        """One config per (alpha, eta, tau) combination, in that nesting order."""
        configs = []
        for alpha in alphas:
            for eta in etas:
                for tau in taus:
                    values = {**self.params.model_dump(exclude_unset=True), "alpha": alpha, "eta": eta, "tau": tau}
                    configs.append(self.model_copy(update={"params": StabilizationParams(**values)}))
        return configs

    model_config = {
        "json_schema_extra": {
            "example": {
                "problem": "hadamard-conv",
                "order": 1,
                "params": {"alpha": 0.0, "eta": "inf", "tau": 0.0, "s_reg": 2.0},
                "preset": "H1-optimal",
                "levels": 4,
                "seed": 0,
            }
        }
    }
