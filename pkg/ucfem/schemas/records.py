"""Pydantic records for per-level errors, fitted rates and condition numbers."""
import math
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from ucfem.config import ERROR_COLUMNS, RATE_COLUMNS


def _format(value: Any) -> str:
    """CSV cell text: repr-exact floats, 'inf' for infinity, empty for None."""
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


class ErrorRecord(BaseModel):
    """Errors, residual dual norms and stabilizer diagnostics on one mesh level."""

    problem: str = Field(..., description="Problem name")
    p: int = Field(..., ge=1, le=3, description="Polynomial order")
    alpha: float = Field(..., description="Data-fidelity exponent")
    eta: float = Field(..., description="Dual stabilizer exponent (inf for the reduced system)")
    tau: float = Field(..., description="Dual Tikhonov exponent (inf drops the term)")
    s_reg: float = Field(..., description="Assumed regularity index")
    level: int = Field(..., ge=0, description="Mesh level (0 = coarsest)")
    h: float = Field(..., gt=0, description="Mesh size")
    dofs: int = Field(..., ge=1, description="Size of the saddle-point system")
    l2_B: float = Field(..., description="L2 error on B")
    h1_B: float = Field(..., description="H1 error on B")
    l2_omega: float = Field(..., description="L2 misfit to the datum on omega")
    l2_Omega: float = Field(..., description="L2 error on the whole domain")
    h1_Omega: float = Field(..., description="H1 error on the whole domain")
    res_hm1: float = Field(..., description="Discrete H^-1 norm of the PDE residual")
    res_hm2_proxy: float = Field(..., description="Iterated-Riesz proxy of the H^-2 residual norm")
    prs: float = Field(..., description="sqrt(J_h(u_h, u_h))")
    dus: float = Field(..., description="L2 norm of the dual variable z_h")
    cond: Optional[float] = Field(None, description="Euclidean condition number estimate")
    wall_ms: Optional[float] = Field(None, description="Wall time of the level in milliseconds")

    @field_validator(
        "l2_B", "h1_B", "l2_omega", "l2_Omega", "h1_Omega", "res_hm1", "res_hm2_proxy", "prs", "dus")
    @classmethod
    def nonnegative_finite(cls, v: float) -> float:
        if not (math.isfinite(v) and v >= 0):
            raise ValueError(f"norm must be finite and non-negative, got {v}")
        return v

    def csv_row(self) -> List[str]:
        values = self.model_dump()
        return [_format(values[column]) for column in ERROR_COLUMNS]

    model_config = {
        "json_schema_extra": {
            "example": {
                "problem": "hadamard-conv", "p": 1, "alpha": 0.0, "eta": math.inf, "tau": 0.0,
                "s_reg": 2.0, "level": 0, "h": 0.4, "dofs": 130, "l2_B": 0.01, "h1_B": 0.1,
                "l2_omega": 0.001, "l2_Omega": 0.05, "h1_Omega": 0.3, "res_hm1": 0.02,
                "res_hm2_proxy": 0.004, "prs": 0.05, "dus": 0.001, "cond": None, "wall_ms": None,
            }
        }
    }


class RateRow(BaseModel):
    """Fitted convergence slope of one norm column."""

    norm: str = Field(..., description="Norm column of errors.csv")
    slope_global: Optional[float] = Field(None, description="Least-squares slope of log error vs log h")
    slope_last: Optional[float] = Field(None, description="Slope over the last refinement interval")
    kappa_est: Optional[float] = Field(None, description="Empirical Hoelder exponent (B norms only)")

    def csv_row(self) -> List[str]:
        values = self.model_dump()
        return [_format(values[column]) for column in RATE_COLUMNS]


class RateReport(BaseModel):
    """Fitted slopes of every norm column for one run."""

    s_reg: float = Field(..., ge=1.0, description="Regularity index used for kappa")
    levels: int = Field(..., ge=3, description="Number of mesh levels in the fit")
    rows: List[RateRow] = Field(default_factory=list)

    def row(self, norm: str) -> RateRow:
        for row in self.rows:
            if row.norm == norm:
                return row
        raise KeyError(norm)

    def slopes(self) -> Dict[str, Optional[float]]:
        return {row.norm: row.slope_global for row in self.rows}


class ConditionReport(BaseModel):
    """Extremal singular value estimates of one saddle-point matrix."""

    sigma_max: float = Field(..., gt=0, description="Largest singular value estimate")
    sigma_min: float = Field(..., gt=0, description="Smallest singular value estimate")
    iterations_max: int = Field(..., ge=1, description="Power iterations used")
    iterations_min: int = Field(..., ge=1, description="Inverse iterations used")
    residual_max: float = Field(0.0, ge=0, description="Final relative eigen-residual of the power iteration")
    residual_min: float = Field(0.0, ge=0, description="Final relative eigen-residual of the inverse iteration")
    h: Optional[float] = Field(None, description="Mesh size")
    dofs: Optional[int] = Field(None, description="Matrix size")

    @model_validator(mode="after")
    def ordered(self) -> "ConditionReport":
        # estimates of a near-identity matrix may cross by the tolerance
        if self.sigma_max < self.sigma_min * (1 - 1e-3):
            raise ValueError(f"sigma_max {self.sigma_max} < sigma_min {self.sigma_min}")
        return self

    @property
    def condition(self) -> float:
        return max(self.sigma_max / self.sigma_min, 1.0)


class ConditionStudy(BaseModel):
    """Condition numbers across mesh levels and the fitted exponent of h."""

    problem: str
    p: int
    reports: List[ConditionReport] = Field(default_factory=list)
    slope: Optional[float] = Field(None, description="Slope of log K2 vs log h")
