"""Stabilization parameter record of the primal-dual scheme."""
import math
from typing import Literal, Union

from pydantic import BaseModel, Field, field_serializer, field_validator

from ucfem.config import PRESETS, settings


class StabilizationParams(BaseModel):
    """Exponents and switches of the stabilized saddle-point system."""

    alpha: float = Field(1.0, ge=0.0, le=1.0, description="Data-fidelity weight exponent, h^(-2 alpha)")
    eta: float = Field(0.0, ge=0.0, description="Dual stabilizer exponent h^(2 eta); inf drops the group")
    tau: float = Field(2.0, ge=0.0, description="Dual Tikhonov exponent h^tau; inf drops the term")
    s_reg: float = Field(2.0, ge=1.0, description="Assumed regularity index s of the exact solution")
    tikhonov_off: bool = Field(False, description="Zero both Tikhonov terms")
    tikhonov_inner: Literal["h1", "h1_seminorm"] = Field(
        default_factory=lambda: settings.tikhonov_inner,
        description="Inner product of the Tikhonov terms",
    )

    @field_validator("eta", "tau", mode="before")
    @classmethod
    def parse_infinite(cls, v: Union[str, float]) -> float:
        """Accept 'inf' / 'infinity' spellings; infinite exponents drop their term."""
        if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity", "∞"):
            return math.inf
        return v

    @field_validator("alpha", "s_reg")
    @classmethod
    def finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v

    @field_serializer("eta", "tau", when_used="json")
    def serialize_exponent(self, v: float) -> Union[float, str]:
        return "inf" if math.isinf(v) else v

    @classmethod
    def preset(cls, name: str, **overrides) -> "StabilizationParams":
        """
        Build parameters from a named preset row.

        Raises:
            KeyError: If the preset name is unknown
        """
        if name not in PRESETS:
            raise KeyError(f"Unknown preset '{name}'; expected one of {sorted(PRESETS)}")
        values = dict(PRESETS[name])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def eta_infinite(self) -> bool:
        return math.isinf(self.eta)

    @property
    def tau_infinite(self) -> bool:
        return math.isinf(self.tau)

    @property
    def degenerate_dual(self) -> bool:
        """True when the dual block s*_h vanishes identically."""
        return self.eta_infinite and (self.tikhonov_off or self.tau_infinite)

    def data_weight(self, h: float) -> float:
        return h ** (-2.0 * self.alpha)

    def primal_tikhonov_weight(self, h: float) -> float:
        return 0.0 if self.tikhonov_off else h ** (2.0 * (self.s_reg - 1.0))

    def dual_group_weight(self, h: float) -> float:
        return 0.0 if self.eta_infinite else h ** (2.0 * self.eta)

    def dual_tikhonov_weight(self, h: float) -> float:
        return 0.0 if self.tikhonov_off or self.tau_infinite else h ** self.tau

    def label(self) -> str:
        return f"a{self.alpha:g}_e{self.eta:g}_t{self.tau:g}"

    model_config = {
        "frozen": True,
        "json_schema_extra": {
            "example": {
                "alpha": 1.0,
                "eta": 0.0,
                "tau": 2.0,
                "s_reg": 2.0,
                "tikhonov_off": False,
                "tikhonov_inner": "h1",
            }
        },
    }
