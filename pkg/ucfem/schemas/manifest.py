"""Run manifest written next to the CSV outputs."""
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


def utcnow() -> datetime:
    """Get current UTC time."""
    return datetime.now(timezone.utc)


class LevelManifest(BaseModel):
    """Outcome of one mesh level."""

    level: int = Field(..., ge=0)
    h: Optional[float] = Field(None, description="Mesh size")
    dofs: Optional[int] = Field(None, description="Saddle-point system size")
    status: str = Field("ok", description="ok or error")
    error: Optional[str] = Field(None, description="Error message when the level failed")
    error_type: Optional[str] = Field(None, description="Exception class name")
    wall_ms: Optional[float] = Field(None, description="Wall time in milliseconds")
    solve_residual: Optional[float] = Field(None, description="Relative linear-solve residual")


class RunManifest(BaseModel):
    """Configuration, version and per-level outcome of a run."""

    app_name: str
    app_version: str
    problem: str
    seed: int
    config: Dict[str, Any] = Field(default_factory=dict)
    residual_norms: str = Field(
        "res_hm1: H1-Riesz dual norm on the once-refined mesh; "
        "res_hm2_proxy: L2 norm of that Riesz representative (H^-2 proxy)",
        description="How residual dual norms are measured",
    )
    started_at: datetime = Field(default_factory=utcnow)
    finished_at: Optional[datetime] = None
    levels: List[LevelManifest] = Field(default_factory=list)
    files: List[str] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)

    @property
    def failed_levels(self) -> List[int]:
        return [entry.level for entry in self.levels if entry.status != "ok"]
