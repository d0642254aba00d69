"""Pydantic records for experiment outputs."""
from ucfem.schemas.manifest import LevelManifest, RunManifest
from ucfem.schemas.records import ConditionReport, ConditionStudy, ErrorRecord, RateReport, RateRow

__all__ = [
    # Records
    "ErrorRecord",
    "RateRow",
    "RateReport",
    "ConditionReport",
    "ConditionStudy",
    # Manifest
    "LevelManifest",
    "RunManifest",
]
