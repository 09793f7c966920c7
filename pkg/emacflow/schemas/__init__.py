"""
Pydantic schemas for run configuration and run results
"""
from emacflow.schemas.config import (
    MeshSpec,
    RunConfig,
    SolverConfig,
    SweepSpec,
    parse_config,
)
from emacflow.schemas.diagnostics import (
    DiagnosticsRecord,
    RunSummary,
    SweepSummary,
)

__all__ = [
    # Configuration
    "MeshSpec",
    "RunConfig",
    "SolverConfig",
    "SweepSpec",
    "parse_config",

    # Results
    "DiagnosticsRecord",
    "RunSummary",
    "SweepSummary",
]
