"""
Diagnostics and summary schemas written by a run
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from emacflow.utils.helpers import format_float

CSV_COLUMNS = [
    "t", "energy", "M1", "M2", "AM", "num_diss", "phys_diss",
    "drag", "lift", "newton_iters", "l2_error", "balance_residual",
]


class DiagnosticsRecord(BaseModel):
    """Scalars monitored after each step (and at t = 0)"""
    t: float
    energy: float = Field(ge=0)
    M1: float
    M2: float
    AM: float
    g_norm_sq: float = Field(ge=0)
    num_diss: float = 0.0
    phys_diss: float = 0.0
    drag: Optional[float] = None
    lift: Optional[float] = None
    newton_iters: int = 0
    l2_error: Optional[float] = None
    balance_residual: Optional[float] = None

    def csv_row(self) -> List[str]:
        return [format_float(getattr(self, column)) for column in CSV_COLUMNS]


class RunSummary(BaseModel):
    """Run-level results written to summary.json"""
    benchmark: str
    filter_enabled: bool
    steps: int
    dt: float
    final_time: float
    mesh: Dict[str, int] = {}
    error_2_1: Optional[float] = None
    final_l2_error: Optional[float] = None
    final_energy: float = 0.0
    drag_max: Optional[float] = None
    drag_max_time: Optional[float] = None
    lift_max: Optional[float] = None
    lift_max_time: Optional[float] = None
    max_momentum_drift: List[float] = [0.0, 0.0]
    max_angular_momentum_drift: float = 0.0
    balance_residual: Optional[float] = None
    newton_iterations: int = 0
    wall_time_seconds: float = 0.0
    completed: bool = True


class SweepSummary(BaseModel):
    """Aggregated refinement study"""
    parameter: str
    filter_enabled: bool
    values: List[float]
    errors: List[Optional[float]]
    rates: List[Optional[float]]
    members: List[RunSummary]
