"""
Run configuration schemas
"""
import json
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from emacflow.config import get_settings
from emacflow.utils.exceptions import ConfigException

BUNDLED_CYLINDER = "bundled:cylinder"
DATA_DIR = Path(__file__).resolve().parent.parent / "data"


class SolverConfig(BaseModel):
    """Time stepping and nonlinear/linear solver parameters of one run"""
    model_config = ConfigDict(extra="forbid")

    dt: float = Field(gt=0)
    T: float = Field(gt=0)
    nu: float = Field(ge=0)
    newton_abs_tol: float = Field(default_factory=lambda: get_settings().NEWTON_ABS_TOL, gt=0)
    newton_rel_tol: float = Field(default_factory=lambda: get_settings().NEWTON_REL_TOL, gt=0)
    newton_max_iter: int = Field(default_factory=lambda: get_settings().NEWTON_MAX_ITER, ge=1)
    linear_solver_tol: float = Field(default_factory=lambda: get_settings().LINEAR_SOLVER_TOL, gt=0)
    filter_enabled: bool = True
    filter_first_step: bool = False

    @model_validator(mode="after")
    def check_horizon(self) -> "SolverConfig":
        if self.T < self.dt * (1.0 - 1e-12):
            raise ValueError(f"T={self.T} must be at least dt={self.dt}")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


class MeshSpec(BaseModel):
    """Structured rectangle (nx, ny, bounds) or a mesh file path"""
    model_config = ConfigDict(extra="forbid")

    nx: Optional[int] = Field(None, ge=1)
    ny: Optional[int] = Field(None, ge=1)
    bounds: Optional[Tuple[float, float, float, float]] = None
    path: Optional[str] = None

    @model_validator(mode="after")
    def check_kind(self) -> "MeshSpec":
        structured = self.nx is not None or self.ny is not None
        if structured and self.path is not None:
            raise ValueError("give either nx/ny or path, not both")
        if not structured and self.path is None:
            raise ValueError("give nx and ny or a path")
        if structured:
            if self.nx is None or self.ny is None:
                raise ValueError("nx and ny go together")
            if self.bounds is None:
                self.bounds = (0.0, 1.0, 0.0, 1.0)
        return self

    @property
    def is_file(self) -> bool:
        return self.path is not None


class SweepSpec(BaseModel):
    """Refinement sweep over mesh size h or time step dt"""
    model_config = ConfigDict(extra="forbid")

    parameter: Literal["h", "dt"]
    values: List[float] = Field(min_length=1)
    workers: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def check_values(self) -> "SweepSpec":
        if any(v <= 0 for v in self.values):
            raise ValueError("sweep values must be positive")
        if any(b >= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("sweep values must be strictly decreasing")
        return self


BENCHMARK_DEFAULTS: Dict[str, Dict[str, object]] = {
    "manufactured": {"dt": 1e-5, "T": 1e-4, "nu": 1.0, "mesh": {"nx": 8, "ny": 8, "bounds": (0.0, 1.0, 0.0, 1.0)}},
    "gresho": {"dt": 0.025, "T": 8.0, "nu": 0.0, "mesh": {"nx": 48, "ny": 48, "bounds": (-0.5, 0.5, -0.5, 0.5)}},
    "cylinder": {"dt": 0.01, "T": 8.0, "nu": 1e-3},
    "custom": {},
}


class RunConfig(BaseModel):
    """One simulation (or sweep) as read from a JSON config file"""
    model_config = ConfigDict(extra="forbid")

    benchmark: Literal["manufactured", "gresho", "cylinder", "custom"]
    mesh: Optional[MeshSpec] = None
    dt: Optional[float] = Field(None, gt=0)
    T: Optional[float] = Field(None, gt=0)
    nu: Optional[float] = Field(None, ge=0)
    filter_enabled: bool = True
    filter_first_step: bool = False
    newton_abs_tol: Optional[float] = Field(None, gt=0)
    newton_rel_tol: Optional[float] = Field(None, gt=0)
    newton_max_iter: Optional[int] = Field(None, ge=1)
    linear_solver_tol: Optional[float] = Field(None, gt=0)
    output_dir: Optional[str] = None
    snapshot_every: Optional[int] = Field(None, ge=1)
    store_emac_pressure: bool = False
    homogeneous: bool = Field(False, description="manufactured problem with zero boundary and initial data")
    error_mode: Literal["interpolant", "exact"] = "exact"
    boundary_velocity: Optional[Dict[str, Tuple[float, float]]] = None
    sweep: Optional[SweepSpec] = None

    @model_validator(mode="after")
    def fill_defaults(self) -> "RunConfig":
        defaults = BENCHMARK_DEFAULTS[self.benchmark]
        for key in ("dt", "T", "nu"):
            if getattr(self, key) is None:
                if key not in defaults:
                    raise ValueError(f"benchmark '{self.benchmark}' needs an explicit '{key}'")
                setattr(self, key, defaults[key])
        if self.mesh is None:
            if "mesh" not in defaults:
                raise ValueError(f"benchmark '{self.benchmark}' needs a mesh with a path")
            self.mesh = MeshSpec(**defaults["mesh"])
        if self.benchmark == "cylinder" and not self.mesh.is_file:
            raise ValueError("benchmark 'cylinder' needs mesh.path")
        if self.benchmark == "custom" and not self.boundary_velocity:
            raise ValueError("benchmark 'custom' needs boundary_velocity")
        if self.boundary_velocity and self.benchmark != "custom":
            raise ValueError("boundary_velocity only applies to benchmark 'custom'")
        if self.sweep is not None and self.sweep.parameter == "h" and self.mesh.is_file:
            raise ValueError("an h sweep needs a structured mesh")
        settings = get_settings()
        if self.output_dir is None:
            self.output_dir = str(Path(settings.OUTPUT_DIR) / self.benchmark)
        if self.snapshot_every is None:
            self.snapshot_every = settings.SNAPSHOT_EVERY
        # exercise the solver checks (T multiple of dt) at parse time
        self.solver_config()
        return self

    def solver_config(self) -> SolverConfig:
        extra = {
            key: getattr(self, key)
            for key in ("newton_abs_tol", "newton_rel_tol", "newton_max_iter", "linear_solver_tol")
            if getattr(self, key) is not None
        }
        return SolverConfig(
            dt=self.dt,
            T=self.T,
            nu=self.nu,
            filter_enabled=self.filter_enabled,
            filter_first_step=self.filter_first_step,
            **extra,
        )


def _describe(error: dict) -> str:
    location = ".".join(str(part) for part in error["loc"]) or "config"
    if error["type"] == "extra_forbidden":
        return f"unknown key '{location}'"
    return f"{location}: {error['msg']} (got {error.get('input')!r})"


def resolve_mesh_path(value: str, base_dir: Path) -> Path:
    if value == BUNDLED_CYLINDER:
        return DATA_DIR / "cylinder.msh"
    path = Path(value)
    return path if path.is_absolute() else (base_dir / path)


def parse_config(path) -> RunConfig:
    """Read and validate a strict JSON run configuration"""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigException(f"{path.name} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigException(f"{path.name} must hold a JSON object")
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigException("; ".join(_describe(err) for err in e.errors()))

    base_dir = path.resolve().parent
    if config.mesh.is_file:
        mesh_path = resolve_mesh_path(config.mesh.path, base_dir)
        if not mesh_path.exists():
            raise ConfigException(f"mesh.path: file {mesh_path} does not exist")
        config.mesh.path = str(mesh_path)
    output_dir = Path(config.output_dir)
    if not output_dir.is_absolute() and "output_dir" in raw:
        config.output_dir = str(base_dir / output_dir)
    return config
