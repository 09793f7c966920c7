"""
Pytest configuration and fixtures
"""
import json

import numpy as np
import pytest

from emacflow.config import get_settings
from emacflow.models.mesh import Mesh
from emacflow.models.state import History
from emacflow.schemas.config import DATA_DIR, SolverConfig
from emacflow.services.assembly_service import AssemblyService
from emacflow.services.benchmark_service import gresho_velocity
from emacflow.services.diagnostics_service import DiagnosticsService
from emacflow.services.mesh_service import generate_rectangle, load_msh
from emacflow.services.solver_service import SolverService
from emacflow.services.space_service import build_taylor_hood, interpolate
from emacflow.utils.helpers import zero_vector_field

UNIT_SQUARE = (0.0, 1.0, 0.0, 1.0)
CENTERED_SQUARE = (-0.5, 0.5, -0.5, 0.5)


@pytest.fixture(autouse=True)
def clear_settings_cache():
    """Settings are cached per process; tests that patch the environment need a fresh copy"""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def make_space():
    """Factory for Taylor-Hood spaces on structured rectangles"""
    def factory(nx: int = 4, ny: int = None, bounds=UNIT_SQUARE):
        return build_taylor_hood(generate_rectangle(nx, ny or nx, bounds))
    return factory


@pytest.fixture
def unit_space(make_space):
    """P2/P1 space on a 4x4 unit square"""
    return make_space(4)


@pytest.fixture
def assembler(unit_space) -> AssemblyService:
    return AssemblyService(unit_space)


@pytest.fixture
def interior_field(unit_space, rng):
    """Random velocity vanishing on the whole boundary"""
    u = rng.standard_normal(unit_space.n_velocity)
    nodes = unit_space.boundary_nodes("all")
    u[2 * nodes] = 0.0
    u[2 * nodes + 1] = 0.0
    return u


@pytest.fixture
def make_solver(make_space):
    """Factory for a solver on the centered square with zero boundary data"""
    def factory(nx: int = 8, bc=None, forcing=None, **solver_options):
        space = make_space(nx, bounds=CENTERED_SQUARE)
        options = {"dt": 0.025, "T": 0.25, "nu": 0.0}
        options.update(solver_options)
        solver = SolverService(
            space,
            SolverConfig(**options),
            bc if bc is not None else {"all": zero_vector_field},
            forcing=forcing,
        )
        return space, solver
    return factory


@pytest.fixture
def gresho_history():
    """Startup levels u^0 = u^{-1} for the Gresho vortex on a given space"""
    def factory(space) -> History:
        return History.start(interpolate(gresho_velocity, 0.0, space))
    return factory


@pytest.fixture
def write_config(tmp_path):
    """Write a JSON run configuration into the test directory"""
    def factory(payload: dict, name: str = "run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        return path
    return factory


@pytest.fixture(scope="session")
def cylinder_mesh() -> Mesh:
    """The packaged channel-with-cylinder mesh, read once per session"""
    return load_msh(DATA_DIR / "cylinder.msh")


@pytest.fixture(scope="session")
def cylinder_diagnostics(cylinder_mesh) -> DiagnosticsService:
    return DiagnosticsService(AssemblyService(build_taylor_hood(cylinder_mesh)))
