"""
Benchmark problems (manufactured solution, Gresho vortex, channel with
cylinder, custom), error norms and convergence rates
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from emacflow.models.space import TaylorHoodSpace
from emacflow.models.state import State
from emacflow.services.assembly_service import AssemblyService
from emacflow.services.space_service import interpolate
from emacflow.utils.exceptions import ParameterException, UndefinedRateException, UsageException
from emacflow.utils.helpers import zero_vector_field

logger = logging.getLogger(__name__)

CHANNEL_HEIGHT = 0.41
CHANNEL_LENGTH = 2.2
CYLINDER_CENTER = (0.2, 0.2)
CYLINDER_RADIUS = 0.05

# Gresho pressure constants fixed by continuity at r = 0.4 and r = 0.2
GRESHO_C2 = 6.0 - 4.0 * math.log(0.4)
GRESHO_C1 = GRESHO_C2 - 4.0 + 4.0 * math.log(0.2)


# -- manufactured solution -----------------------------------------------------

def manufactured_velocity(x, y, t):
    e = np.exp(t)
    return np.cos(y) * e, np.sin(x) * e


def manufactured_pressure(x, y, t):
    return (x - y) * (1.0 + t)


def manufactured_gradient(x, y, t):
    e = np.exp(t)
    zero = np.zeros_like(np.asarray(x, dtype=float))
    return ((zero, -np.sin(y) * e), (np.cos(x) * e, zero))


def manufactured_forcing(x, y, t):
    """f = u_t - Lap u + (u.grad)u + grad p for the manufactured data with nu = 1"""
    e, e2 = np.exp(t), np.exp(2.0 * t)
    fx = 2.0 * np.cos(y) * e - np.sin(x) * np.sin(y) * e2 + (1.0 + t)
    fy = 2.0 * np.sin(x) * e + np.cos(x) * np.cos(y) * e2 - (1.0 + t)
    return fx, fy


# -- Gresho vortex ---------------------------------------------------------------

def gresho_speed(r):
    """Tangential speed: 5r inside 0.2, 2 - 5r up to 0.4, zero beyond"""
    r = np.asarray(r, dtype=float)
    return np.where(r <= 0.2, 5.0 * r, np.where(r <= 0.4, 2.0 - 5.0 * r, 0.0))


def gresho_pressure(x, y, t=0.0):
    r = np.hypot(x, y)
    safe = np.where(r > 0, r, 1.0)
    inner = 12.5 * r ** 2 + GRESHO_C1
    middle = 12.5 * r ** 2 - 20.0 * r + 4.0 * np.log(safe) + GRESHO_C2
    return np.where(r <= 0.2, inner, np.where(r <= 0.4, middle, 0.0))


def gresho_velocity(x, y, t=0.0):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    # v_theta / r, finite at the origin
    ratio = np.where(r <= 0.2, 5.0, gresho_speed(r) / np.where(r > 0, r, 1.0))
    return -ratio * y, ratio * x


def gresho_initial(x, y):
    """(velocity, pressure) of the standing vortex"""
    return gresho_velocity(x, y), gresho_pressure(x, y)


# -- channel with cylinder --------------------------------------------------------

def cylinder_inflow(t: float, y):
    """Parabolic profile (6/0.41^2) sin(pi t / 8) y (0.41 - y), applied at inflow and outflow"""
    y = np.asarray(y, dtype=float)
    tol = 1e-12
    if np.any(y < -tol) or np.any(y > CHANNEL_HEIGHT + tol):
        raise ParameterException(f"Inflow profile is defined for 0 <= y <= {CHANNEL_HEIGHT}")
    ux = 6.0 / CHANNEL_HEIGHT ** 2 * math.sin(math.pi * t / 8.0) * y * (CHANNEL_HEIGHT - y)
    return ux, np.zeros_like(ux)


def cylinder_boundary_velocity(x, y, t):
    return cylinder_inflow(t, y)


# -- problem definitions ---------------------------------------------------------

@dataclass
class Problem:
    """Everything a run needs besides the mesh and the solver settings"""
    name: str
    initial_velocity: Callable
    dirichlet: Dict[str, Callable]
    forcing: Optional[Callable] = None
    exact_velocity: Optional[Callable] = None
    exact_gradient: Optional[Callable] = None
    reference_velocity: Optional[Callable] = None
    drag_marker: Optional[str] = None
    markers_required: List[str] = field(default_factory=list)


def manufactured_problem(homogeneous: bool = False) -> Problem:
    if homogeneous:
        return Problem(
            name="manufactured",
            initial_velocity=zero_vector_field,
            dirichlet={"all": zero_vector_field},
            forcing=manufactured_forcing,
        )
    return Problem(
        name="manufactured",
        initial_velocity=manufactured_velocity,
        dirichlet={"all": manufactured_velocity},
        forcing=manufactured_forcing,
        exact_velocity=manufactured_velocity,
        exact_gradient=manufactured_gradient,
    )


def gresho_problem() -> Problem:
    return Problem(
        name="gresho",
        initial_velocity=gresho_velocity,
        dirichlet={"all": zero_vector_field},
        reference_velocity=gresho_velocity,
    )


def cylinder_problem() -> Problem:
    return Problem(
        name="cylinder",
        initial_velocity=zero_vector_field,
        dirichlet={
            "inflow": cylinder_boundary_velocity,
            "outflow": cylinder_boundary_velocity,
            "walls": zero_vector_field,
            "cylinder": zero_vector_field,
        },
        drag_marker="cylinder",
        markers_required=["inflow", "outflow", "walls", "cylinder"],
    )


def custom_problem(boundary_velocity: Dict[str, Sequence[float]]) -> Problem:
    def constant(vx: float, vy: float) -> Callable:
        return lambda x, y, t: (np.full_like(x, vx), np.full_like(x, vy))

    return Problem(
        name="custom",
        initial_velocity=zero_vector_field,
        dirichlet={marker: constant(*value) for marker, value in boundary_velocity.items()},
        markers_required=list(boundary_velocity),
    )


def build_problem(benchmark: str, homogeneous: bool = False, boundary_velocity=None) -> Problem:
    if benchmark == "manufactured":
        return manufactured_problem(homogeneous)
    if benchmark == "gresho":
        return gresho_problem()
    if benchmark == "cylinder":
        return cylinder_problem()
    if benchmark == "custom":
        return custom_problem(boundary_velocity or {})
    raise ParameterException(f"Unknown benchmark '{benchmark}'")


# -- error norms and rates -------------------------------------------------------

def gradient_error_sq(
    assembler: AssemblyService,
    u_h: np.ndarray,
    exact_u: Callable,
    t: float,
    mode: str = "interpolant",
    exact_gradient: Optional[Callable] = None,
) -> float:
    """
    |grad(u(t) - u_h)|^2. In interpolant mode u(t) is replaced by its P2
    interpolant and the stiffness matrix weighs the difference.
    """
    if mode == "interpolant":
        diff = interpolate(exact_u, t, assembler.space) - u_h
        return float(diff @ (assembler.assemble_stiffness(1.0) @ diff))
    if mode == "exact":
        if exact_gradient is None:
            raise UsageException("Exact error mode needs the analytic gradient")
        return assembler.h1_error_sq(u_h, exact_gradient, t)
    raise ParameterException(f"Unknown error mode '{mode}'")


def error_norm_2_1(
    trajectory: Sequence[State],
    exact_u: Callable,
    space: TaylorHoodSpace,
    dt: Optional[float] = None,
    mode: str = "interpolant",
    exact_gradient: Optional[Callable] = None,
    assembler: Optional[AssemblyService] = None,
) -> float:
    """
    Discrete L2(0,T; H1) error { dt sum_n |grad(u(t^n) - u_h^n)|^2 }^{1/2}
    over the states t^1..t^N of a uniform trajectory.
    """
    states = [s for s in trajectory if s is not None]
    if not states or len(states) != len(trajectory):
        raise UsageException("Error norm needs every state of the trajectory")
    times = np.array([s.t for s in states])
    if dt is None:
        dt = float(times[1] - times[0]) if len(times) > 1 else float(times[0])
    if dt <= 0:
        raise UsageException("Trajectory times must increase")
    if len(times) > 1 and not np.allclose(np.diff(times), dt, rtol=1e-9, atol=1e-14):
        raise UsageException("Trajectory has missing or unevenly spaced states")
    assembler = assembler or AssemblyService(space)
    total = sum(
        gradient_error_sq(assembler, s.u, exact_u, s.t, mode, exact_gradient) for s in states
    )
    return math.sqrt(dt * total)


def convergence_rate(errors: Sequence[float], params: Sequence[float]) -> List[float]:
    """rate_k = ln(e_{k-1}/e_k) / ln(p_{k-1}/p_k)"""
    if len(errors) != len(params):
        raise ParameterException("errors and params must have the same length")
    if len(errors) < 2:
        raise ParameterException("A rate needs at least two refinements")
    if any(b >= a for a, b in zip(params, params[1:])):
        raise ParameterException("params must be strictly decreasing")
    if any(e is None or not e > 0 for e in errors):
        raise UndefinedRateException("Rates are undefined for zero or negative errors")
    return [
        math.log(errors[k - 1] / errors[k]) / math.log(params[k - 1] / params[k])
        for k in range(1, len(errors))
    ]
