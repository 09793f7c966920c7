"""
Conserved and monitored quantities: energy, momentum, angular momentum,
G- and F-norms, the modified energy balance, dissipation and drag/lift
"""
import logging
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from emacflow.models.state import History, State
from emacflow.services.assembly_service import AssemblyService
from emacflow.services.space_service import interpolate
from emacflow.utils.exceptions import ConfigurationException, ParameterException, UsageException

logger = logging.getLogger(__name__)


def f_extrapolant(u_next: np.ndarray, u_prev: np.ndarray, u_prev2: np.ndarray) -> np.ndarray:
    """F[w^{n+1}] = 3/2 w^{n+1} - w^n + 1/2 w^{n-1}"""
    if not (u_next.shape == u_prev.shape == u_prev2.shape):
        raise UsageException("Extrapolant levels must have equal length")
    return 1.5 * u_next - u_prev + 0.5 * u_prev2


class DiagnosticsService:
    """Quadratic and linear functionals of velocity coefficient vectors"""

    def __init__(self, assembler: AssemblyService):
        self.assembler = assembler
        self.space = assembler.space
        self.mass = assembler.assemble_mass()
        self.stiffness = assembler.assemble_stiffness(1.0)
        # M applied to e_x, e_y and the rigid rotation (y, -x), all exact in P2
        self._momentum_x = self.mass @ interpolate(lambda x, y, t: (1.0, 0.0), 0.0, self.space)
        self._momentum_y = self.mass @ interpolate(lambda x, y, t: (0.0, 1.0), 0.0, self.space)
        self._rotation = self.mass @ interpolate(lambda x, y, t: (y, -x), 0.0, self.space)
        self._drag_tests: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """L2 inner product (a, b)"""
        return float(a @ (self.mass @ b))

    def norm_sq(self, u: np.ndarray) -> float:
        return self.inner(u, u)

    def grad_norm_sq(self, u: np.ndarray) -> float:
        return float(u @ (self.stiffness @ u))

    def kinetic_energy(self, u: np.ndarray) -> float:
        return 0.5 * self.norm_sq(u)

    def momentum(self, u: np.ndarray) -> Tuple[float, float]:
        return float(self._momentum_x @ u), float(self._momentum_y @ u)

    def angular_momentum(self, u: np.ndarray) -> float:
        """Integral of u1 y - u2 x"""
        return float(self._rotation @ u)

    def g_norm_sq_pair(self, a: np.ndarray, b: np.ndarray) -> float:
        """3/2 |a|^2 - 3/2 (a, b) + 1/2 |b|^2"""
        Ma = self.mass @ a
        return float(1.5 * (a @ Ma) - 1.5 * (b @ Ma) + 0.5 * (b @ (self.mass @ b)))

    def f_norm_sq(self, u: np.ndarray) -> float:
        """(u, F u) with F = 3I"""
        return 3.0 * self.norm_sq(u)

    def dissipation_split(
        self, history: History, u_next: np.ndarray, nu: float, dt: float, filtered: bool = True
    ) -> Tuple[float, float]:
        """
        (numerical, physical) dissipation of one step. Filtered steps use
        3/4 |u^{n+1} - 2u^n + u^{n-1}|^2 and nu dt |grad F[u^{n+1}]|^2; plain
        backward Euler steps use 1/2 |u^{n+1} - u^n|^2 and nu dt |grad u^{n+1}|^2.
        """
        if filtered:
            jump = u_next - 2.0 * history.u_prev + history.u_prev2
            numerical = 0.25 * self.f_norm_sq(jump)
            physical = nu * dt * self.grad_norm_sq(f_extrapolant(u_next, history.u_prev, history.u_prev2))
        else:
            numerical = 0.5 * self.norm_sq(u_next - history.u_prev)
            physical = nu * dt * self.grad_norm_sq(u_next)
        return numerical, physical

    def energy_balance_residual(
        self,
        levels: Sequence[np.ndarray],
        nu: float,
        dt: float,
        forcing: Optional[Callable] = None,
        t0: float = 0.0,
        filtered: bool = True,
        filter_first_step: bool = False,
    ) -> float:
        """
        Signed residual of the modified energy identity over a stored
        trajectory ``levels = [u^{-1}, u^0, u^1, ..., u^N]``.
        """
        if len(levels) < 2:
            raise UsageException("Energy balance needs at least two stored velocity levels")
        balance = EnergyBalance(self, nu, dt, forcing)
        history = History(u_prev=levels[1], u_prev2=levels[0], t=t0)
        for n, u_next in enumerate(levels[2:]):
            step_filtered = filtered and (n > 0 or filter_first_step)
            history = balance.add(history, u_next, step_filtered)
        return balance.residual(history)

    def stability_bound(
        self,
        levels: Sequence[np.ndarray],
        nu: float,
        dt: float,
        forcing: Optional[Callable] = None,
        t0: float = 0.0,
    ) -> Tuple[float, float]:
        """
        Both sides of the unconditional stability estimate for a filtered
        trajectory ``[u^{-1}, u^0, u^1, ..., u^N]``; the L2 norm of f stands
        in for its dual norm, which it bounds from above.
        """
        if nu <= 0:
            raise ParameterException("Stability bound needs nu > 0")
        if len(levels) < 3:
            raise UsageException("Stability bound needs the levels u^{-1}, u^0 and u^1 at least")
        u = levels[1:]
        N = len(u) - 1
        lhs = self.norm_sq(u[N])
        forcing_sum = 0.0
        for n in range(1, N):
            jump = u[n + 1] - 2.0 * u[n] + u[n - 1]
            lhs += self.f_norm_sq(jump) / 3.0
            lhs += 2.0 * dt * nu / 3.0 * self.grad_norm_sq(f_extrapolant(u[n + 1], u[n], u[n - 1]))
            if forcing is not None:
                forcing_sum += self.assembler.field_l2_sq(forcing, t0 + (n + 1) * dt)
        rhs = (
            (1.0 / 3.0) ** N * self.norm_sq(u[0])
            + 2.0 * N * (self.norm_sq(u[1]) + self.norm_sq(u[0]))
            + 2.0 * N * dt / (3.0 * nu) * forcing_sum
        )
        return lhs, rhs

    def drag_lift(
        self,
        state: State,
        nu: float,
        cylinder_marker: str,
        u_prev: Optional[np.ndarray] = None,
        dt: Optional[float] = None,
        density: float = 1.0,
        length: float = 0.1,
        velocity: float = 1.0,
    ) -> Tuple[float, float]:
        """
        Drag and lift coefficients from the volume residual functional

            R(v) = ((u - u_prev)/dt, v) + nu (grad u, grad v) + ((u.grad)u, v) - (p, div v)

        with p = P + |u|^2/2 and v the P2 field equal to e_x (drag) or e_y
        (lift) on the cylinder nodes and zero elsewhere.
        """
        v_drag, v_lift = self._drag_test_fields(cylinder_marker)
        u, P = state.u, state.P
        scale = -2.0 / (density * length * velocity ** 2)

        def functional(v: np.ndarray) -> float:
            value = nu * float(u @ (self.stiffness @ v))
            value += self.assembler.convective_trilinear(u, u, v)
            value -= self.assembler.kinematic_pressure_work(P, u, v)
            if u_prev is not None and dt:
                value += self.inner(u - u_prev, v) / dt
            return value

        return scale * functional(v_drag), scale * functional(v_lift)

    def _drag_test_fields(self, marker: str) -> Tuple[np.ndarray, np.ndarray]:
        if marker not in self._drag_tests:
            if not self.space.mesh.has_marker(marker):
                raise ConfigurationException(
                    f"Mesh has no marker '{marker}' for drag/lift; markers are {self.space.mesh.marker_names}"
                )
            nodes = self.space.boundary_nodes(marker)
            v_drag = np.zeros(self.space.n_velocity)
            v_lift = np.zeros(self.space.n_velocity)
            v_drag[2 * nodes] = 1.0
            v_lift[2 * nodes + 1] = 1.0
            self._drag_tests[marker] = (v_drag, v_lift)
        return self._drag_tests[marker]


class EnergyBalance:
    """
    Online accumulator of the modified energy identity. Filtered steps are
    measured against the G-norm of (u^n, u^{n-1}); plain backward Euler steps
    against |u^n|^2 / 2. A change of scheme re-anchors at the current levels.
    """

    def __init__(self, diagnostics: DiagnosticsService, nu: float, dt: float, forcing: Optional[Callable] = None):
        self.diagnostics = diagnostics
        self.nu = nu
        self.dt = dt
        self.forcing = forcing
        self.kind: Optional[str] = None
        self.start_energy = 0.0
        self.dissipated = 0.0
        self.work = 0.0

    def _energy(self, kind: str, u: np.ndarray, u_prev: np.ndarray) -> float:
        if kind == "filtered":
            return self.diagnostics.g_norm_sq_pair(u, u_prev)
        return 0.5 * self.diagnostics.norm_sq(u)

    def add(
        self,
        history: History,
        u_next: np.ndarray,
        filtered: bool,
        load: Optional[np.ndarray] = None,
        pressure: Optional[np.ndarray] = None,
    ) -> History:
        """Account for the step history -> u_next; returns the shifted history"""
        kind = "filtered" if filtered else "euler"
        if kind != self.kind:
            self.kind = kind
            self.start_energy = self._energy(kind, history.u_prev, history.u_prev2)
            self.dissipated = 0.0
            self.work = 0.0
        numerical, physical = self.diagnostics.dissipation_split(history, u_next, self.nu, self.dt, filtered)
        self.dissipated += numerical + physical
        t_next = history.t + self.dt
        if load is None and self.forcing is not None:
            load = self.diagnostics.assembler.assemble_forcing(self.forcing, t_next)
        if load is not None:
            tested = f_extrapolant(u_next, history.u_prev, history.u_prev2) if filtered else u_next
            self.work += self.dt * float(load @ tested)
        return history.shift(u_next, t_next, pressure=history.pressure if pressure is None else pressure)

    def residual(self, history: History) -> float:
        if self.kind is None:
            return 0.0
        current = self._energy(self.kind, history.u_prev, history.u_prev2)
        return current - self.start_energy + self.dissipated - self.work
