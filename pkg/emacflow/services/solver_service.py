"""
Time stepping: backward Euler with the EMAC convection term solved by
Newton's method over the constrained saddle-point system, followed by the
time filter.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse.linalg as spla

from emacflow.models.space import TaylorHoodSpace
from emacflow.models.state import History, State
from emacflow.schemas.config import SolverConfig
from emacflow.schemas.diagnostics import DiagnosticsRecord
from emacflow.services.assembly_service import (
    AssemblyService,
    ConstrainedSystem,
    SaddleSystem,
    apply_constraints,
    collect_dirichlet,
)
from emacflow.services.diagnostics_service import DiagnosticsService, EnergyBalance, f_extrapolant
from emacflow.utils.exceptions import (
    ConfigurationException,
    ConvergenceException,
    SolverException,
    UsageException,
)

logger = logging.getLogger(__name__)

__all__ = [
    "SolverService",
    "StepResult",
    "apply_time_filter",
    "f_extrapolant",
    "linear_solve",
]

MAX_REFINEMENTS = 3


def apply_time_filter(u_tilde: np.ndarray, history: History) -> np.ndarray:
    """u^{n+1} = u~ - 1/3 (u~ - 2u^n + u^{n-1}); the pressure is never filtered"""
    if not (u_tilde.shape == history.u_prev.shape == history.u_prev2.shape):
        raise UsageException("Filter levels must have equal length")
    return u_tilde - (u_tilde - 2.0 * history.u_prev + history.u_prev2) / 3.0


def linear_solve(system: ConstrainedSystem, tol: float = 1e-10) -> np.ndarray:
    """
    Sparse LU solve of the constrained system with iterative refinement
    until the relative residual is at most ``tol``.
    """
    b = system.rhs
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros_like(b)
    try:
        lu = spla.splu(system.matrix.tocsc())
    except RuntimeError as e:
        raise SolverException(f"singular factorization of the {system.matrix.shape[0]}-unknown system: {e}")

    x = lu.solve(b)
    relative = np.linalg.norm(b - system.matrix @ x) / b_norm
    refinements = 0
    while relative > tol and refinements < MAX_REFINEMENTS:
        refinements += 1
        x = x + lu.solve(b - system.matrix @ x)
        relative = np.linalg.norm(b - system.matrix @ x) / b_norm
    if refinements:
        logger.warning(f"Linear solve needed {refinements} refinement step(s), residual {relative:.3e}")
    if not np.isfinite(relative) or relative > tol:
        raise SolverException(f"linear solve residual {relative:.3e} exceeds tolerance {tol:.1e}")
    logger.debug(f"Linear solve residual {relative:.3e}")
    return x


@dataclass(eq=False)
class StepResult:
    """Outcome of the backward Euler EMAC step"""
    u_tilde: np.ndarray
    P: np.ndarray
    t: float
    iterations: int
    residuals: List[float] = field(default_factory=list)
    load: Optional[np.ndarray] = None
    homogeneous: bool = True


class SolverService:
    """
    Advances a velocity history on one Taylor-Hood space. Matrices that do
    not depend on the iterate are assembled once.
    """

    def __init__(
        self,
        space: TaylorHoodSpace,
        config: SolverConfig,
        bc: Dict[str, Callable],
        forcing: Optional[Callable] = None,
        assembler: Optional[AssemblyService] = None,
        reference_velocity: Optional[Callable] = None,
        frozen_reference: bool = False,
        drag_marker: Optional[str] = None,
    ):
        self.space = space
        self.config = config
        self.bc = dict(bc)
        self.forcing = forcing
        self.assembler = assembler or AssemblyService(space)
        self.diagnostics = DiagnosticsService(self.assembler)
        self.reference_velocity = reference_velocity
        self.frozen_reference = frozen_reference
        self.drag_marker = drag_marker

        for marker in self.bc:
            space.mesh.edges_for(marker)
        if drag_marker is not None and not space.mesh.has_marker(drag_marker):
            raise ConfigurationException(
                f"Mesh has no marker '{drag_marker}' for drag/lift; markers are {space.mesh.marker_names}"
            )

        dt, nu = config.dt, config.nu
        self.mass = self.assembler.assemble_mass()
        self.divergence = self.assembler.assemble_divergence()
        self.mean = self.assembler.assemble_pressure_mean()
        self.base = (self.mass / dt + self.assembler.assemble_stiffness(nu)).tocsr()
        self.balance = EnergyBalance(self.diagnostics, nu, dt, forcing)
        self.balance_valid = True

    def uses_filter(self, history: History) -> bool:
        """The filter runs for n >= 1; the step out of t^0 is plain backward Euler unless filter_first_step"""
        return self.config.filter_enabled and (history.step > 0 or self.config.filter_first_step)

    def residual(
        self, u: np.ndarray, P: np.ndarray, lam: float, u_prev: np.ndarray, load: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, float]:
        """Momentum, continuity and mean residuals of the nonlinear step"""
        r_u = (
            self.base @ u
            - (self.mass @ u_prev) / self.config.dt
            + self.assembler.assemble_emac_residual(u)
            - self.divergence.T @ P
            - load
        )
        r_p = -(self.divergence @ u) + self.mean * lam
        r_mean = float(self.mean @ P)
        return r_u, r_p, r_mean

    def be_emac_step(self, history: History) -> StepResult:
        """Solve for (u~^{n+1}, P^{n+1}) from u^n with Newton's method"""
        config = self.config
        history.check(self.space)
        t_next = history.t + config.dt
        if t_next > config.T + 1e-9 * config.dt:
            raise UsageException(f"Step to t={t_next:.6g} would pass the end time T={config.T:.6g}")

        dirichlet = collect_dirichlet(self.space, self.bc, t_next)
        correction_bc = dirichlet.homogeneous()
        fixed = np.zeros(self.space.n_velocity, dtype=bool)
        fixed[dirichlet.dofs] = True
        load = self.assembler.assemble_forcing(self.forcing, t_next)

        u = dirichlet.apply(history.u_prev)
        P = np.zeros(self.space.n_pressure) if history.pressure is None else np.array(history.pressure)
        lam = 0.0

        residuals: List[float] = []
        tolerance = config.newton_abs_tol
        for iteration in range(config.newton_max_iter + 1):
            r_u, r_p, r_mean = self.residual(u, P, lam, history.u_prev, load)
            r_u[fixed] = 0.0
            norm = float(np.sqrt(r_u @ r_u + r_p @ r_p + r_mean ** 2))
            residuals.append(norm)
            if iteration == 0:
                tolerance = max(config.newton_abs_tol, config.newton_rel_tol * norm)
            logger.debug(f"t={t_next:.6g} Newton {iteration}: residual {norm:.3e}")
            if not np.isfinite(norm):
                raise ConvergenceException(f"Newton diverged at t={t_next:.6g}", norm, iteration)
            if norm <= tolerance:
                return StepResult(
                    u_tilde=u,
                    P=P,
                    t=t_next,
                    iterations=iteration,
                    residuals=residuals,
                    load=load,
                    homogeneous=not np.any(dirichlet.values),
                )
            if iteration == config.newton_max_iter:
                break

            jacobian = self.base + self.assembler.assemble_emac_jacobian(u)
            system = SaddleSystem(A=jacobian, B=self.divergence, m=self.mean, rhs_u=-r_u, rhs_p=-r_p, rhs_mean=-r_mean)
            constrained = apply_constraints(system, correction_bc)
            du, dP, dlam = constrained.expand(linear_solve(constrained, config.linear_solver_tol))
            u = u + du
            P = P + dP
            lam += dlam

        raise ConvergenceException(
            f"Newton did not converge at t={t_next:.6g} after {config.newton_max_iter} iterations",
            residuals[-1],
            config.newton_max_iter,
        )

    def advance(self, history: History) -> Tuple[State, History, DiagnosticsRecord]:
        """One full step: backward Euler EMAC, then (when enabled) the filter"""
        step = self.be_emac_step(history)
        filtered = self.uses_filter(history)
        u_next = apply_time_filter(step.u_tilde, history) if filtered else step.u_tilde
        state = State(u=u_next, P=step.P, t=step.t)

        numerical, physical = self.diagnostics.dissipation_split(
            history, u_next, self.config.nu, self.config.dt, filtered
        )
        drag = lift = None
        if self.drag_marker is not None:
            drag, lift = self.diagnostics.drag_lift(
                State(u=step.u_tilde, P=step.P, t=step.t),
                self.config.nu,
                self.drag_marker,
                u_prev=history.u_prev,
                dt=self.config.dt,
            )

        self.balance_valid = self.balance_valid and step.homogeneous
        next_history = self.balance.add(history, u_next, filtered, load=step.load, pressure=step.P)
        balance = self.balance.residual(next_history) if self.balance_valid else None

        record = self._record(
            state,
            u_prev=history.u_prev,
            num_diss=numerical,
            phys_diss=physical,
            drag=drag,
            lift=lift,
            newton_iters=step.iterations,
            balance_residual=balance,
        )
        logger.debug(f"Step {next_history.step} t={step.t:.6g}: {step.iterations} Newton iterations")
        return state, next_history, record

    def initial_record(self, history: History) -> DiagnosticsRecord:
        state = State(u=history.u_prev, P=np.zeros(self.space.n_pressure), t=history.t)
        return self._record(state, u_prev=history.u_prev2, balance_residual=0.0)

    def _record(self, state: State, u_prev: np.ndarray, **values) -> DiagnosticsRecord:
        d = self.diagnostics
        m1, m2 = d.momentum(state.u)
        l2_error = None
        if self.reference_velocity is not None:
            t_ref = 0.0 if self.frozen_reference else state.t
            l2_error = float(np.sqrt(self.assembler.l2_error_sq(state.u, self.reference_velocity, t_ref)))
        return DiagnosticsRecord(
            t=state.t,
            energy=d.kinetic_energy(state.u),
            M1=m1,
            M2=m2,
            AM=d.angular_momentum(state.u),
            g_norm_sq=max(d.g_norm_sq_pair(state.u, u_prev), 0.0),
            l2_error=l2_error,
            **values,
        )

