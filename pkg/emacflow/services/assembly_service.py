"""
Assembly of the discrete operators on a Taylor-Hood space: mass, viscous
stiffness, divergence, pressure mean, forcing, the EMAC trilinear form with
its residual and Newton Jacobian, and Dirichlet/mean-zero constraints.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from emacflow.config import get_settings
from emacflow.models.space import TaylorHoodSpace
from emacflow.services.space_service import (
    BARY_GRADIENTS,
    p1_values,
    p2_gradients,
    p2_values,
    quadrature_rule,
)
from emacflow.utils.exceptions import ConstraintConflictException, ParameterException
from emacflow.utils.helpers import evaluate_vector

logger = logging.getLogger(__name__)

VectorField = Callable[[np.ndarray, np.ndarray, float], Tuple[np.ndarray, np.ndarray]]


class AssemblyService:
    """
    Vectorized element assembly over all triangles at once.

    Quadrature data is computed once per space: ``weights`` (Nt, nq) already
    include the Jacobian, ``grad`` (Nt, nq, 6, 2) holds physical P2 gradients.
    Scalar operators are lifted to the interleaved velocity layout.
    """

    def __init__(self, space: TaylorHoodSpace, degree: Optional[int] = None):
        self.space = space
        self.rule = quadrature_rule(degree or get_settings().QUADRATURE_DEGREE)
        bary = self.rule.points
        mesh = space.mesh

        self.phi = p2_values(bary)
        self.psi = p1_values(bary)
        self.grad = np.einsum("tij,qaj->tqai", space.inv_jacobian_t, p2_gradients(bary))
        self.psi_grad = np.einsum("tij,aj->tai", space.inv_jacobian_t, BARY_GRADIENTS)
        self.weights = np.outer(space.det_jacobian, self.rule.weights)
        self.points = np.einsum("qk,tkd->tqd", bary, mesh.vertices[mesh.triangles])
        self.vdofs = space.velocity_dofs
        self.pdofs = space.pressure_dofs

        self._mass: Optional[sp.csr_matrix] = None
        self._stiffness: Optional[sp.csr_matrix] = None
        self._divergence: Optional[sp.csr_matrix] = None
        self._mean: Optional[np.ndarray] = None

    # -- scatter helpers -------------------------------------------------

    def _vector_block(self, local: np.ndarray) -> sp.csr_matrix:
        """Lift scalar element matrices (Nt, 6, 6) to both velocity components"""
        nt = local.shape[0]
        shape = (nt, 6, 6, 2)
        rows = np.broadcast_to(self.vdofs[:, :, None, :], shape)
        cols = np.broadcast_to(self.vdofs[:, None, :, :], shape)
        vals = np.broadcast_to(local[..., None], shape)
        n = self.space.n_velocity
        return _to_csr(rows, cols, vals, (n, n))

    def _scatter_velocity(self, local: np.ndarray) -> np.ndarray:
        """Sum element vectors (Nt, 6, 2) into a global velocity vector"""
        return np.bincount(
            self.vdofs.ravel(), weights=local.ravel(), minlength=self.space.n_velocity
        )

    # -- fields at quadrature points ---------------------------------------

    def values(self, u: np.ndarray) -> np.ndarray:
        """Velocity at quadrature points, (Nt, nq, 2)"""
        return np.einsum("qa,tac->tqc", self.phi, u[self.vdofs])

    def gradients(self, u: np.ndarray) -> np.ndarray:
        """Velocity gradient G[t, q, i, j] = d_j u_i at quadrature points"""
        return np.einsum("tqaj,tai->tqij", self.grad, u[self.vdofs])

    def pressure_values(self, P: np.ndarray) -> np.ndarray:
        return np.einsum("qi,ti->tq", self.psi, P[self.pdofs])

    def integrate(self, integrand: np.ndarray) -> float:
        return float(np.sum(self.weights * integrand))

    def evaluate_at_points(self, f: VectorField, t: float) -> np.ndarray:
        """f at the quadrature points, (Nt, nq, 2)"""
        pts = self.points.reshape(-1, 2)
        values = evaluate_vector(f, pts[:, 0], pts[:, 1], t, what="vector field")
        return values.T.reshape(self.points.shape)

    # -- linear operators --------------------------------------------------

    def assemble_mass(self) -> sp.csr_matrix:
        if self._mass is None:
            local = np.einsum("tq,qa,qb->tab", self.weights, self.phi, self.phi)
            self._mass = self._vector_block(local)
        return self._mass

    def assemble_stiffness(self, nu: float = 1.0) -> sp.csr_matrix:
        """Viscous stiffness nu * (grad u, grad v)"""
        if nu < 0:
            raise ParameterException(f"Viscosity must be non-negative, got {nu}")
        if self._stiffness is None:
            local = np.einsum("tq,tqai,tqbi->tab", self.weights, self.grad, self.grad)
            self._stiffness = self._vector_block(local)
        return nu * self._stiffness

    def assemble_divergence(self) -> sp.csr_matrix:
        """B with (B u)_i = (q_i, div u)"""
        if self._divergence is None:
            local = np.einsum("tq,qi,tqac->tiac", self.weights, self.psi, self.grad)
            nt = local.shape[0]
            shape = (nt, 3, 6, 2)
            rows = np.broadcast_to(self.pdofs[:, :, None, None], shape)
            cols = np.broadcast_to(self.vdofs[:, None, :, :], shape)
            self._divergence = _to_csr(
                rows, cols, local, (self.space.n_pressure, self.space.n_velocity)
            )
        return self._divergence

    def assemble_pressure_mean(self) -> np.ndarray:
        """m_i = integral of the pressure basis q_i"""
        if self._mean is None:
            local = np.einsum("tq,qi->ti", self.weights, self.psi)
            self._mean = np.bincount(
                self.pdofs.ravel(), weights=local.ravel(), minlength=self.space.n_pressure
            )
        return self._mean

    def assemble_forcing(self, f: Optional[VectorField], t: float) -> np.ndarray:
        """Load vector (f(t), v)"""
        if f is None:
            return np.zeros(self.space.n_velocity)
        fq = self.evaluate_at_points(f, t)
        local = np.einsum("tq,qb,tqc->tbc", self.weights, self.phi, fq)
        return self._scatter_velocity(local)

    # -- trilinear forms ---------------------------------------------------

    def emac_trilinear(self, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
        """c(a, b, c) = 2 (D(a) b, c) + ((div a) b, c)"""
        ga = self.gradients(a)
        sym = ga + np.swapaxes(ga, -1, -2)
        div = np.trace(ga, axis1=-2, axis2=-1)
        bq, cq = self.values(b), self.values(c)
        integrand = np.einsum("tqij,tqj,tqi->tq", sym, bq, cq) + div * np.einsum("tqi,tqi->tq", bq, cq)
        return self.integrate(integrand)

    def convective_trilinear(self, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
        """((a . grad) b, c)"""
        integrand = np.einsum("tqj,tqij,tqi->tq", self.values(a), self.gradients(b), self.values(c))
        return self.integrate(integrand)

    def divergence_trilinear(self, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
        """((div a) b, c)"""
        div = np.trace(self.gradients(a), axis1=-2, axis2=-1)
        return self.integrate(div * np.einsum("tqi,tqi->tq", self.values(b), self.values(c)))

    def assemble_emac_residual(self, u: np.ndarray) -> np.ndarray:
        """r_i = c(u, u, phi_i)"""
        uq = self.values(u)
        gu = self.gradients(u)
        div = np.trace(gu, axis1=-2, axis2=-1)
        # N_c = (d_j u_c + d_c u_j) u_j + (div u) u_c
        nonlinear = np.einsum("tqcj,tqj->tqc", gu + np.swapaxes(gu, -1, -2), uq) + div[..., None] * uq
        local = np.einsum("tq,qb,tqc->tbc", self.weights, self.phi, nonlinear)
        return self._scatter_velocity(local)

    def assemble_emac_jacobian(self, u: np.ndarray) -> sp.csr_matrix:
        """Exact derivative of the residual: J delta = c(delta, u, .) + c(u, delta, .)"""
        w, phi, grad = self.weights, self.phi, self.grad
        uq = self.values(u)
        gu = self.gradients(u)
        div = np.trace(gu, axis1=-2, axis2=-1)
        sym = gu + np.swapaxes(gu, -1, -2)

        advect = np.einsum("tqj,tqaj->tqa", uq, grad) + div[..., None] * phi[None]
        diagonal = np.einsum("tq,qb,tqa->tba", w, phi, advect, optimize=True)
        local = (
            np.einsum("tq,qb,tqd,tqac->tbcad", w, phi, uq, grad, optimize=True)
            + np.einsum("tq,qb,tqc,tqad->tbcad", w, phi, uq, grad, optimize=True)
            + np.einsum("tq,qb,tqcd,qa->tbcad", w, phi, sym, phi, optimize=True)
        )
        for c in range(2):
            local[:, :, c, :, c] += diagonal

        nt = local.shape[0]
        shape = (nt, 6, 2, 6, 2)
        rows = np.broadcast_to(self.vdofs[:, :, :, None, None], shape)
        cols = np.broadcast_to(self.vdofs[:, None, None, :, :], shape)
        n = self.space.n_velocity
        return _to_csr(rows, cols, local, (n, n))

    # -- functionals -------------------------------------------------------

    def kinematic_pressure_work(self, P: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
        """(P + |u|^2 / 2, div v)"""
        uq = self.values(u)
        p = self.pressure_values(P) + 0.5 * np.einsum("tqi,tqi->tq", uq, uq)
        div_v = np.trace(self.gradients(v), axis1=-2, axis2=-1)
        return self.integrate(p * div_v)

    def l2_error_sq(self, u: np.ndarray, exact: VectorField, t: float) -> float:
        diff = self.values(u) - self.evaluate_at_points(exact, t)
        return self.integrate(np.einsum("tqi,tqi->tq", diff, diff))

    def h1_error_sq(self, u: np.ndarray, exact_gradient: Callable, t: float) -> float:
        """|| grad(u_exact) - grad(u_h) ||^2 with the analytic gradient

        ``exact_gradient(x, y, t)`` returns ((du1/dx, du1/dy), (du2/dx, du2/dy)).
        """
        pts = self.points.reshape(-1, 2)
        rows = exact_gradient(pts[:, 0], pts[:, 1], t)
        g = np.empty(self.points.shape[:2] + (2, 2))
        for i in range(2):
            for j in range(2):
                g[..., i, j] = np.broadcast_to(np.asarray(rows[i][j], dtype=float), pts[:, 0].shape).reshape(
                    self.points.shape[:2]
                )
        diff = g - self.gradients(u)
        return self.integrate(np.einsum("tqij,tqij->tq", diff, diff))

    def field_l2_sq(self, f: VectorField, t: float) -> float:
        """|| f(t) ||^2 by quadrature"""
        fq = self.evaluate_at_points(f, t)
        return self.integrate(np.einsum("tqi,tqi->tq", fq, fq))


def _to_csr(rows: np.ndarray, cols: np.ndarray, vals: np.ndarray, shape) -> sp.csr_matrix:
    matrix = sp.coo_matrix((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=shape).tocsr()
    matrix.sum_duplicates()
    return matrix


# -- constraints -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DirichletData:
    """Constrained velocity DOFs (sorted) and their prescribed values"""
    dofs: np.ndarray
    values: np.ndarray

    def homogeneous(self) -> "DirichletData":
        return DirichletData(dofs=self.dofs, values=np.zeros_like(self.values))

    def apply(self, u: np.ndarray) -> np.ndarray:
        out = np.array(u, dtype=float)
        out[self.dofs] = self.values
        return out


def collect_dirichlet(space: TaylorHoodSpace, bc: Dict[str, VectorField], t: float) -> DirichletData:
    """
    Evaluate boundary data on every P2 node of each marker. A node reached
    from several markers must receive the same value from all of them.
    """
    if not bc:
        empty = np.zeros(0, dtype=np.int64)
        return DirichletData(dofs=empty, values=np.zeros(0))
    nodes, values, owners = [], [], []
    names = list(bc)
    for k, name in enumerate(names):
        marker_nodes = space.boundary_nodes(name)
        x, y = space.node_coords[marker_nodes].T
        nodes.append(marker_nodes)
        values.append(evaluate_vector(bc[name], x, y, t, what=f"boundary data on '{name}'").T)
        owners.append(np.full(marker_nodes.size, k))
    nodes = np.concatenate(nodes)
    values = np.vstack(values)
    owners = np.concatenate(owners)

    order = np.lexsort((owners, nodes))
    nodes, values, owners = nodes[order], values[order], owners[order]
    unique_nodes, first, inverse = np.unique(nodes, return_index=True, return_inverse=True)
    reference = values[first]
    mismatch = np.abs(values - reference[inverse]) > 1e-10 * (1.0 + np.abs(reference[inverse]))
    bad = np.flatnonzero(mismatch.any(axis=1))
    if bad.size:
        k = int(bad[0])
        node = int(nodes[k])
        x, y = space.node_coords[node]
        raise ConstraintConflictException(
            f"Markers '{names[owners[first[inverse[k]]]]}' and '{names[owners[k]]}' prescribe "
            f"different velocities at ({x:.6g}, {y:.6g})"
        )
    dofs = (2 * unique_nodes[:, None] + np.arange(2)).ravel()
    return DirichletData(dofs=dofs, values=reference.ravel())


@dataclass(eq=False)
class SaddleSystem:
    """
    [[A, -B^T, 0], [-B, 0, m], [0, m^T, 0]] [u, P, lambda] = [rhs_u, rhs_p, rhs_mean]
    """
    A: sp.spmatrix
    B: sp.spmatrix
    m: np.ndarray
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    rhs_mean: float = 0.0

    @property
    def n_velocity(self) -> int:
        return self.A.shape[0]

    @property
    def n_pressure(self) -> int:
        return self.B.shape[0]


@dataclass(eq=False)
class ConstrainedSystem:
    """Reduced square system over free velocity DOFs, all pressures and the multiplier"""
    matrix: sp.csc_matrix
    rhs: np.ndarray
    free: np.ndarray
    dirichlet: DirichletData
    n_velocity: int
    n_pressure: int

    def expand(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        nf = self.free.size
        u = np.zeros(self.n_velocity)
        u[self.free] = x[:nf]
        u[self.dirichlet.dofs] = self.dirichlet.values
        P = np.array(x[nf:nf + self.n_pressure])
        return u, P, float(x[-1])


def apply_constraints(system: SaddleSystem, dirichlet: DirichletData) -> ConstrainedSystem:
    """
    Eliminate Dirichlet DOFs symmetrically (rows and columns) with their
    values lifted to the right-hand side, and border the system with the
    mean-zero pressure row.
    """
    n = system.n_velocity
    fixed = dirichlet.dofs
    free = np.setdiff1d(np.arange(n), fixed, assume_unique=True)
    g = dirichlet.values

    A = sp.csr_matrix(system.A)
    B = sp.csc_matrix(system.B)
    A_free = A[free]
    A_ff = A_free[:, free]
    B_f = B[:, free]
    m = np.asarray(system.m, dtype=float)

    rhs_u = system.rhs_u[free] - A_free[:, fixed] @ g
    rhs_p = system.rhs_p + B[:, fixed] @ g
    matrix = sp.bmat(
        [
            [A_ff, -B_f.T, None],
            [-B_f, None, sp.csc_matrix(m[:, None])],
            [None, sp.csc_matrix(m[None, :]), None],
        ],
        format="csc",
    )
    rhs = np.concatenate([rhs_u, rhs_p, [system.rhs_mean]])
    return ConstrainedSystem(
        matrix=matrix,
        rhs=rhs,
        free=free,
        dirichlet=dirichlet,
        n_velocity=n,
        n_pressure=system.n_pressure,
    )
