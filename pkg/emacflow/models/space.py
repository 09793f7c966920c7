"""
Quadrature rules and the Taylor-Hood P2/P1 space
"""
from dataclasses import dataclass

import numpy as np

from emacflow.models.mesh import Mesh, edge_codes


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Rule on the reference triangle (0,0), (1,0), (0,1); weights sum to 1/2"""
    degree: int
    points: np.ndarray   # barycentric (nq, 3)
    weights: np.ndarray  # (nq,)

    @property
    def n_points(self) -> int:
        return self.weights.shape[0]

    def reference_points(self) -> np.ndarray:
        """Cartesian reference coordinates (xi, eta) = (l1, l2)"""
        return self.points[:, 1:3]


@dataclass(frozen=True, eq=False)
class TaylorHoodSpace:
    """
    P2 vector velocity / P1 scalar pressure on a Mesh.

    Scalar P2 nodes are the vertices followed by the edge midpoints
    (``n_vertices + edge index``). Local node order per triangle is
    v0, v1, v2, m01, m12, m20. Velocity is interleaved: node k owns
    DOFs 2k (x) and 2k+1 (y). Pressure DOFs are the vertices.
    """
    mesh: Mesh
    edges: np.ndarray          # (Ne, 2), sorted vertex pairs in sorted key order
    cell_edges: np.ndarray     # (Nt, 3) global edge index of local edges 01, 12, 20
    scalar_dofs: np.ndarray    # (Nt, 6)
    velocity_dofs: np.ndarray  # (Nt, 6, 2)
    pressure_dofs: np.ndarray  # (Nt, 3)
    node_coords: np.ndarray    # (Nv + Ne, 2)
    neighbors: np.ndarray      # (Nt, 3) triangle across the edge opposite local vertex i, -1 on the boundary
    det_jacobian: np.ndarray   # (Nt,) twice the triangle area
    inv_jacobian_t: np.ndarray # (Nt, 2, 2) maps reference gradients to physical ones

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_velocity(self) -> int:
        return 2 * self.n_nodes

    @property
    def n_pressure(self) -> int:
        return self.mesh.n_vertices

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def edge_index(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Global edge index of vertex pairs (a, b)"""
        codes = edge_codes(self.edges[:, 0], self.edges[:, 1], self.mesh.n_vertices)
        return np.searchsorted(codes, edge_codes(np.asarray(a), np.asarray(b), self.mesh.n_vertices))

    def boundary_nodes(self, marker: str) -> np.ndarray:
        """Sorted scalar P2 nodes lying on the boundary edges of ``marker``"""
        edges = self.mesh.edges_for(marker)
        if edges.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        mids = self.mesh.n_vertices + self.edge_index(edges[:, 0], edges[:, 1])
        return np.unique(np.concatenate([edges.ravel(), mids]))
