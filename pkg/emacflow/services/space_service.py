"""
Taylor-Hood spaces: quadrature, reference bases, DOF maps, interpolation
and point evaluation
"""
import logging
from functools import lru_cache
from typing import Callable, Dict, Tuple, Union

import numpy as np

from emacflow.models.mesh import Mesh, edge_codes
from emacflow.models.space import QuadratureRule, TaylorHoodSpace
from emacflow.utils.exceptions import LocationException, ParameterException, UsageException
from emacflow.utils.helpers import evaluate_scalar, evaluate_vector

logger = logging.getLogger(__name__)

# reference gradients of the barycentric coordinates l0 = 1-x-y, l1 = x, l2 = y
BARY_GRADIENTS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

# local P2 edge nodes 3, 4, 5 sit on vertex pairs (0,1), (1,2), (2,0)
LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


def _orbit3(a: float, w: float):
    b = 0.5 * (1.0 - a)
    return [(a, b, b), (b, a, b), (b, b, a)], [w] * 3


def _orbit6(a: float, b: float, w: float):
    c = 1.0 - a - b
    points = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return points, [w] * 6


def _rule(degree: int, *orbits) -> QuadratureRule:
    points, weights = [], []
    for p, w in orbits:
        points += p
        weights += w
    return QuadratureRule(
        degree=degree,
        points=np.array(points, dtype=float),
        weights=0.5 * np.array(weights, dtype=float),
    )


@lru_cache(maxsize=None)
def quadrature_rule(degree: int) -> QuadratureRule:
    """Symmetric rule on the reference triangle exact up to ``degree`` (1..6)"""
    if degree not in (1, 2, 3, 4, 5, 6):
        raise ParameterException(f"Unsupported quadrature degree {degree}; choose 1..6")
    if degree == 1:
        return _rule(1, ([(1 / 3, 1 / 3, 1 / 3)], [1.0]))
    if degree == 2:
        return _rule(2, _orbit3(2 / 3, 1 / 3))
    if degree in (3, 4):
        return _rule(
            degree,
            _orbit3(0.108103018168070, 0.223381589678011),
            _orbit3(0.816847572980459, 0.109951743655322),
        )
    if degree == 5:
        s15 = np.sqrt(15.0)
        a1 = (6.0 - s15) / 21.0
        a2 = (6.0 + s15) / 21.0
        return _rule(
            5,
            ([(1 / 3, 1 / 3, 1 / 3)], [0.225]),
            _orbit3(1.0 - 2.0 * a1, (155.0 - s15) / 1200.0),
            _orbit3(1.0 - 2.0 * a2, (155.0 + s15) / 1200.0),
        )
    return _rule(
        6,
        _orbit3(0.501426509658179, 0.116786275726379),
        _orbit3(0.873821971016996, 0.050844906370207),
        _orbit6(0.053145049844817, 0.310352451033784, 0.082851075618374),
    )


def p2_values(bary: np.ndarray) -> np.ndarray:
    """P2 basis at barycentric points, shape (nq, 6)"""
    l0, l1, l2 = np.atleast_2d(bary).T
    return np.column_stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ])


def p2_gradients(bary: np.ndarray) -> np.ndarray:
    """Reference gradients of the P2 basis, shape (nq, 6, 2)"""
    lam = np.atleast_2d(bary)
    g = BARY_GRADIENTS
    grads = np.empty((lam.shape[0], 6, 2))
    for i in range(3):
        grads[:, i] = (4 * lam[:, i] - 1)[:, None] * g[i]
    for k, (i, j) in enumerate(LOCAL_EDGES):
        grads[:, 3 + k] = 4 * (lam[:, i][:, None] * g[j] + lam[:, j][:, None] * g[i])
    return grads


def p1_values(bary: np.ndarray) -> np.ndarray:
    return np.atleast_2d(bary).copy()


def element_geometry(mesh: Mesh) -> Tuple[np.ndarray, np.ndarray]:
    """Jacobian determinants (Nt,) and inverse-transposed Jacobians (Nt, 2, 2)"""
    v = mesh.vertices[mesh.triangles]
    a = v[:, 1, 0] - v[:, 0, 0]
    b = v[:, 2, 0] - v[:, 0, 0]
    c = v[:, 1, 1] - v[:, 0, 1]
    d = v[:, 2, 1] - v[:, 0, 1]
    det = a * d - b * c
    inv_t = np.empty((mesh.n_triangles, 2, 2))
    inv_t[:, 0, 0] = d / det
    inv_t[:, 0, 1] = -c / det
    inv_t[:, 1, 0] = -b / det
    inv_t[:, 1, 1] = a / det
    return det, inv_t


def build_taylor_hood(mesh: Mesh) -> TaylorHoodSpace:
    """P2/P1 DOF maps: vertices first, then edges in sorted edge-key order"""
    nv, nt = mesh.n_vertices, mesh.n_triangles
    tri = mesh.triangles
    first = tri[:, [i for i, _ in LOCAL_EDGES]]
    second = tri[:, [j for _, j in LOCAL_EDGES]]
    codes = edge_codes(first, second, nv)
    unique_codes, inverse = np.unique(codes.ravel(), return_inverse=True)
    cell_edges = inverse.reshape(nt, 3)
    edges = np.column_stack([unique_codes // nv, unique_codes % nv])

    midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    node_coords = np.vstack([mesh.vertices, midpoints])
    scalar_dofs = np.hstack([tri, nv + cell_edges])
    velocity_dofs = 2 * scalar_dofs[:, :, None] + np.arange(2)

    # pair the two triangles sharing each interior edge
    flat = cell_edges.ravel()
    order = np.argsort(flat, kind="stable")
    shared = flat[order][1:] == flat[order][:-1]
    left, right = order[:-1][shared], order[1:][shared]
    across = np.full(3 * nt, -1, dtype=np.int64)
    across[left] = right // 3
    across[right] = left // 3
    across = across.reshape(nt, 3)
    # edge opposite vertex i is local edge (i + 1) % 3
    neighbors = across[:, [1, 2, 0]]

    det, inv_t = element_geometry(mesh)
    for array in (edges, cell_edges, scalar_dofs, velocity_dofs, node_coords, neighbors, det, inv_t):
        array.setflags(write=False)
    space = TaylorHoodSpace(
        mesh=mesh,
        edges=edges,
        cell_edges=cell_edges,
        scalar_dofs=scalar_dofs,
        velocity_dofs=velocity_dofs,
        pressure_dofs=tri,
        node_coords=node_coords,
        neighbors=neighbors,
        det_jacobian=det,
        inv_jacobian_t=inv_t,
    )
    logger.debug(f"Taylor-Hood space: {space.n_velocity} velocity, {space.n_pressure} pressure DOFs")
    return space


def space_summary(space: TaylorHoodSpace) -> Dict[str, object]:
    """Counts reported by ``mesh-info``"""
    mesh = space.mesh
    return {
        "vertices": mesh.n_vertices,
        "triangles": mesh.n_triangles,
        "edges": space.n_edges,
        "boundary_edges": {name: int(mesh.edges_for(name).shape[0]) for name in mesh.marker_names},
        "area": mesh.area(),
        "n_velocity": space.n_velocity,
        "n_pressure": space.n_pressure,
        "total_dofs": space.n_velocity + space.n_pressure,
    }


def interpolate(f: Callable, t: float, space: TaylorHoodSpace, field: str = "velocity") -> np.ndarray:
    """
    Nodal interpolant of f(x, y, t): a vector field on the P2 nodes
    (interleaved) or a scalar field on the P1 vertices.
    """
    if field == "velocity":
        x, y = space.node_coords.T
        values = evaluate_vector(f, x, y, t, what="velocity")
        return np.ascontiguousarray(values.T).ravel()
    if field == "pressure":
        x, y = space.mesh.vertices.T
        return evaluate_scalar(f, x, y, t, what="pressure")
    raise ParameterException(f"Unknown field '{field}', expected 'velocity' or 'pressure'")


def _barycentric(space: TaylorHoodSpace, cells: np.ndarray, point: np.ndarray) -> np.ndarray:
    inv_t = space.inv_jacobian_t
    origin = space.mesh.vertices[space.mesh.triangles[cells, 0]]
    # reference coords = J^{-1} (x - x0) = (J^{-T})^T (x - x0)
    ref = np.einsum("tji,tj->ti", inv_t[cells], point - origin)
    return np.column_stack([1.0 - ref[:, 0] - ref[:, 1], ref[:, 0], ref[:, 1]])


def locate_point(space: TaylorHoodSpace, point, start: int = 0, tol: float = 1e-12) -> Tuple[int, np.ndarray]:
    """
    Triangle containing ``point`` and its barycentric coordinates. Walks
    across neighbours towards the point and falls back to a full search.
    """
    point = np.asarray(point, dtype=float).reshape(2)
    nt = space.mesh.n_triangles
    cell = int(start) if 0 <= start < nt else 0
    for _ in range(nt):
        lam = _barycentric(space, np.array([cell]), point)[0]
        if lam.min() >= -tol:
            return cell, lam
        nxt = int(space.neighbors[cell, int(np.argmin(lam))])
        if nxt < 0:
            break
        cell = nxt
    lam = _barycentric(space, np.arange(nt), point)
    worst = lam.min(axis=1)
    best = int(np.argmax(worst))
    if worst[best] < -tol:
        raise LocationException(f"Point ({point[0]:.6g}, {point[1]:.6g}) lies outside the mesh")
    return best, lam[best]


def evaluate_field(space: TaylorHoodSpace, coefficients: np.ndarray, point) -> Union[np.ndarray, float]:
    """Value of a velocity (P2 vector) or pressure (P1) field at ``point``"""
    coefficients = np.asarray(coefficients, dtype=float)
    cell, lam = locate_point(space, point)
    if coefficients.shape == (space.n_velocity,):
        local = coefficients[space.velocity_dofs[cell]]
        return p2_values(lam)[0] @ local
    if coefficients.shape == (space.n_pressure,):
        return float(lam @ coefficients[space.pressure_dofs[cell]])
    raise UsageException(
        f"Coefficient vector of length {coefficients.size} matches neither velocity "
        f"({space.n_velocity}) nor pressure ({space.n_pressure})"
    )
