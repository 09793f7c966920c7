"""
Triangulation with named boundary markers
"""
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from scipy.spatial import cKDTree

from emacflow.utils.exceptions import ConfigurationException, MeshValidationException

ALL_MARKER = "all"


def triangle_signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Signed area of each triangle, positive for counter-clockwise orientation"""
    p0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - p0
    e2 = vertices[triangles[:, 2]] - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def edge_codes(a: np.ndarray, b: np.ndarray, n_vertices: int) -> np.ndarray:
    """Orientation-free integer key of the edge (a, b)"""
    lo = np.minimum(a, b).astype(np.int64)
    hi = np.maximum(a, b).astype(np.int64)
    return lo * n_vertices + hi


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Conforming triangulation.

    ``boundary_edges[k]`` is a vertex pair carrying the physical tag
    ``boundary_tags[k]``; ``markers`` names every tag. The reserved name
    ``"all"`` selects the whole boundary and is never a tag of its own.
    """
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    markers: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 2)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        boundary_edges = np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        boundary_tags = np.ascontiguousarray(self.boundary_tags, dtype=np.int64).reshape(-1)
        for array in (vertices, triangles, boundary_edges, boundary_tags):
            array.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        object.__setattr__(self, "boundary_edges", boundary_edges)
        object.__setattr__(self, "boundary_tags", boundary_tags)
        object.__setattr__(self, "markers", {int(k): str(v) for k, v in self.markers.items()})
        self._validate()

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def marker_names(self) -> List[str]:
        return sorted(set(self.markers.values()))

    @property
    def diameter(self) -> float:
        extent = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.hypot(extent[0], extent[1]))

    def signed_areas(self) -> np.ndarray:
        return triangle_signed_areas(self.vertices, self.triangles)

    def area(self) -> float:
        return float(self.signed_areas().sum())

    def has_marker(self, name: str) -> bool:
        return name == ALL_MARKER or name in self.markers.values()

    def edges_for(self, name: str) -> np.ndarray:
        """Boundary edges (vertex pairs) carrying the marker ``name``"""
        if name == ALL_MARKER:
            return self.boundary_edges
        tags = [tag for tag, marker in self.markers.items() if marker == name]
        if not tags:
            raise ConfigurationException(
                f"Marker '{name}' not found; mesh has {self.marker_names}"
            )
        return self.boundary_edges[np.isin(self.boundary_tags, tags)]

    def _validate(self) -> None:
        nv = self.n_vertices
        if nv < 3 or self.n_triangles < 1:
            raise MeshValidationException("Mesh needs at least one triangle")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshValidationException("Vertex coordinates must be finite")
        if self.triangles.min() < 0 or self.triangles.max() >= nv:
            raise MeshValidationException("Triangle refers to a missing vertex")
        if np.unique(self.triangles).size != nv:
            raise MeshValidationException("Every vertex must belong to a triangle")

        areas = self.signed_areas()
        bad = np.flatnonzero(areas <= 0.0)
        if bad.size:
            raise MeshValidationException(
                f"Triangle {int(bad[0])} has non-positive signed area {areas[bad[0]]:.3e}"
            )

        tol = 1e-12 * self.diameter
        close = cKDTree(self.vertices).query_pairs(r=tol)
        if close:
            i, j = sorted(close)[0]
            raise MeshValidationException(f"Vertices {i} and {j} coincide")

        if self.boundary_edges.shape[0] != self.boundary_tags.shape[0]:
            raise MeshValidationException("Every boundary edge needs exactly one tag")
        unknown = set(np.unique(self.boundary_tags).tolist()) - set(self.markers)
        if unknown:
            raise MeshValidationException(f"Boundary tags {sorted(unknown)} have no marker name")
        if ALL_MARKER in self.markers.values():
            raise MeshValidationException(f"'{ALL_MARKER}' is reserved for the whole boundary")

        tri = self.triangles
        all_codes = edge_codes(
            tri[:, [0, 1, 2]].ravel(), tri[:, [1, 2, 0]].ravel(), nv
        )
        codes, counts = np.unique(all_codes, return_counts=True)
        if np.any(counts > 2):
            raise MeshValidationException("An edge is shared by more than two triangles")
        bcodes = edge_codes(self.boundary_edges[:, 0], self.boundary_edges[:, 1], nv)
        if np.unique(bcodes).size != bcodes.size:
            raise MeshValidationException("A boundary edge is listed twice")
        pos = np.searchsorted(codes, bcodes)
        pos = np.minimum(pos, codes.size - 1)
        found = codes[pos] == bcodes
        if not np.all(found) or np.any(counts[pos] != 1):
            k = int(np.flatnonzero(~found | (counts[pos] != 1))[0])
            a, b = self.boundary_edges[k]
            raise MeshValidationException(
                f"Boundary edge ({a}, {b}) does not belong to exactly one triangle"
            )

        untagged = np.setdiff1d(codes[counts == 1], bcodes)
        if untagged.size:
            a, b = divmod(int(untagged[0]), nv)
            raise MeshValidationException(f"Boundary edge ({a}, {b}) has no marker")
