"""
Mesh construction and Gmsh file input/output
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import meshio
import numpy as np

from emacflow.models.mesh import Mesh, triangle_signed_areas
from emacflow.utils.exceptions import ParameterException, ParseException

logger = logging.getLogger(__name__)

RECTANGLE_MARKERS = {1: "left", 2: "right", 3: "bottom", 4: "top"}

# Gmsh element type -> (meshio cell type, node count); points are read and ignored
SUPPORTED_ELEMENTS = {1: ("line", 2), 2: ("triangle", 3), 15: ("vertex", 1)}

PathLike = Union[str, Path]


def generate_rectangle(nx: int, ny: int, bounds: Sequence[float] = (0.0, 1.0, 0.0, 1.0)) -> Mesh:
    """
    Uniform nx-by-ny grid on [xmin, xmax] x [ymin, ymax], each cell split
    along its lower-left to upper-right diagonal.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ParameterException(f"Cell counts must be positive integers, got ({nx}, {ny})")
    if len(bounds) != 4:
        raise ParameterException("bounds must be [xmin, xmax, ymin, ymax]")
    xmin, xmax, ymin, ymax = (float(b) for b in bounds)
    if not np.all(np.isfinite([xmin, xmax, ymin, ymax])) or xmax <= xmin or ymax <= ymin:
        raise ParameterException(f"Invalid bounds {list(bounds)}")
    nx, ny = int(nx), int(ny)

    xs = np.linspace(xmin, xmax, nx + 1)
    ys = np.linspace(ymin, ymax, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([a, b, c])
    triangles[1::2] = np.column_stack([a, c, d])

    ix = np.arange(nx)
    jy = np.arange(ny)
    edges = [
        np.column_stack([vid(0, jy + 1), vid(0, jy)]),     # left
        np.column_stack([vid(nx, jy), vid(nx, jy + 1)]),   # right
        np.column_stack([vid(ix, 0), vid(ix + 1, 0)]),     # bottom
        np.column_stack([vid(ix + 1, ny), vid(ix, ny)]),   # top
    ]
    tags = [np.full(e.shape[0], tag) for tag, e in zip((1, 2, 3, 4), edges)]
    return Mesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=np.vstack(edges),
        boundary_tags=np.concatenate(tags),
        markers=dict(RECTANGLE_MARKERS),
    )


def tags_path_for(path: PathLike) -> Path:
    """Sidecar tag table next to a mesh file: ``mesh.msh`` -> ``mesh.tags.json``"""
    return Path(path).with_suffix(".tags.json")


def _check_layout(text: str) -> None:
    """
    Structural pass over the file text: section pairing, the format
    header, entry counts, element types and node references. Errors carry
    1-based line numbers; meshio parses the file afterwards.
    """
    lines = text.splitlines()
    seen = set()
    node_ids: set = set()
    k = 0
    while k < len(lines):
        line = lines[k].strip()
        k += 1
        if not line:
            continue
        if not line.startswith("$"):
            raise ParseException(f"unexpected content '{line}' outside a section", k)
        section = line[1:]
        end = f"$End{section}"
        close = next((i for i in range(k, len(lines)) if lines[i].strip() == end), None)
        if close is None:
            raise ParseException(f"unexpected end of file in ${section}; missing {end}", len(lines))
        body = [(i + 1, lines[i].strip()) for i in range(k, close) if lines[i].strip()]

        if section == "MeshFormat":
            header = body[0][1].split() if body else []
            if len(header) < 2 or header[0] != "2.2" or header[1] != "0":
                raise ParseException(f"unsupported mesh format '{' '.join(header)}', expected ASCII 2.2", k + 1)
        elif section in ("Nodes", "Elements"):
            entries = _counted_entries(section, body, close + 1)
            if section == "Nodes":
                node_ids = {entry.split()[0] for _, entry in entries}
            else:
                for number, entry in entries:
                    parts = entry.split()
                    etype = int(parts[1])
                    if etype not in SUPPORTED_ELEMENTS:
                        raise ParseException(f"unsupported element type {etype}", number)
                    nodes = parts[3 + int(parts[2]):]
                    expected = SUPPORTED_ELEMENTS[etype][1]
                    if len(nodes) != expected:
                        raise ParseException(f"element type {etype} needs {expected} nodes, got {len(nodes)}", number)
                    missing = [n for n in nodes if n not in node_ids]
                    if missing:
                        raise ParseException(f"element refers to undefined node {missing[0]}", number)
        seen.add(section)
        k = close + 1

    for section in ("MeshFormat", "Nodes", "Elements"):
        if section not in seen:
            raise ParseException(f"missing section ${section}", len(lines))


def _counted_entries(section: str, body: List[Tuple[int, str]], end_line: int) -> List[Tuple[int, str]]:
    if not body:
        raise ParseException(f"${section} has no entry count", end_line)
    number, count = body[0]
    try:
        declared = int(count)
    except ValueError:
        raise ParseException(f"expected entry count in ${section}, found '{count}'", number)
    entries = body[1:]
    if len(entries) != declared:
        noun = "nodes" if section == "Nodes" else "elements"
        raise ParseException(f"${section} declares {declared} {noun} but lists {len(entries)}", end_line)
    for entry_line, entry in entries:
        parts = entry.split()
        if len(parts) < (4 if section == "Nodes" else 3) or not all(_is_number(p, integer=section == "Elements") for p in parts):
            raise ParseException(f"malformed {section[:-1].lower()} line", entry_line)
    return entries


def _is_number(token: str, integer: bool = False) -> bool:
    try:
        int(token) if integer else float(token)
    except ValueError:
        return False
    return True


def _read_gmsh(path: Path):
    try:
        return meshio.read(path, file_format="gmsh")
    except meshio.ReadError as e:
        raise ParseException(f"{path.name}: {e}")
    except (ValueError, IndexError, KeyError, AssertionError, EOFError) as e:
        # meshio reports truncated or malformed sections with these
        raise ParseException(f"{path.name}: malformed mesh file ({type(e).__name__}: {e})")


def load_msh(path: PathLike, tags_path: Optional[PathLike] = None) -> Mesh:
    """
    Read an ASCII Gmsh 2.2 file with 2-node boundary lines and 3-node
    triangles.
    Marker names come from the sidecar tag table, then from
    ``$PhysicalNames``, then default to ``tag<N>``.
    """
    path = Path(path)
    _check_layout(path.read_text())
    raw = _read_gmsh(path)

    cells = raw.cells_dict
    if "triangle" not in cells or len(cells["triangle"]) == 0:
        raise ParseException(f"{path.name}: mesh contains no triangles")
    tri = np.asarray(cells["triangle"], dtype=np.int64).reshape(-1, 3)
    seg = np.asarray(cells.get("line", np.zeros((0, 2))), dtype=np.int64).reshape(-1, 2)
    coords = np.asarray(raw.points, dtype=float)[:, :2]

    physical = raw.cell_data_dict.get("gmsh:physical", {})
    if seg.shape[0] and "line" not in physical:
        raise ParseException(f"{path.name}: boundary lines carry no physical tag")
    tags = np.asarray(physical.get("line", np.zeros(0)), dtype=np.int64).reshape(-1)

    # drop geometry-only nodes, keep file order
    used = np.unique(tri)
    new_index = np.full(coords.shape[0], -1, dtype=np.int64)
    new_index[used] = np.arange(used.size)
    vertices = coords[used]
    tri = new_index[tri]
    seg = new_index[seg]
    if np.any(seg < 0):
        raise ParseException(f"{path.name}: boundary line uses a node that belongs to no triangle")

    areas = triangle_signed_areas(vertices, tri)
    flipped = areas < 0
    if np.any(flipped):
        logger.debug(f"Reorienting {int(flipped.sum())} clockwise triangles")
        tri[flipped] = tri[flipped][:, [0, 2, 1]]

    physical_names = {
        int(entry[0]): name for name, entry in raw.field_data.items() if len(entry) > 1 and int(entry[1]) == 1
    }
    markers = _marker_names(path, tags_path, physical_names, np.unique(tags))
    mesh = Mesh(vertices=vertices, triangles=tri, boundary_edges=seg, boundary_tags=tags, markers=markers)
    logger.info(
        f"Loaded {path.name}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, "
        f"markers {mesh.marker_names}"
    )
    return mesh


def _marker_names(path: Path, tags_path: Optional[PathLike], physical_names: Dict[int, str], tags: np.ndarray) -> Dict[int, str]:
    sidecar = Path(tags_path) if tags_path is not None else tags_path_for(path)
    if sidecar.exists():
        try:
            table = {int(k): str(v) for k, v in json.loads(sidecar.read_text()).items()}
        except (ValueError, AttributeError) as e:
            raise ParseException(f"invalid tag table {sidecar.name}: {e}")
    else:
        table = physical_names
    return {int(tag): table.get(int(tag), f"tag{int(tag)}") for tag in tags}


def write_msh(mesh: Mesh, path: PathLike) -> Path:
    """Write ``mesh`` as ASCII Gmsh 2.2 plus its sidecar tag table"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    points = np.column_stack([mesh.vertices, np.zeros(mesh.n_vertices)])
    tags = np.asarray(mesh.boundary_tags, dtype=np.int64)
    untagged = np.zeros(mesh.n_triangles, dtype=np.int64)
    out = meshio.Mesh(
        points=points,
        cells=[("line", np.asarray(mesh.boundary_edges)), ("triangle", np.asarray(mesh.triangles))],
        cell_data={"gmsh:physical": [tags, untagged], "gmsh:geometrical": [tags, untagged]},
        field_data={name: np.array([tag, 1]) for tag, name in sorted(mesh.markers.items())},
    )
    meshio.write(path, out, file_format="gmsh22", binary=False)
    tags_path_for(path).write_text(
        json.dumps({str(tag): name for tag, name in sorted(mesh.markers.items())}, indent=2) + "\n"
    )
    return path
