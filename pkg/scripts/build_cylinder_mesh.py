"""
Build the bundled channel-with-cylinder mesh (emacflow/data/cylinder.msh)

A tensor grid covers the channel except the box [0.1, 0.3]^2 around the
cylinder; the box is filled by an O-grid whose outer ring reuses the grid
vertices on the box perimeter. Downstream of the box the x spacing grows
geometrically.
"""
import math
from pathlib import Path

import click
import numpy as np

from emacflow.models.mesh import Mesh
from emacflow.services.benchmark_service import (
    CHANNEL_HEIGHT,
    CHANNEL_LENGTH,
    CYLINDER_CENTER,
    CYLINDER_RADIUS,
)
from emacflow.services.mesh_service import write_msh

BOX = (0.1, 0.3)
BOX_SIDE_NODES = 8
RINGS = 4
SPACING = 0.025
WAKE_INTERVALS = 52
MARKERS = {1: "inflow", 2: "outflow", 3: "walls", 4: "cylinder"}


def wake_ratio(intervals: int, first: float, length: float) -> float:
    """Growth factor q with first * (q^n - 1) / (q - 1) = length, by bisection"""
    target = length / first
    lo, hi = 1.0001, 1.1
    for _ in range(200):
        q = 0.5 * (lo + hi)
        if (q ** intervals - 1.0) / (q - 1.0) > target:
            hi = q
        else:
            lo = q
    return q


def grid_lines():
    q = wake_ratio(WAKE_INTERVALS, SPACING, CHANNEL_LENGTH - BOX[1])
    x = [SPACING * i for i in range(5)]
    x += [BOX[0] + SPACING * (i - 4) for i in range(5, 13)]
    x += [BOX[1] + SPACING * (q ** k - 1.0) / (q - 1.0) for k in range(1, WAKE_INTERVALS + 1)]
    x[-1] = CHANNEL_LENGTH
    top = (CHANNEL_HEIGHT - BOX[1]) / 4
    y = [SPACING * j for j in range(5)]
    y += [BOX[0] + SPACING * (j - 4) for j in range(5, 13)]
    y += [BOX[1] + top * (j - 12) for j in range(13, 17)]
    y[-1] = CHANNEL_HEIGHT
    return np.array(x), np.array(y)


def perimeter_index(k: int):
    """Grid indices (i, j) of the k-th box perimeter node, counter-clockwise from (0.1, 0.1)"""
    m = BOX_SIDE_NODES
    if k < m:
        return 4 + k, 4
    if k < 2 * m:
        return 12, 4 + (k - m)
    if k < 3 * m:
        return 12 - (k - 2 * m), 12
    return 4, 12 - (k - 3 * m)


def build_mesh() -> Mesh:
    x, y = grid_lines()
    nx, ny = x.size - 1, y.size - 1
    vertices, ids = [], {}
    for j in range(ny + 1):
        for i in range(nx + 1):
            if 4 < i < 12 and 4 < j < 12:
                continue
            ids[i, j] = len(vertices)
            vertices.append((x[i], y[j]))

    n_perimeter = 4 * BOX_SIDE_NODES
    center = np.array(CYLINDER_CENTER)
    ring = {}
    for k in range(n_perimeter):
        i, j = perimeter_index(k)
        outer = np.array([x[i], y[j]])
        direction = outer - center
        on_circle = center + CYLINDER_RADIUS * direction / math.hypot(*direction)
        for r in range(RINGS):
            ring[k, r] = len(vertices)
            vertices.append(tuple(on_circle + (r / RINGS) * (outer - on_circle)))
        ring[k, RINGS] = ids[i, j]

    triangles = []
    for j in range(ny):
        for i in range(nx):
            if 4 <= i < 12 and 4 <= j < 12:
                continue
            a, b, c, d = ids[i, j], ids[i + 1, j], ids[i + 1, j + 1], ids[i, j + 1]
            triangles += [(a, b, c), (a, c, d)]
    for k in range(n_perimeter):
        k1 = (k + 1) % n_perimeter
        for r in range(RINGS):
            triangles += [
                (ring[k, r], ring[k, r + 1], ring[k1, r + 1]),
                (ring[k, r], ring[k1, r + 1], ring[k1, r]),
            ]

    edges, tags = [], []
    for i in range(nx):
        edges.append((ids[i, 0], ids[i + 1, 0]))
        tags.append(3)
    for j in range(ny):
        edges.append((ids[nx, j], ids[nx, j + 1]))
        tags.append(2)
    for i in range(nx, 0, -1):
        edges.append((ids[i, ny], ids[i - 1, ny]))
        tags.append(3)
    for j in range(ny, 0, -1):
        edges.append((ids[0, j], ids[0, j - 1]))
        tags.append(1)
    for k in range(n_perimeter):
        edges.append((ring[(k + 1) % n_perimeter, 0], ring[k, 0]))
        tags.append(4)

    return Mesh(
        vertices=np.array(vertices, dtype=float),
        triangles=np.array(triangles, dtype=np.int64),
        boundary_edges=np.array(edges, dtype=np.int64),
        boundary_tags=np.array(tags, dtype=np.int64),
        markers=dict(MARKERS),
    )


@click.command()
@click.option(
    "--output",
    type=click.Path(dir_okay=False),
    default=str(Path(__file__).resolve().parent.parent / "emacflow" / "data" / "cylinder.msh"),
    show_default=True,
)
def main(output):
    mesh = build_mesh()
    path = write_msh(mesh, output)
    dofs = 5 * mesh.n_vertices + 2 * mesh.n_triangles
    click.echo(f"Wrote {path}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, {dofs} DOFs")


if __name__ == "__main__":
    main()
