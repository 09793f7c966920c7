"""
Tests for mesh construction, validation and mesh file input/output
"""
import json

import numpy as np
import pytest

from emacflow.models.mesh import Mesh
from emacflow.services.benchmark_service import CHANNEL_HEIGHT, CHANNEL_LENGTH, CYLINDER_CENTER, CYLINDER_RADIUS
from emacflow.services.mesh_service import RECTANGLE_MARKERS, generate_rectangle, load_msh, write_msh
from emacflow.services.space_service import build_taylor_hood, space_summary
from emacflow.utils.exceptions import (
    ConfigurationException,
    MeshValidationException,
    ParameterException,
    ParseException,
)

SQUARE_NODES = """$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
"""

SQUARE_ELEMENTS = """$Elements
7
1 1 2 7 7 1 2
2 1 2 7 7 2 3
3 1 2 7 7 3 4
4 1 2 7 7 4 1
5 15 2 0 0 1
6 2 2 0 0 1 2 3
7 2 2 0 0 1 3 4
$EndElements
"""

HEADER = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n"
NAMES = '$PhysicalNames\n1\n1 7 "rim"\n$EndPhysicalNames\n'


@pytest.fixture
def square_file(tmp_path):
    """Write a hand-made mesh file of the unit square"""
    def factory(text: str, name: str = "square.msh"):
        path = tmp_path / name
        path.write_text(text)
        return path
    return factory


class TestRectangle:
    """Test structured rectangle generation"""

    def test_single_cell(self):
        """Test the minimal grid"""
        mesh = generate_rectangle(1, 1)

        assert mesh.n_vertices == 4
        assert mesh.n_triangles == 2
        assert mesh.boundary_edges.shape == (4, 2)

    def test_gresho_grid_counts(self):
        """Test the 48x48 grid on the centered square"""
        mesh = generate_rectangle(48, 48, (-0.5, 0.5, -0.5, 0.5))

        assert mesh.n_triangles == 4608
        assert mesh.n_vertices == 2401

    def test_area_partition(self):
        """Test triangle areas add up to the rectangle area"""
        mesh = generate_rectangle(4, 4)

        assert mesh.area() == pytest.approx(1.0, abs=1e-14)
        assert np.all(mesh.signed_areas() > 0)

    def test_markers(self):
        """Test each side carries its own marker"""
        mesh = generate_rectangle(3, 2, (0.0, 3.0, 0.0, 1.0))

        assert mesh.markers == RECTANGLE_MARKERS
        assert mesh.edges_for("left").shape[0] == 2
        assert mesh.edges_for("bottom").shape[0] == 3
        assert mesh.edges_for("all").shape[0] == 10
        left = mesh.vertices[mesh.edges_for("left")]
        assert np.all(left[..., 0] == 0.0)

    @pytest.mark.parametrize(
        "nx, ny, bounds",
        [(0, 1, (0, 1, 0, 1)), (2, -1, (0, 1, 0, 1)), (2, 2, (1, 0, 0, 1)), (2, 2, (0, 1, 0))],
    )
    def test_invalid_arguments(self, nx, ny, bounds):
        """Test zero counts and inverted bounds are rejected"""
        with pytest.raises(ParameterException):
            generate_rectangle(nx, ny, bounds)

    def test_unknown_marker(self):
        """Test asking for a marker the mesh lacks"""
        mesh = generate_rectangle(1, 1)

        with pytest.raises(ConfigurationException, match="Marker 'inlet' not found"):
            mesh.edges_for("inlet")
        assert mesh.has_marker("all")
        assert not mesh.has_marker("inlet")


class TestMeshValidation:
    """Test mesh invariants are enforced on construction"""

    def test_clockwise_triangle(self):
        """Test a clockwise triangle is rejected"""
        with pytest.raises(MeshValidationException, match="non-positive signed area"):
            Mesh(
                vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                triangles=np.array([[0, 2, 1]]),
                boundary_edges=np.zeros((0, 2)),
                boundary_tags=np.zeros(0),
            )

    def test_coincident_vertices(self):
        """Test two vertices at the same place are rejected"""
        with pytest.raises(MeshValidationException, match="Vertices 1 and 3 coincide"):
            Mesh(
                vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [2.0, 0.0], [1.0, 1.0]]),
                triangles=np.array([[0, 1, 2], [3, 4, 5]]),
                boundary_edges=np.zeros((0, 2)),
                boundary_tags=np.zeros(0),
            )

    def test_edge_shared_three_times(self):
        """Test a fan of three triangles on one edge is rejected"""
        with pytest.raises(MeshValidationException, match="more than two triangles"):
            Mesh(
                vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, -1.0], [0.5, 2.0]]),
                triangles=np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]]),
                boundary_edges=np.zeros((0, 2)),
                boundary_tags=np.zeros(0),
            )

    def test_unnamed_tag(self):
        """Test every boundary tag needs a marker name"""
        mesh = generate_rectangle(1, 1)

        with pytest.raises(MeshValidationException, match=r"Boundary tags \[4\] have no marker name"):
            Mesh(
                vertices=mesh.vertices,
                triangles=mesh.triangles,
                boundary_edges=mesh.boundary_edges,
                boundary_tags=mesh.boundary_tags,
                markers={1: "left", 2: "right", 3: "bottom"},
            )

    def test_reserved_marker_name(self):
        """Test 'all' cannot name a single tag"""
        mesh = generate_rectangle(1, 1)

        with pytest.raises(MeshValidationException, match="reserved"):
            Mesh(
                vertices=mesh.vertices,
                triangles=mesh.triangles,
                boundary_edges=mesh.boundary_edges,
                boundary_tags=mesh.boundary_tags,
                markers={1: "left", 2: "right", 3: "bottom", 4: "all"},
            )

    def test_untagged_boundary_edge(self):
        """Test a boundary edge missing from the tagged list is rejected"""
        mesh = generate_rectangle(4, 4)
        keep = mesh.boundary_tags != 4

        with pytest.raises(MeshValidationException, match="has no marker"):
            Mesh(
                vertices=mesh.vertices,
                triangles=mesh.triangles,
                boundary_edges=mesh.boundary_edges[keep],
                boundary_tags=mesh.boundary_tags[keep],
                markers={1: "left", 2: "right", 3: "bottom"},
            )

    def test_arrays_are_read_only(self):
        """Test a validated mesh cannot be edited in place"""
        mesh = generate_rectangle(1, 1)

        with pytest.raises(ValueError):
            mesh.vertices[0, 0] = 5.0


class TestMeshFiles:
    """Test reading and writing ASCII mesh files"""

    def test_write_then_load(self, tmp_path):
        """Test a written rectangle loads back unchanged"""
        mesh = generate_rectangle(3, 2, (0.0, 1.5, -1.0, 1.0))
        path = write_msh(mesh, tmp_path / "rect.msh")
        loaded = load_msh(path)

        assert (tmp_path / "rect.tags.json").exists()
        np.testing.assert_array_equal(loaded.vertices, mesh.vertices)
        np.testing.assert_array_equal(loaded.triangles, mesh.triangles)
        np.testing.assert_array_equal(loaded.boundary_edges, mesh.boundary_edges)
        np.testing.assert_array_equal(loaded.boundary_tags, mesh.boundary_tags)
        assert loaded.markers == RECTANGLE_MARKERS

    def test_written_names_without_tag_table(self, tmp_path):
        """Test a written file carries its marker names in $PhysicalNames"""
        path = write_msh(generate_rectangle(2, 2), tmp_path / "rect.msh")
        (tmp_path / "rect.tags.json").unlink()

        text = path.read_text()
        assert text.startswith("$MeshFormat\n2.2 0 8")
        assert load_msh(path).markers == RECTANGLE_MARKERS

    def test_hand_written_square(self, square_file):
        """Test the two-triangle unit square matches the generated one"""
        mesh = load_msh(square_file(HEADER + NAMES + SQUARE_NODES + SQUARE_ELEMENTS))
        reference = generate_rectangle(1, 1)

        assert mesh.n_vertices == reference.n_vertices
        assert mesh.n_triangles == reference.n_triangles
        assert mesh.area() == pytest.approx(reference.area())
        assert sorted(map(tuple, mesh.vertices.tolist())) == sorted(map(tuple, reference.vertices.tolist()))

    def test_physical_names(self, square_file):
        """Test marker names come from $PhysicalNames without a tag table"""
        mesh = load_msh(square_file(HEADER + NAMES + SQUARE_NODES + SQUARE_ELEMENTS))

        assert mesh.markers == {7: "rim"}
        assert mesh.edges_for("rim").shape[0] == 4

    def test_tag_table_wins(self, square_file, tmp_path):
        """Test the sidecar tag table overrides $PhysicalNames"""
        path = square_file(HEADER + NAMES + SQUARE_NODES + SQUARE_ELEMENTS)
        (tmp_path / "square.tags.json").write_text(json.dumps({"7": "outer"}))

        assert load_msh(path).markers == {7: "outer"}

    def test_explicit_tag_table(self, square_file, tmp_path):
        """Test a tag table passed by path"""
        path = square_file(HEADER + SQUARE_NODES + SQUARE_ELEMENTS)
        table = tmp_path / "names.json"
        table.write_text(json.dumps({"7": "wall"}))

        assert load_msh(path, table).markers == {7: "wall"}

    def test_default_names(self, square_file):
        """Test unnamed tags fall back to tag<N>"""
        mesh = load_msh(square_file(HEADER + SQUARE_NODES + SQUARE_ELEMENTS))

        assert mesh.markers == {7: "tag7"}

    def test_clockwise_triangles_reoriented(self, square_file):
        """Test clockwise triangles in a file are flipped on load"""
        elements = SQUARE_ELEMENTS.replace("6 2 2 0 0 1 2 3", "6 2 2 0 0 1 3 2")
        mesh = load_msh(square_file(HEADER + SQUARE_NODES + elements))

        assert np.all(mesh.signed_areas() > 0)

    def test_skips_unknown_sections(self, square_file):
        """Test sections the reader does not use are skipped"""
        comments = "$Comments\nanything here\n$EndComments\n"
        mesh = load_msh(square_file(HEADER + comments + SQUARE_NODES + SQUARE_ELEMENTS))

        assert mesh.n_triangles == 2

    def test_unsupported_element(self, square_file):
        """Test a quadrilateral element is rejected with its line number"""
        elements = SQUARE_ELEMENTS.replace("5 15 2 0 0 1", "5 3 2 0 0 1 2 3 4")
        with pytest.raises(ParseException, match="unsupported element type 3") as excinfo:
            load_msh(square_file(HEADER + SQUARE_NODES + elements))
        assert excinfo.value.line == 17

    def test_truncated_nodes(self, square_file):
        """Test a file ending inside $Nodes names the missing end marker"""
        text = HEADER + SQUARE_NODES.replace("$EndNodes\n", "")
        with pytest.raises(ParseException, match=r"missing \$EndNodes"):
            load_msh(square_file(text))

    def test_short_node_list(self, square_file):
        """Test a node count larger than the listed nodes"""
        nodes = SQUARE_NODES.replace("\n4\n", "\n5\n", 1)
        with pytest.raises(ParseException, match=r"\$Nodes declares 5 nodes but lists 4"):
            load_msh(square_file(HEADER + nodes + SQUARE_ELEMENTS))

    def test_missing_elements(self, square_file):
        """Test a file without $Elements"""
        with pytest.raises(ParseException, match=r"missing section \$Elements"):
            load_msh(square_file(HEADER + SQUARE_NODES))

    def test_unsupported_format(self, square_file):
        """Test binary or newer formats are rejected"""
        header = HEADER.replace("2.2 0 8", "4.1 0 8")
        with pytest.raises(ParseException, match="unsupported mesh format"):
            load_msh(square_file(header + SQUARE_NODES + SQUARE_ELEMENTS))

    def test_undefined_node(self, square_file):
        """Test an element pointing at a node that does not exist"""
        elements = SQUARE_ELEMENTS.replace("7 2 2 0 0 1 3 4", "7 2 2 0 0 1 3 9")
        with pytest.raises(ParseException, match="undefined node 9"):
            load_msh(square_file(HEADER + SQUARE_NODES + elements))


class TestBundledCylinder:
    """Test the packaged channel-with-cylinder mesh"""

    def test_counts(self, cylinder_mesh):
        """Test the vertex and triangle counts of the packaged mesh"""
        assert cylinder_mesh.n_vertices == 1184
        assert cylinder_mesh.n_triangles == 2176

    def test_markers(self, cylinder_mesh):
        """Test the four channel markers are present"""
        assert cylinder_mesh.marker_names == ["cylinder", "inflow", "outflow", "walls"]

    def test_degrees_of_freedom(self, cylinder_mesh):
        """Test the Taylor-Hood size is close to the usual 10210 unknowns"""
        total = space_summary(build_taylor_hood(cylinder_mesh))["total_dofs"]

        assert abs(total - 10210) <= 0.05 * 10210

    def test_cylinder_vertices_on_circle(self, cylinder_mesh):
        """Test the cylinder boundary vertices lie on the circle"""
        nodes = np.unique(cylinder_mesh.edges_for("cylinder"))
        radius = np.hypot(*(cylinder_mesh.vertices[nodes] - np.array(CYLINDER_CENTER)).T)

        np.testing.assert_allclose(radius, CYLINDER_RADIUS, atol=1e-12)

    def test_channel_geometry(self, cylinder_mesh):
        """Test the channel extent and the area of the hole"""
        low = cylinder_mesh.vertices.min(axis=0)
        high = cylinder_mesh.vertices.max(axis=0)

        np.testing.assert_allclose(low, [0.0, 0.0], atol=1e-14)
        np.testing.assert_allclose(high, [CHANNEL_LENGTH, CHANNEL_HEIGHT], atol=1e-12)
        hole = np.pi * CYLINDER_RADIUS ** 2
        assert cylinder_mesh.area() == pytest.approx(CHANNEL_LENGTH * CHANNEL_HEIGHT - hole, abs=1e-3)
