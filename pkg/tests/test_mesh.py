import math

import numpy as np
import pytest

from ucfem.exceptions import MeshError
from ucfem.fem.mesh import (
    DomainShape,
    Mesh,
    SubdomainIndicator,
    classify_points,
    generate,
    refine,
    refinement_sequence,
)


class TestGenerate:
    def test_unit_square_counts(self, unit_square):
        mesh = generate(unit_square, 2)

        assert mesh.num_triangles == 8
        assert mesh.num_vertices == 9
        assert len(mesh.interior_faces) == 8
        assert len(mesh.boundary_faces) == 8
        assert mesh.h == pytest.approx(math.sqrt(0.5), abs=1e-15)

    def test_strip_area(self, strip):
        mesh = generate(strip, 8)
        mesh.validate(max_quality=10.0)
        assert mesh.area() == pytest.approx(math.pi, rel=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 4])
    def test_disk_is_valid(self, disk, n):
        mesh = generate(disk, n)
        mesh.validate(max_quality=10.0)

        radii = np.linalg.norm(mesh.vertices[mesh.boundary_vertices], axis=1)
        np.testing.assert_allclose(radii, 1.0, atol=1e-14)
        assert mesh.euler_characteristic() == 2

    def test_disk_contains_axis_segment(self, disk):
        mesh = generate(disk, 3)
        edges = mesh.edges_on_segment((-1.0, 0.0), (1.0, 0.0))
        assert mesh.edge_lengths[edges].sum() == pytest.approx(2.0, rel=1e-12)

    @pytest.mark.parametrize("n", [0, -1, 2.5])
    def test_rejects_bad_subdivision(self, unit_square, n):
        with pytest.raises(MeshError):
            generate(unit_square, n)

    def test_rejects_degenerate_rectangle(self):
        with pytest.raises(MeshError):
            DomainShape.rectangle(1.0, 1.0, 0.0, 1.0)

    def test_rejects_bad_sector_count(self):
        with pytest.raises(MeshError):
            DomainShape.unit_disk(sectors=5)


class TestMeshInvariants:
    def test_degenerate_triangle(self):
        with pytest.raises(MeshError):
            Mesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])

    def test_clockwise_triangles_are_reoriented(self):
        mesh = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
        assert mesh.areas[0] == pytest.approx(0.5)

    def test_vertex_out_of_range(self):
        with pytest.raises(MeshError):
            Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 3]])

    def test_edge_counts(self, square_mesh):
        counts = (square_mesh.edge_tris >= 0).sum(axis=1)
        assert set(counts.tolist()) == {1, 2}
        assert np.all(square_mesh.interior_faces.right >= 0)
        assert np.all(square_mesh.boundary_faces.right == -1)

    def test_boundary_normals_point_outward(self, square_mesh):
        faces = square_mesh.boundary_faces
        midpoints = square_mesh.vertices[faces.vertices].mean(axis=1)
        outward = midpoints + 1e-3 * faces.normals
        inside = (outward > 0).all(axis=1) & (outward < 1).all(axis=1)
        assert not inside.any()

    def test_segment_not_aligned(self, unit_square):
        mesh = generate(unit_square, 3)
        with pytest.raises(MeshError):
            mesh.edges_on_segment((0.0, 0.5), (1.0, 0.5))

    def test_text_round_trip_keeps_geometry(self, disk):
        mesh = generate(disk, 2)
        restored = Mesh.from_text(mesh.to_text(), shape=disk)

        np.testing.assert_array_equal(restored.vertices, mesh.vertices)
        np.testing.assert_array_equal(restored.triangles, mesh.triangles)
        assert restored.parents is None

    def test_malformed_text(self):
        with pytest.raises(MeshError):
            Mesh.from_text("vertices 3 / triangles 1\n0 0\n1 0\n")


class TestRefine:
    def test_counts_and_parents(self, unit_square):
        mesh = generate(unit_square, 2)
        fine = refine(mesh)

        assert fine.num_triangles == 32
        assert fine.num_vertices == mesh.num_vertices + mesh.num_edges
        np.testing.assert_array_equal(fine.parents, np.repeat(np.arange(8), 4))
        assert fine.h == pytest.approx(mesh.h / 2, rel=1e-14)

    def test_children_tile_parent(self, strip):
        mesh = generate(strip, 2)
        fine = refine(mesh)
        child_area = np.bincount(fine.parents, weights=fine.areas)
        np.testing.assert_allclose(child_area, mesh.areas, rtol=1e-13)

    def test_disk_midpoints_on_circle(self, disk):
        fine = refine(generate(disk, 2))
        fine.validate()
        radii = np.linalg.norm(fine.vertices[fine.boundary_vertices], axis=1)
        np.testing.assert_allclose(radii, 1.0, atol=1e-14)

    def test_sequence(self, unit_square):
        meshes = refinement_sequence(unit_square, 2, 3)
        assert [m.num_triangles for m in meshes] == [8, 32, 128]
        with pytest.raises(MeshError):
            refinement_sequence(unit_square, 2, 0)


def test_classify_points():
    indicator = SubdomainIndicator("omega", lambda x, y: (x > 0) & (x * x + y * y > 0.25))
    points = np.array([[0.8, 0.0], [0.1, 0.1], [-0.8, 0.0], [0.0, 0.9]])
    np.testing.assert_array_equal(classify_points(indicator, points), [True, False, False, False])


def test_shape_contains(disk, unit_square):
    assert disk.contains(np.array([0.5]), np.array([0.5]))[0]
    assert not disk.contains(np.array([1.0]), np.array([0.0]))[0]
    assert not unit_square.contains(np.array([0.0]), np.array([0.5]))[0]
