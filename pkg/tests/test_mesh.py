import json

import numpy as np
import pytest

from eqflux.geometry import NEGATIVE_BOUNDARY, NEGATIVE_INTERNAL, POSITIVE, FeatureSpec, rect_polygon
from eqflux.mesh import (
    EdgeMarker,
    MeshError,
    generate_unit_square,
    generate_with_rect_features,
    read_mesh,
    uniform_refine,
    vertex_patches,
    write_mesh,
)


def dirichlet_x01(x, y):
    return abs(x) < 1e-12 or abs(x - 1) < 1e-12


class TestGenerateUnitSquare:
    def test_n1_counts(self):
        m = generate_unit_square(1)
        assert m.n_vertices == 4
        assert m.n_triangles == 2
        assert len(m.boundary_edge_ids) == 4

    def test_n2_euler(self):
        m = generate_unit_square(2)
        assert m.n_vertices == 9
        assert m.n_triangles == 8
        assert m.n_edges == 16
        assert m.n_vertices - m.n_edges + m.n_triangles == 1

    def test_boundary_classification(self):
        m = generate_unit_square(4, dirichlet_x01)
        kinds = [m.edge_markers[int(e)].kind for e in m.boundary_edge_ids]
        assert kinds.count("dirichlet") == 8
        assert kinds.count("neumann") == 8

    def test_area_and_h(self):
        m = generate_unit_square(5)
        assert m.total_area() == pytest.approx(1.0, abs=1e-12)
        assert m.h == pytest.approx(np.sqrt(2) / 5)

    def test_interior_edges_two_triangles_opposite_orientation(self):
        m = generate_unit_square(3)
        for e in range(m.n_edges):
            t0, t1 = m.edge_tris[e]
            if t0 < 0 or t1 < 0:
                continue
            # one triangle traverses i->j, the other j->i by construction
            assert t0 != t1


class TestRectFeatures:
    def test_negative_notch_counts(self):
        notch = FeatureSpec(1, NEGATIVE_BOUNDARY, rect_polygon(0.4, 0.6, 0.8, 1.0))
        m = generate_with_rect_features(10, [notch], [True], dirichlet_x01)
        assert m.n_triangles == 2 * (100 - 4)
        assert m.total_area() == pytest.approx(1 - 0.04, abs=1e-12)
        assert len(m.marked_edges(kind="feature", part="gamma")) == 6

    def test_positive_bump_counts(self):
        bump = FeatureSpec(1, POSITIVE, rect_polygon(0.4, 0.6, -0.2, 0.0))
        m = generate_with_rect_features(10, [bump], [True], dirichlet_x01)
        assert m.n_triangles == 200 + 8
        assert m.total_area() == pytest.approx(1 + 0.04, abs=1e-12)
        assert len(m.marked_edges(kind="feature", part="gamma0")) == 2
        assert len(m.marked_edges(kind="feature", part="gamma")) == 6

    def test_excluded_equals_unit_square(self):
        notch = FeatureSpec(1, NEGATIVE_BOUNDARY, rect_polygon(0.4, 0.6, 0.8, 1.0))
        a = generate_with_rect_features(10, [notch], [False], dirichlet_x01)
        b = generate_unit_square(10, dirichlet_x01)
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.triangles, b.triangles)
        assert a.edge_markers == b.edge_markers

    def test_misaligned_rectangle_rejected(self):
        holes = FeatureSpec(1, NEGATIVE_INTERNAL, rect_polygon(0.41, 0.6, 0.2, 0.3))
        with pytest.raises(MeshError):
            generate_with_rect_features(10, [holes], [True], dirichlet_x01)

    def test_overlap_rejected(self):
        a = FeatureSpec(1, NEGATIVE_INTERNAL, rect_polygon(0.2, 0.5, 0.2, 0.5))
        b = FeatureSpec(2, NEGATIVE_INTERNAL, rect_polygon(0.4, 0.6, 0.4, 0.6))
        with pytest.raises(MeshError):
            generate_with_rect_features(10, [a, b], [True, True], dirichlet_x01)

    def test_internal_hole_euler(self):
        hole = FeatureSpec(1, NEGATIVE_INTERNAL, rect_polygon(0.4, 0.6, 0.4, 0.6))
        m = generate_with_rect_features(10, [hole], [True], dirichlet_x01)
        # one hole: V - E + T = 0
        assert m.n_vertices - m.n_edges + m.n_triangles == 0


class TestVertexPatches:
    def test_interior_vertex(self):
        m = generate_unit_square(4)
        patches = vertex_patches(m)
        a = 2 * 5 + 2  # vertex (2, 2)
        p = patches[a]
        assert p.is_interior
        assert len(p.triangles) == 6
        assert len(p.boundary_edges_zero) == 6
        assert len(p.boundary_edges_psi) == 0

    def test_corner_vertex(self):
        m = generate_unit_square(2)
        p = vertex_patches(m)[0]
        assert not p.is_interior
        assert len(p.triangles) == 2
        assert len(p.boundary_edges_psi) == 2

    def test_midside_vertex(self):
        m = generate_unit_square(4)
        p = vertex_patches(m)[2]  # (0.5, 0) on the bottom side
        assert len(p.boundary_edges_psi) == 2

    def test_patches_cover_each_triangle_three_times(self):
        m = generate_unit_square(3)
        count = np.zeros(m.n_triangles, dtype=int)
        for p in vertex_patches(m):
            count[p.triangles] += 1
        assert (count == 3).all()


class TestLocatePoint:
    def test_on_diagonal_tie_breaks_low_index(self):
        m = generate_unit_square(1)
        tri, bary = m.locate_point((0.25, 0.25))
        # (0.25, 0.25) lies on the shared diagonal; lowest triangle index wins
        assert tri == 0
        assert bary == pytest.approx([0.75, 0.0, 0.25], abs=1e-12)

    def test_vertex_location(self):
        m = generate_unit_square(2)
        tri, bary = m.locate_point(m.vertices[4])
        assert bary.max() == pytest.approx(1.0, abs=1e-12)

    def test_outside(self):
        m = generate_unit_square(2)
        assert m.locate_point((2.0, 2.0)) is None

    def test_interior_samples_hit_their_triangle(self):
        m = generate_unit_square(3)
        rng = np.random.default_rng(11)
        for t in range(m.n_triangles):
            lam = rng.dirichlet((2.0, 2.0, 2.0))
            p = lam @ m.vertices[m.triangles[t]]
            tri, _ = m.locate_point(p)
            assert tri == t


class TestUniformRefine:
    def test_counts(self):
        m = generate_unit_square(1)
        f = uniform_refine(m)
        assert f.n_triangles == 8
        assert f.n_vertices == 9

    def test_refine_twice_matches_square4(self):
        f = uniform_refine(uniform_refine(generate_unit_square(1)))
        g = generate_unit_square(4)

        def canon(mesh):
            tris = set()
            for t in mesh.triangles:
                pts = tuple(sorted(map(tuple, np.round(mesh.vertices[t], 12))))
                tris.add(pts)
            return tris

        assert canon(f) == canon(g)

    def test_marker_counts_double(self):
        m = generate_unit_square(2, dirichlet_x01)
        f = uniform_refine(m)
        assert len(f.marked_edges(kind="dirichlet")) == 2 * len(
            m.marked_edges(kind="dirichlet")
        )
        assert f.total_area() == pytest.approx(1.0, abs=1e-12)


class TestMeshIO:
    def test_round_trip(self, tmp_path):
        m = generate_unit_square(2, dirichlet_x01)
        path = tmp_path / "m.json"
        write_mesh(m, path)
        r = read_mesh(path)
        assert np.array_equal(r.vertices, m.vertices)
        assert np.array_equal(r.triangles, m.triangles)
        assert r.edge_markers == m.edge_markers

    def test_clockwise_triangle_rejected(self, tmp_path):
        doc = {
            "vertices": [[0, 0], [1, 0], [0, 1]],
            "triangles": [[0, 2, 1]],
            "boundary_edges": [],
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(MeshError, match="triangle 0"):
            read_mesh(path)

    def test_unmarked_boundary_edge_rejected(self, tmp_path):
        doc = {
            "vertices": [[0, 0], [1, 0], [0, 1]],
            "triangles": [[0, 1, 2]],
            "boundary_edges": [
                [0, 1, "dirichlet", None, None],
                [1, 2, "dirichlet", None, None],
            ],
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(MeshError, match="unmarked boundary edge"):
            read_mesh(path)

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(MeshError, match="malformed"):
            read_mesh(path)

    def test_interior_marker_must_be_interface(self):
        m = generate_unit_square(2, dirichlet_x01)
        # diagonal edge of the first cell is interior
        m.set_marker(0, 4, EdgeMarker("dirichlet"))
        with pytest.raises(MeshError, match="interior edge"):
            m.validate_markers()
