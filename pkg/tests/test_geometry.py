import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hodgemag import geometry as geo

TWO_PI = 2 * math.pi


def test_torus_volume_is_product_of_periods(torus32):
    assert abs(geo.volume(torus32) - 4 * math.pi ** 2) <= 1e-9


def test_round_sphere_volume():
    assert geo.volume(geo.RoundSphere(1.0)) == pytest.approx(4 * math.pi, abs=1e-12)


def test_refinement_preserves_torus_volume(torus16):
    fine, _ = geo.subdivide(torus16)
    assert abs(geo.volume(fine) - geo.volume(torus16)) <= 1e-9


def test_half_plane_vertical_distance():
    H = geo.UpperHalfSpace(2)
    assert geo.distance(H, [0.0, 1.0], [0.0, math.e]) == pytest.approx(1.0, abs=1e-12)


def test_torus_distance_to_self_is_zero():
    T = geo.FlatTorus((TWO_PI, TWO_PI))
    x = np.array([1.3, 5.9])
    assert geo.distance(T, x, x) == 0.0


def test_half_plane_horizontal_distance():
    # arcosh(1 + |dx|^2 / (2 y1 y2)) = arcosh(3)
    H = geo.UpperHalfSpace(2)
    assert geo.distance(H, [-1.0, 1.0], [1.0, 1.0]) == pytest.approx(math.acosh(3.0), abs=1e-12)
    assert math.acosh(3.0) == pytest.approx(1.7627, abs=1e-4)


def test_half_plane_rejects_points_below_boundary():
    H = geo.UpperHalfSpace(2)
    with pytest.raises(geo.DomainError):
        geo.distance(H, [0.0, 1.0], [0.0, -0.5])
    with pytest.raises(geo.DomainError):
        geo.distance(H, [0.0, 0.0], [0.0, 1.0])


def test_degenerate_simplex_is_rejected_with_its_id():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)
    tris = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    assert geo.SimplicialMesh(verts, tris).euler_characteristic() == 2
    # vertex 3 on the segment from 1 to 2: triangle (1, 2, 3) has zero area
    verts[3] = [0.5, 0.5, 0.0]
    with pytest.raises(geo.DegenerateSimplexError) as info:
        geo.SimplicialMesh(verts, tris)
    assert "3" in str(info.value)


def test_open_mesh_is_rejected():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    with pytest.raises(geo.GeometryError, match="not closed"):
        geo.SimplicialMesh(verts, np.array([[0, 1, 2]]))


@pytest.mark.parametrize("make, chi", [
    (lambda: geo.torus_mesh(n=8), 0),
    (lambda: geo.torus_mesh((TWO_PI * 2, TWO_PI), n=12), 0),
    (lambda: geo.icosphere(2), 2),
    (lambda: geo.tetrahedron_surface(), 2),
    (lambda: geo.torus3_mesh(TWO_PI, n=3), 0),
])
def test_euler_characteristic_of_generators(make, chi):
    assert make().euler_characteristic() == chi


def test_generated_meshes_validate(torus32, sphere3, cube8):
    for m in (torus32, sphere3, cube8):
        m.validate()
        assert np.all(m.edge_lengths() > 0)


def test_cube_volume(cube8):
    assert geo.volume(cube8) == pytest.approx(TWO_PI ** 3, rel=1e-12)


def test_mesh_file_round_trip(tmp_path, torus16):
    path = tmp_path / "t.mesh"
    geo.write_mesh(torus16, path)
    back = geo.read_mesh(path)
    assert back.counts == torus16.counts
    assert np.array_equal(back.simplices[2], torus16.simplices[2])
    assert np.allclose(back.vertices, torus16.vertices, atol=0)
    assert geo.volume(back) == pytest.approx(geo.volume(torus16), rel=1e-14)


def test_hand_written_mesh_file(tmp_path):
    text = """# tetrahedron boundary
2 3 4 4
0 0 0
1 0 0
0 1 0
0 0 1
0 2 1
0 1 3
0 3 2
1 2 3
"""
    path = tmp_path / "tet.mesh"
    path.write_text(text)
    mesh = geo.read_mesh(path)
    assert mesh.counts == (4, 6, 4)
    assert mesh.euler_characteristic() == 2


def test_mesh_file_bad_header(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("2 3 four 4\n")
    with pytest.raises(geo.GeometryError, match="bad header"):
        geo.read_mesh(path)


def test_flat_torus_christoffel_vanish():
    T = geo.FlatTorus((TWO_PI, 3.0))
    x = np.random.default_rng(0).uniform(0, 5, (50, 2))
    assert np.all(T.christoffel(x) == 0)


@pytest.mark.parametrize("space, pts", [
    (geo.UpperHalfSpace(2), np.array([[0.3, 0.7], [-2.0, 3.0], [1.0, 0.05]])),
    (geo.UpperHalfSpace(3), np.array([[0.3, -0.1, 0.7], [2.0, 1.0, 4.0]])),
    (geo.FlatTorus((TWO_PI, TWO_PI)), np.array([[0.1, 0.2], [3.0, 4.0]])),
])
def test_metric_compatibility(space, pts):
    for x in pts:
        assert geo.metric_compatibility_defect(space.metric, space.christoffel, x) <= 1e-6


def test_sphere_chart_metric_compatibility():
    S = geo.RoundSphere(1.5)
    for q in ([0.4, 1.0], [1.2, 4.0], [2.5, 0.3]):
        assert geo.metric_compatibility_defect(S.chart_metric, S.chart_christoffel, np.array(q)) <= 1e-6


def test_metric_positive_definite():
    H = geo.UpperHalfSpace(3)
    x = np.array([[0.0, 1.0, 0.25], [4.0, -3.0, 9.0]])
    for g in H.metric(x):
        assert np.allclose(g, g.T)
        assert np.all(np.linalg.eigvalsh(g) > 0)


def _points(space, rng, n):
    if isinstance(space, geo.UpperHalfSpace):
        p = rng.uniform(-3, 3, (n, space.dim))
        p[:, -1] = np.exp(rng.uniform(-2, 2, n))
        return p
    if isinstance(space, geo.RoundSphere):
        p = rng.standard_normal((n, 3))
        return space.radius * p / np.linalg.norm(p, axis=1, keepdims=True)
    return rng.uniform(0, 10, (n, space.dim))


@pytest.mark.parametrize("space", [geo.UpperHalfSpace(2), geo.UpperHalfSpace(3),
                                   geo.FlatTorus((TWO_PI, 3.0)), geo.RoundSphere(2.0),
                                   geo.EuclideanSpace(2)])
def test_distance_symmetry_and_triangle_inequality(space):
    rng = np.random.default_rng(1)
    x, y, z = (_points(space, rng, 1000) for _ in range(3))
    dxy, dyx = space.distance(x, y), space.distance(y, x)
    assert np.max(np.abs(dxy - dyx)) <= 1e-9 * max(1.0, dxy.max())
    assert np.all(dxy <= space.distance(x, z) + space.distance(z, y) + 1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5), st.floats(-2, 2), st.floats(-5, 5), st.floats(-2, 2), st.floats(0.1, 3))
def test_half_plane_distance_invariant_under_dilation_and_translation(x1, ly1, x2, ly2, lam):
    H = geo.UpperHalfSpace(2)
    a = np.array([x1, math.exp(ly1)])
    b = np.array([x2, math.exp(ly2)])
    shift = np.array([0.7, 0.0])
    d = H.distance(a, b)
    assert H.distance(lam * a + shift, lam * b + shift) == pytest.approx(d, rel=1e-9, abs=1e-9)


def test_subdivide_edge_map_pushes_cycles(torus16):
    fine, refine = geo.subdivide(torus16)
    # a coarse cycle maps to a fine cycle with the same length
    cycle = torus16.boundary[2][:, 0].toarray().ravel()
    fine_cycle = refine @ cycle
    assert np.allclose(fine.boundary[1] @ fine_cycle, 0)
    assert np.abs(fine_cycle) @ fine.volumes[1] == pytest.approx(np.abs(cycle) @ torus16.volumes[1])
