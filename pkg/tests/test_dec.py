import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hodgemag import dec, forms, geometry as geo
from hodgemag.dec import Cochain

TWO_PI = 2 * math.pi


def _sin_x_dy(x):
    out = np.zeros_like(x)
    out[..., 1] = np.sin(x[..., 0])
    return out


def test_coboundary_of_constant_is_zero(torus32):
    c = Cochain(0, np.full(torus32.num_simplices(0), 3.7), torus32)
    assert np.all(dec.coboundary(c).values == 0)


@pytest.mark.parametrize("mesh_name", ["torus32", "sphere3", "cube8"])
def test_d_squared_is_exactly_zero(mesh_name, request):
    mesh = request.getfixturevalue(mesh_name)
    ops = dec.hodge_operators(mesh)
    for p in range(mesh.dim - 1):
        prod = (ops.d[p + 1] @ ops.d[p]).tocoo()
        assert np.all(prod.data == 0)
    # integer values keep every partial sum exact
    rng = np.random.default_rng(0)
    u = Cochain(0, rng.integers(-1000, 1000, mesh.num_simplices(0)), mesh)
    assert np.all(dec.coboundary(dec.coboundary(u)).values == 0)


@pytest.mark.parametrize("mesh_name", ["torus32", "cube8"])
def test_codifferential_squares_to_zero(mesh_name, request):
    mesh = request.getfixturevalue(mesh_name)
    ops = dec.hodge_operators(mesh)
    for p in range(2, mesh.dim + 1):
        # the inner star and inverse star cancel only up to one rounding per entry
        A, B = ops.codifferential(p - 1), ops.codifferential(p)
        prod = (A @ B).tocoo()
        scale = (abs(A) @ abs(B)).max()
        assert np.max(np.abs(prod.data), initial=0.0) <= 1e-15 * scale


def test_coboundary_of_sampled_sine_matches_edge_integrals(torus64):
    u = dec.sample_function(torus64, lambda x: np.sin(x[:, 0]))
    du = dec.coboundary(u).values
    # edge integral of cos x dx is the difference of sin at the (unwrapped) ends
    pts = torus64.local_coords(1)
    exact = np.sin(pts[:, 1, 0]) - np.sin(pts[:, 0, 0])
    assert np.max(np.abs(du - exact)) <= 1e-12
    # and the sampled 1-form cos x dx agrees to second order in h
    w = dec.sample_form(torus64, lambda x: np.stack([np.cos(x[..., 0]), 0 * x[..., 0]], -1))
    assert np.max(np.abs(w.values - du)) <= 1e-10


def test_inner_product_of_sine_form(torus64):
    w = dec.sample_form(torus64, _sin_x_dy)
    assert dec.inner_product(w, w) == pytest.approx(2 * math.pi ** 2, rel=0.02)


def test_inner_product_with_zero_is_zero(torus32):
    w = dec.sample_form(torus32, _sin_x_dy)
    zero = Cochain(1, np.zeros_like(w.values), torus32)
    assert dec.inner_product(w, zero) == 0.0


def test_linf_norm_of_sine_form(torus64):
    w = dec.sample_form(torus64, _sin_x_dy)
    assert dec.linf_norm(w) == pytest.approx(1.0, rel=0.02)


def test_inner_product_mesh_mismatch(torus16, torus32):
    a = Cochain(1, np.ones(torus16.num_simplices(1)), torus16)
    b = Cochain(1, np.ones(torus32.num_simplices(1)), torus32)
    with pytest.raises(ValueError):
        dec.inner_product(a, b)


def test_stars_positive_and_torus_well_centred(torus32, sphere3, cube8):
    for mesh in (torus32, sphere3, cube8):
        ops = dec.hodge_operators(mesh)
        assert all(np.all(s > 0) for s in ops.star)
    assert dec.hodge_operators(torus32).well_centred.all()


def test_laplacian_self_adjoint(torus32, cube8):
    for mesh in (torus32, cube8):
        ops = dec.hodge_operators(mesh)
        for p in range(mesh.dim + 1):
            K = ops.stiffness(p)
            asym = abs(K - K.T).max()
            assert asym <= 1e-12 * abs(K).max()


def test_decomposition_of_exact_form(torus32):
    u = dec.sample_function(torus32, lambda x: np.sin(x[:, 0]) * np.cos(2 * x[:, 1]))
    w = dec.coboundary(u)
    ex, co, h = dec.hodge_decompose(w)
    n = dec.l2_norm(w)
    assert dec.l2_norm(ex - w) <= 1e-8 * n
    assert dec.l2_norm(co) <= 1e-8 * n
    assert dec.l2_norm(h) <= 1e-8 * n


def test_constant_form_is_harmonic(torus32):
    w = dec.sample_form(torus32, forms.constant_form((0.7, 0.0)))
    ex, co, h = dec.hodge_decompose(w)
    n = dec.l2_norm(w)
    assert dec.l2_norm(h - w) <= 1e-6 * n
    assert dec.l2_norm(ex) <= 1e-6 * n
    assert dec.l2_norm(co) <= 1e-6 * n


def test_random_decomposition_resums_and_is_orthogonal(torus32):
    rng = np.random.default_rng(3)
    w = Cochain(1, rng.standard_normal(torus32.num_simplices(1)), torus32)
    ex, co, h = dec.hodge_decompose(w)
    n2 = dec.inner_product(w, w)
    assert np.linalg.norm((ex + co + h - w).values) <= 1e-10 * np.linalg.norm(w.values)
    for a, b in ((ex, co), (ex, h), (co, h)):
        assert abs(dec.inner_product(a, b)) <= 1e-9 * n2


def test_decomposition_is_a_projection(torus32):
    rng = np.random.default_rng(4)
    w = Cochain(1, rng.standard_normal(torus32.num_simplices(1)), torus32)
    _, co, _ = dec.hodge_decompose(w)
    _, co2, _ = dec.hodge_decompose(co)
    assert np.linalg.norm((co2 - co).values) <= 1e-10 * np.linalg.norm(co.values)


def test_harmonic_basis_counts(torus32, sphere3, cube8):
    assert dec.harmonic_basis(sphere3) == []
    assert len(dec.harmonic_basis(torus32)) == 2
    assert len(dec.harmonic_basis(cube8)) == 3


def test_torus_harmonic_basis_spans_dx_dy(torus32):
    H = np.column_stack([h.values for h in dec.harmonic_basis(torus32)])
    ops = dec.hodge_operators(torus32)
    star = ops.star[1]
    for coeffs in ((1.0, 0.0), (0.0, 1.0)):
        w = dec.sample_form(torus32, forms.constant_form(coeffs)).values
        proj = H @ (H.T @ (star * w))
        # angle between w and its projection onto the span
        cos = (w @ (star * proj)) / math.sqrt((w @ (star * w)) * (proj @ (star * proj)))
        assert math.acos(min(1.0, cos)) <= 1e-6


def test_adjointness_on_random_cochains(torus32, cube8):
    rng = np.random.default_rng(5)
    for mesh in (torus32, cube8):
        ops = dec.hodge_operators(mesh)
        for p in range(mesh.dim):
            a = Cochain(p, rng.standard_normal(mesh.num_simplices(p)), mesh)
            b = Cochain(p + 1, rng.standard_normal(mesh.num_simplices(p + 1)), mesh)
            lhs = ops.inner_product(ops.coboundary(a), b)
            rhs = ops.inner_product(a, ops.codiff(b))
            assert abs(lhs - rhs) <= 1e-12 * (abs(lhs) + abs(rhs))


def test_orientation_covariance(torus16):
    rng = np.random.default_rng(6)
    w = Cochain(1, rng.standard_normal(torus16.num_simplices(1)), torus16)
    a, b = torus16.simplices[1][7]
    assert w.value_on((b, a)) == -w.value_on((a, b))
    tri = tuple(torus16.simplices[2][3])
    f = Cochain(2, rng.standard_normal(torus16.num_simplices(2)), torus16)
    assert f.value_on((tri[1], tri[0], tri[2])) == -f.value_on(tri)
    assert f.value_on((tri[1], tri[2], tri[0])) == f.value_on(tri)


def test_cochain_length_checked(torus16):
    with pytest.raises(ValueError):
        Cochain(1, np.zeros(3), torus16)


def test_cochain_file_round_trip(tmp_path, torus16):
    rng = np.random.default_rng(7)
    w = Cochain(1, rng.standard_normal(torus16.num_simplices(1)), torus16)
    dec.write_cochain(w, tmp_path / "w.txt")
    back = dec.read_cochain(tmp_path / "w.txt", torus16)
    assert back.degree == 1 and np.array_equal(back.values, w.values)
    with pytest.raises(dec.DecError):
        dec.read_cochain(tmp_path / "w.txt", geo.torus_mesh(n=8))


def test_triplet_export(tmp_path, torus16):
    ops = dec.hodge_operators(torus16)
    ops.export_triplets(tmp_path)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files
    for name in files:
        rows = np.loadtxt(tmp_path / name, ndmin=2)
        assert rows.shape[1] == 3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3).filter(lambda t: abs(t) > 1e-3))
def test_decomposition_is_linear(seed, t):
    mesh = geo.torus_mesh(n=8)
    rng = np.random.default_rng(seed)
    w = Cochain(1, rng.standard_normal(mesh.num_simplices(1)), mesh)
    parts = dec.hodge_decompose(w)
    scaled = dec.hodge_decompose(t * w)
    for a, b in zip(parts, scaled):
        assert np.allclose(b.values, t * a.values, atol=1e-9 * abs(t) * np.abs(w.values).max())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_exact_and_coexact_parts_are_closed_and_coclosed(seed):
    mesh = geo.torus_mesh(n=8)
    ops = dec.hodge_operators(mesh)
    rng = np.random.default_rng(seed)
    w = Cochain(1, rng.standard_normal(mesh.num_simplices(1)), mesh)
    ex, co, h = dec.hodge_decompose(w)
    scale = np.abs(w.values).max()
    assert np.abs(ops.d[1] @ ex.values).max() <= 1e-9 * scale
    assert np.abs(ops.codifferential(1) @ co.values).max() <= 1e-8 * scale
    assert np.abs(ops.d[1] @ h.values).max() <= 1e-8 * scale
