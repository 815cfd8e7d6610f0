import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hodgemag import dec, forms, geometry as geo, spectral
from hodgemag.dec import Cochain

TWO_PI = 2 * math.pi


def _component(i, f):
    def w(x):
        out = np.zeros_like(x)
        out[..., i] = f(x)
        return out
    return w


def test_first_coexact_eigenvalue_on_square_torus(torus64):
    pairs = spectral.coexact_spectrum(torus64, 4)
    assert torus64.quality()["h_max"] <= TWO_PI / 64 * (1 + 1e-12)
    assert pairs[0].value == pytest.approx(1.0, rel=0.02)
    modes = [dec.sample_form(torus64, _component(i, f)) for i, f in
             ((1, lambda x: np.sin(x[..., 0])), (1, lambda x: np.cos(x[..., 0])),
              (0, lambda x: np.sin(x[..., 1])), (0, lambda x: np.cos(x[..., 1])))]
    for p in pairs:
        assert spectral.subspace_distance(p.form, modes) <= 0.02


def test_rectangular_torus_eigenvalue():
    mesh = geo.torus_mesh((2 * TWO_PI, TWO_PI), n=128)
    assert mesh.quality()["h_max"] <= TWO_PI / 64 * (1 + 1e-12)
    pairs = spectral.coexact_spectrum(mesh, 1)
    assert pairs[0].value == pytest.approx(0.25, rel=0.02)


def test_count_zero_is_empty(torus16, cube8):
    assert spectral.coexact_spectrum(torus16, 0) == []
    assert spectral.curl_spectrum(cube8, 0) == []


def test_eigenpair_invariants(torus32):
    ops = dec.hodge_operators(torus32)
    pairs = spectral.coexact_spectrum(torus32, 6)
    values = [p.value for p in pairs]
    assert values == sorted(values)
    for p in pairs:
        assert ops.l2_norm(p.form) == pytest.approx(1.0, abs=1e-12)
        assert p.residual <= 1e-8
        assert p.coexactness <= 1e-8


def test_eigenforms_are_coexact(torus32):
    p = spectral.coexact_spectrum(torus32, 1)[0]
    ex, co, h = dec.hodge_decompose(p.form)
    assert dec.l2_norm(ex) <= 1e-8 and dec.l2_norm(h) <= 1e-8


def test_curl_spectrum_on_cube(cube_spectra):
    _, curl = cube_spectra
    for p in curl:
        assert abs(p.value) == pytest.approx(1.0, rel=0.03)
        assert p.residual <= 1e-8
        assert p.kind == "curl"


def test_beltrami_field_is_a_curl_eigenform(cube8):
    # curl of (sin z, cos z, 0) is (sin z, cos z, 0)
    w = dec.sample_form(cube8, lambda x: np.stack([np.sin(x[..., 2]), np.cos(x[..., 2]),
                                                    np.zeros(x.shape[:-1])], -1)).values
    B = spectral.curl_form(cube8)
    M = dec.whitney_mass(cube8)
    assert (w @ (B @ w)) / (w @ (M @ w)) == pytest.approx(1.0, rel=0.03)


def test_curl_squares_are_laplace_eigenvalues(cube_spectra):
    lap, curl = cube_spectra
    lam = np.array([p.value for p in lap])
    for p in curl:
        nearest = lam[np.argmin(np.abs(lam - p.value ** 2))]
        assert p.value ** 2 == pytest.approx(nearest, rel=0.03)


def test_curl_requires_three_dimensions(torus16):
    with pytest.raises(ValueError):
        spectral.curl_spectrum(torus16, 1)


def test_mvi_ratio_of_sine_form(torus64):
    w = dec.sample_form(torus64, _component(1, lambda x: np.sin(x[..., 0])))
    assert spectral.mvi_ratio(w) == pytest.approx(1 / (math.pi * math.sqrt(2)), rel=0.03)


@pytest.mark.parametrize("a", [0.1, 1.0, 4.0])
def test_mvi_ratio_of_constant_form(torus32, a):
    w = dec.sample_form(torus32, forms.constant_form((a, 0.0)))
    assert spectral.mvi_ratio(w) == pytest.approx(1 / (2 * math.pi), rel=0.02)


def test_mvi_ratio_rejects_zero(torus16):
    with pytest.raises(ValueError):
        spectral.mvi_ratio(Cochain(1, np.zeros(torus16.num_simplices(1)), torus16))


def test_mvi_ratio_scaling_by_seven(torus32):
    w = dec.sample_form(torus32, _component(1, lambda x: np.sin(x[..., 0])))
    assert spectral.mvi_ratio(7 * w) == pytest.approx(spectral.mvi_ratio(w), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-6), st.integers(0, 2 ** 32 - 1))
def test_mvi_ratio_homogeneous(c, seed):
    mesh = geo.torus_mesh(n=8)
    w = Cochain(1, np.random.default_rng(seed).standard_normal(mesh.num_simplices(1)), mesh)
    assert spectral.mvi_ratio(c * w) == pytest.approx(spectral.mvi_ratio(w), rel=1e-12)


def test_eigenvalue_refinement_converges_monotonically():
    lam = [spectral.coexact_spectrum(geo.torus_mesh(n=n), 1)[0].value for n in (8, 16, 32, 64)]
    diffs = np.abs(np.diff(lam))
    assert np.all(np.diff(diffs) < 0)
    assert lam[-1] == pytest.approx(1.0, rel=0.02)


def test_eigenpair_records(tmp_path, torus16):
    import json
    pairs = spectral.coexact_spectrum(torus16, 2)
    recs = spectral.eigenpair_records(pairs, "t16")
    spectral.write_jsonl(recs, tmp_path / "e.jsonl")
    lines = (tmp_path / "e.jsonl").read_text().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert rec["scenario"] == "t16" and rec["l2"] == pytest.approx(1.0)
