import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hodgemag import forms, geometry as geo, harness, mane
from hodgemag import shadow as sh

H2 = geo.UpperHalfSpace(2)


def test_geodesic_has_zero_curvature():
    g = sh.psl2_element(np.random.default_rng(0))
    for curve in (sh.hyperbolic_geodesic(), sh.hyperbolic_geodesic(g=g)):
        k = sh.geodesic_curvature(H2, curve)
        assert np.nanmax(np.abs(k)) <= 1e-6


@pytest.mark.parametrize("d", [0.1, 0.5, 1.0, -0.5])
def test_hypercycle_curvature_is_tanh_of_distance(d):
    g = sh.psl2_element(np.random.default_rng(1))
    for curve in (sh.hypercycle(d), sh.hypercycle(d, g=g)):
        k = sh.geodesic_curvature(H2, curve)
        assert np.isfinite(k).any()
        assert np.nanmax(np.abs(k - math.tanh(abs(d)))) <= 1e-5


def test_horocycle_has_unit_curvature():
    k = sh.geodesic_curvature(H2, sh.horocycle())
    assert np.nanmax(np.abs(k - 1.0)) <= 1e-5


def test_coarse_sampling_is_reported():
    # a hypercycle through the imaginary axis is a Euclidean ray, which any stencil
    # differentiates without error, so move a horocycle onto a Euclidean circle
    g = np.array([[1.0, 0.0], [1.0, 1.0]])
    with pytest.raises(sh.CoarseSamplingError) as info:
        sh.geodesic_curvature(H2, sh.horocycle(T=5.0, n=21, g=g), tol=1e-8)
    assert info.value.estimate > 1e-8
    with pytest.raises(sh.CoarseSamplingError):
        sh.geodesic_curvature(H2, sh.hypercycle(1.0, n=5))


def test_curvature_needs_uniform_samples():
    c = sh.hypercycle(0.5)
    c.t[10] += 1e-3
    with pytest.raises(ValueError):
        sh.geodesic_curvature(H2, c)


@pytest.mark.parametrize("kappa, Q", [(0.0, 1.0), (0.6, 1.25), (math.tanh(0.8), math.cosh(0.8))])
def test_quasigeodesic_constant(kappa, Q):
    assert sh.quasigeodesic_constant(kappa) == pytest.approx(Q, rel=1e-12)


@pytest.mark.parametrize("kappa", [1.0, 1.5, -0.1])
def test_quasigeodesic_constant_rejects_out_of_range(kappa):
    with pytest.raises(ValueError):
        sh.quasigeodesic_constant(kappa)


@pytest.mark.parametrize("kappa", [0.3, 0.5, 0.9])
def test_shadow_of_hypercycle_is_its_axis(kappa):
    d = math.atanh(kappa)
    curve = sh.hypercycle(d, T=60.0, n=6001)
    geod, info = sh.shadow_geodesic(H2, curve)
    # the axis is the imaginary axis, from 0 to the point at infinity
    assert geod.end is None
    assert np.max(np.abs(geod.start)) <= 1e-4
    mask = sh.central_window(curve.t)
    L, _, dist = sh.fellow_traveling(geod, curve, mask)
    assert np.max(np.abs(dist - d)) <= 1e-4
    assert L == pytest.approx(d, abs=1e-4)


def test_shadow_of_moved_hypercycle_matches_moved_axis():
    g = np.array([[2.0, 1.0], [1.0, 1.0]])
    d = math.atanh(0.4)
    curve = sh.hypercycle(d, T=60.0, n=6001, g=g)
    geod, _ = sh.shadow_geodesic(H2, curve)
    # the image of 0 -> inf under z -> (2z + 1)/(z + 1) is 1 -> 2
    assert geod.start[0] == pytest.approx(1.0, abs=1e-4)
    assert geod.end[0] == pytest.approx(2.0, abs=1e-4)
    dist = geod.distance(curve.x[sh.central_window(curve.t)])
    assert np.max(np.abs(dist - d)) <= 1e-4


def test_geodesic_is_its_own_shadow():
    curve = sh.hyperbolic_geodesic(T=30.0, n=3001, g=np.array([[1.0, -0.5], [0.5, 0.75]]))
    geod, _ = sh.shadow_geodesic(H2, curve)
    # endpoint errors grow like exp(distance from the origin), hence the central window
    L, _, _ = sh.fellow_traveling(geod, curve, sh.central_window(curve.t))
    assert L <= 1e-6


def test_short_horizon_raises_endpoint_drift():
    with pytest.raises(sh.EndpointDriftError) as info:
        sh.shadow_geodesic(H2, sh.hypercycle(1.0, T=5.0))
    assert info.value.drift > 1e-4


def test_shadowing_needs_the_half_space_chart():
    with pytest.raises(geo.DomainError):
        sh.shadow_geodesic(geo.EuclideanSpace(2), sh.hypercycle(0.5))


def test_geodesic_point_and_foot_are_consistent():
    geod = sh.Geodesic([-1.0], [3.0])
    u = np.linspace(-4, 4, 17)
    x, v = geod.point(u, velocity=True)
    assert np.allclose(geod.foot(x), u, atol=1e-10)
    assert np.max(geod.distance(x)) <= 1e-7
    assert np.allclose(H2.norm(x, v), 1.0, atol=1e-12)


def test_magnetic_orbit_in_constant_field():
    B, s = 0.5, 1.0
    system = mane.MagneticSystem(form=forms.hyperbolic_field_form(B))
    curve = sh.magnetic_curve(system, [0.0, 1.0], [0.6 * s, 0.8 * s], 24.0 / s, sample_dt=0.01)
    k = sh.geodesic_curvature(H2, curve)
    assert np.nanmax(np.abs(k - B / s)) <= 1e-4
    rep = sh.shadow_report(H2, curve)
    assert rep.L == pytest.approx(math.atanh(0.5), abs=1e-3)
    assert math.atanh(0.5) == pytest.approx(0.5493, abs=1e-4)
    assert rep.Q == pytest.approx(sh.quasigeodesic_constant(0.5), abs=1e-4)


def test_average_difference_of_zero_form():
    curve = sh.hypercycle(0.5, T=60.0, n=6001)
    measured, bound, _ = sh.average_difference(H2, forms.zero_form(H2), curve)
    assert measured == 0.0 and bound == 0.0


def test_average_difference_along_a_geodesic():
    curve = sh.hyperbolic_geodesic(T=30.0, n=3001)
    form = forms.hyperbolic_bump_form((0.3, 2.0), radius=1.0, angle=0.7)
    measured, bound, _ = sh.average_difference(H2, form, curve)
    assert measured <= 1e-8
    assert bound <= 1e-5


def test_average_difference_bump_on_hypercycle():
    curve = sh.hypercycle(math.atanh(0.3), T=60.0, n=6001)
    form = forms.hyperbolic_bump_form((0.5, 2.0), radius=1.2, angle=0.3, A=1.0, D=1.0)
    measured, bound, info = sh.average_difference(H2, form, curve)
    assert bound == pytest.approx(0.6, abs=1e-6)
    assert 0 < measured < bound
    assert info["integral_curve"] != 0.0


def test_random_bump_hypercycle_pairs_respect_the_bound():
    rows = harness.shadow_suite(100, seed=0, horizon=300.0)
    assert len(rows) == 100
    violations = [r for r in rows if r["measured"] > r["bound"] + 1e-6 + r["quadrature_error"]]
    assert violations == []
    assert all(0.05 - 1e-6 <= r["kappa"] <= 0.9 + 1e-6 for r in rows)


def test_report_and_curve_pair_export(tmp_path):
    curve = sh.hypercycle(0.4, T=40.0, n=4001)
    rep = sh.shadow_report(H2, curve, form=forms.hyperbolic_bump_form((0.0, 1.5)))
    rec = json.loads(rep.to_json())
    assert rec["endpoints"]["end"] == "inf"
    assert rec["measured"] <= rec["bound"]
    assert rec["kappa_max"] == pytest.approx(math.tanh(0.4), abs=1e-6)
    sh.write_curve_pair(tmp_path / "pair.csv", curve, rep.geodesic)
    with open(tmp_path / "pair.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x0", "x1", "g0", "g1"]
    assert len(rows) == 4002
    # feet of the perpendiculars lie on the imaginary axis
    assert max(abs(float(r[3])) for r in rows[1:]) <= 1e-6


def test_ball_chart_round_trip():
    for p in (np.array([0.0]), np.array([2.5]), np.array([-0.3])):
        assert np.allclose(sh.ball_to_ideal(sh.ideal_to_ball(p, 2)), p)
    assert sh.ball_to_ideal(sh.ideal_to_ball(None, 2)) is None


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 1.5))
def test_curvature_is_isometry_invariant(seed, d):
    g = sh.psl2_element(np.random.default_rng(seed))
    k = sh.geodesic_curvature(H2, sh.hypercycle(d, T=3.0, n=601, g=g), tol=1e-5)
    assert np.nanmax(np.abs(k - math.tanh(d))) <= 1e-5
