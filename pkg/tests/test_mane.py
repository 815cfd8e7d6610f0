import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hodgemag import dec, forms, geometry as geo, magflow, mane
from hodgemag.forms import AnalyticForm
from oracles import grid_critical_value

TWO_PI = 2 * math.pi


def _circle(radius, speed, n=2001, centre=(3.0, 3.0)):
    T = TWO_PI * radius / speed
    t = np.linspace(0, T, n)
    ang = speed * t / radius
    x = np.column_stack([centre[0] + radius * np.cos(ang), centre[1] + radius * np.sin(ang)])
    v = speed * np.column_stack([-np.sin(ang), np.cos(ang)])
    return SimpleNamespace(t=t, x=x, v=v)


def _x_loop(speed, n=2001):
    T = TWO_PI / speed
    t = np.linspace(0, T, n)
    x = np.column_stack([speed * t, np.full(n, 1.0)])
    v = np.tile([speed, 0.0], (n, 1))
    return SimpleNamespace(t=t, x=x, v=v)


def _system(form, mesh=None):
    return mane.MagneticSystem(form=form, mesh=mesh)


@pytest.fixture(scope="module")
def zero_sys(torus32):
    return _system(forms.zero_form(geo.FlatTorus()), torus32)


@pytest.fixture(scope="module")
def const_sys(torus32):
    return _system(forms.constant_form((0.3, 0.0)), torus32)


@pytest.fixture(scope="module")
def sine_sys(torus32):
    return _system(forms.sine_form(0.5), torus32)


# ---------------------------------------------------------------- action

def test_action_kinetic_only(zero_sys):
    assert mane.action(zero_sys, _circle(1.0, 1.0)) == pytest.approx(math.pi, rel=1e-10)
    assert mane.action(zero_sys, _circle(1.0, 2.0)) == pytest.approx(2 * math.pi, rel=1e-10)


def test_action_with_constant_form(const_sys):
    val, err = mane.action(const_sys, _x_loop(1.0), return_error=True)
    assert val == pytest.approx(math.pi - TWO_PI * 0.3, rel=1e-10)
    assert err < 1e-6 * abs(val)


def test_action_rejects_non_finite(zero_sys):
    tr = _circle(1.0, 1.0)
    tr.v[5, 0] = np.nan
    with pytest.raises(ValueError):
        mane.action(zero_sys, tr)


def test_free_period_action(zero_sys):
    assert mane.free_period_action(zero_sys, _circle(1.0, 1.0), 0.0) == pytest.approx(math.pi, rel=1e-10)
    assert mane.free_period_action(zero_sys, _circle(1.0, 1.0), 0.5) == pytest.approx(TWO_PI, rel=1e-10)
    with pytest.raises(ValueError):
        mane.free_period_action(zero_sys, _circle(1.0, 1.0), math.inf)


@pytest.mark.parametrize("length, integral, k", [(TWO_PI, 0.0, 0.5), (3.0, 1.2, 0.1), (10.0, -2.0, 2.0)])
def test_optimal_period_action_matches_scan(length, integral, k):
    T = np.linspace(0.01, 100, 200001)
    scan = np.min(length ** 2 / (2 * T) + k * T) - integral
    assert mane.optimal_period_action(length, integral, k) == pytest.approx(scan, rel=1e-6)


# ---------------------------------------------------------------- Hamiltonian side

def test_zero_form_has_zero_critical_value(zero_sys):
    c, u = mane.critical_value_hamiltonian(zero_sys)
    assert c == 0.0
    assert np.ptp(u.values) == 0.0


def test_constant_form_critical_value(const_sys):
    c, _ = mane.critical_value_hamiltonian(const_sys)
    lo, hi = grid_critical_value(const_sys.form)
    assert lo * (1 - 1e-9) <= 0.045 <= hi
    assert c == pytest.approx(0.045, rel=0.05)


def test_sine_form_critical_value(sine_sys):
    c, u = mane.critical_value_hamiltonian(sine_sys)
    lo, hi = grid_critical_value(sine_sys.form)
    assert c == pytest.approx(0.125, rel=0.05)
    assert c == pytest.approx(0.5 * (lo + hi), rel=0.05)


def test_mixed_form_matches_grid_oracle(torus32):
    # eps sin x dy + 0.2 dx: the potential can move the dx part away from x = pi/2
    f = AnalyticForm("mixed", geo.FlatTorus(), lambda x: forms.sine_form(0.5)(x) + np.array([0.2, 0.0]))
    c, _ = mane.critical_value_hamiltonian(_system(f, torus32))
    lo, hi = grid_critical_value(f)
    assert c == pytest.approx(0.5 * (lo + hi), rel=0.05)


def test_exact_part_does_not_change_critical_value(sine_sys, torus32):
    f = dec.sample_function(torus32, lambda x: 0.7 * np.cos(x[:, 0] + 2 * x[:, 1]) + 0.3 * np.sin(x[:, 1]))
    shifted = mane.MagneticSystem(mesh=torus32, cochain=sine_sys.cochain + dec.coboundary(f))
    c0, _ = mane.critical_value_hamiltonian(sine_sys)
    c1, _ = mane.critical_value_hamiltonian(shifted)
    assert c1 == pytest.approx(c0, rel=1e-3)


def test_strict_value_cancels_harmonic_form(const_sys):
    res = mane.strict_critical_value(const_sys)
    c0, u, h = res
    assert c0 <= 1e-3
    # the optimal harmonic shift is -0.3 dx
    H = dec.hodge_operators(const_sys.mesh).harmonic_basis()
    shift = dec.Cochain(1, H @ h, const_sys.mesh)
    target = -1.0 * const_sys.cochain
    assert dec.l2_norm(shift - target) <= 1e-6 * dec.l2_norm(target)


def test_strict_value_of_coexact_sine(sine_sys):
    c, _ = mane.critical_value_hamiltonian(sine_sys)
    c0, _, h = mane.strict_critical_value(sine_sys)
    assert c0 == pytest.approx(0.125, rel=0.05)
    assert abs(c - c0) <= 1e-3
    assert np.max(np.abs(h)) <= 1e-6


def test_strict_equals_plain_on_sphere(sphere3):
    sys_ = mane.MagneticSystem(form=forms.sphere_rotation_form(), mesh=sphere3)
    c, _ = mane.critical_value_hamiltonian(sys_)
    c0, _, h = mane.strict_critical_value(sys_)
    assert len(h) == 0
    assert abs(c - c0) <= 1e-4
    # rotation symmetry makes u = 0 optimal: c = max |w|^2 / 2 = 3 / (16 pi)
    assert c == pytest.approx(3 / (16 * math.pi), rel=0.02)


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_critical_value_scales_quadratically(sine_sys, t):
    c1, _ = mane.critical_value_hamiltonian(sine_sys)
    ct, _ = mane.critical_value_hamiltonian(sine_sys.scaled(t))
    assert ct == pytest.approx(t * t * c1, rel=1e-4)


def test_subsolution_defect_of_own_potential(sine_sys):
    c, u = mane.critical_value_hamiltonian(sine_sys)
    assert mane.subsolution_defect(sine_sys, u, c) <= 1e-6


def test_subsolution_defect_analytic():
    sys_ = mane.MagneticSystem(form=forms.sine_form(0.5))
    eps = 0.5
    assert mane.subsolution_defect(sys_, None, eps ** 2 / 2) <= 1e-9
    # the maximum sits on x = pi/2, which the 256 grid contains
    assert mane.subsolution_defect(sys_, None, eps ** 2 / 4) == pytest.approx(eps ** 2 / 4, abs=1e-12)


def test_calibration_defect_geodesic():
    sys_ = mane.MagneticSystem(form=forms.zero_form(geo.FlatTorus()))
    s = 1.5
    tr = magflow.integrate(sys_, [0.3, 0.4], [s, 0.0], 4.0, sample_dt=0.01)
    assert mane.calibration_defect(sys_, None, s * s / 2, tr) == pytest.approx(-s * s * 4.0, rel=1e-10)


def test_calibration_defect_cancelled_system():
    a = 0.3
    w = AnalyticForm("cancelled", geo.FlatTorus(), lambda x: forms.constant_form((a, 0.0))(x) - a)
    sys_ = mane.MagneticSystem(form=w)
    rest = SimpleNamespace(t=np.linspace(0, 5, 11), x=np.tile([1.0, 2.0], (11, 1)), v=np.zeros((11, 2)))
    assert mane.calibration_defect(sys_, None, 0.0, rest) == 0.0


def test_calibration_defect_on_critical_orbit():
    # the line x = pi/2 at speed eps is an orbit along which u = 0 is calibrated
    eps = 0.5
    sys_ = mane.MagneticSystem(form=forms.sine_form(eps))
    c = eps ** 2 / 2
    tr = magflow.integrate(sys_, [math.pi / 2, 0.0], [0.0, eps], 20.0, sample_dt=0.01)
    defect = mane.calibration_defect(sys_, None, c, tr)
    assert abs(defect) / tr.horizon <= 0.05 * c


def test_bounds_hold_on_random_samples(sine_sys):
    a, d = sine_sys.check_bounds(n=10_000)
    assert a <= sine_sys.A and d <= sine_sys.D


def test_bounds_violation_detected():
    f = forms.sine_form(0.5)
    f.A = 0.1
    with pytest.raises(AssertionError):
        mane.MagneticSystem(form=f).check_bounds()


# ---------------------------------------------------------------- Lagrangian side

def test_lagrangian_zero_form(zero_sys):
    assert mane.critical_value_lagrangian(zero_sys).value == 0.0


def test_lagrangian_agrees_with_hamiltonian(sine_sys):
    c, _ = mane.critical_value_hamiltonian(sine_sys)
    lag = mane.critical_value_lagrangian(sine_sys)
    assert abs(lag.value - c) <= 0.05 * c
    assert lag.lower <= lag.value <= lag.upper


def test_lagrangian_null_homologous_restriction(const_sys):
    null = mane.critical_value_lagrangian(const_sys, nullhomologous_only=True)
    full = mane.critical_value_lagrangian(const_sys)
    assert null.value <= 1e-3
    assert full.value == pytest.approx(0.045, rel=0.05)


def test_null_loop_ratio_reaches_critical_speed(sine_sys):
    c0, _, _ = mane.strict_critical_value(sine_sys)
    res = mane.critical_value_lagrangian(sine_sys, nullhomologous_only=True)
    best = res.best_null_witness
    assert best is not None and best.winding == (0, 0)
    assert best.ratio >= math.sqrt(2 * c0) * 0.95


def test_lagrangian_unbounded_form_needs_bracket():
    sys_ = mane.MagneticSystem(form=forms.planar_field_form(1.0))
    with pytest.raises(mane.BracketError):
        mane.critical_value_lagrangian(sys_)


def test_loop_family_gradient():
    fam = mane.LoopFamily(forms.stream_form([(1, 2, 0.3, 0.1)]), winding=(0, 0))
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 6, (12, 2))
    S, _, _, g = fam.evaluate(X, 0.2)
    h = 1e-6
    num = np.zeros_like(X)
    for i in range(X.shape[0]):
        for j in range(2):
            E = np.zeros_like(X)
            E[i, j] = h
            num[i, j] = (fam.evaluate(X + E, 0.2, grad=False)[0] - fam.evaluate(X - E, 0.2, grad=False)[0]) / (2 * h)
    assert np.max(np.abs(num - g)) <= 1e-5 * max(1.0, np.abs(g).max())


# ---------------------------------------------------------------- covers

def test_constant_form_on_two_cover(const_sys):
    tower = mane.universal_critical_value_estimate(const_sys, (1, 2))
    for _, c in tower:
        assert c == pytest.approx(0.045, rel=0.05)


def test_zero_form_cover_tower(zero_sys):
    assert all(c == 0.0 for _, c in mane.universal_critical_value_estimate(zero_sys, (1, 2, 3)))


def test_sine_cover_tower_nonincreasing(sine_sys):
    tower = mane.universal_critical_value_estimate(sine_sys, (1, 2, 3))
    values = [c for _, c in tower]
    assert all(b <= a + 1e-3 for a, b in zip(values, values[1:]))
    assert all(c <= 0.125 + 1e-3 for c in values)


def test_cover_resource_budget(sine_sys):
    with pytest.raises(mane.ResourceError):
        mane.universal_critical_value_estimate(sine_sys, (1, 50), max_vertices=10_000)


def test_cover_pullback_preserves_integrals(sine_sys):
    lifted, proj = mane.cover_system(sine_sys, 2)
    ops = dec.hodge_operators(lifted.mesh)
    # four copies of the base: L2 norm squared multiplies by 4
    base = dec.l2_norm(sine_sys.cochain) ** 2
    assert ops.l2_norm(lifted.cochain) ** 2 == pytest.approx(4 * base, rel=1e-12)


# ---------------------------------------------------------------- report and properties

def test_report_record(sine_sys):
    rep = mane.critical_value_report(sine_sys, lagrangian=False, cover_orders=(1, 2))
    rec = rep.to_record()
    assert rec["c_strict"] <= rec["c_hamiltonian"] + 1e-4
    assert rec["c_universal"][0][0] == 1


def test_norm_comparison_on_sine(sine_sys):
    c0, _, _ = mane.strict_critical_value(sine_sys)
    vol = sine_sys.mesh.total_volume()
    l2 = dec.l2_norm(sine_sys.cochain)
    assert l2 == pytest.approx(0.5 * math.pi * math.sqrt(2), rel=0.01)
    assert l2 <= math.sqrt(vol) * math.sqrt(2 * c0) + 1e-6


@settings(max_examples=15, deadline=None)
@given(st.lists(st.tuples(st.integers(-2, 2), st.integers(-2, 2), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)),
                min_size=1, max_size=3),
       st.floats(-1, 1), st.floats(-1, 1))
def test_hamiltonian_ordering_properties(modes, a, b):
    mesh = geo.torus_mesh(n=12)
    modes = [m for m in modes if (m[0], m[1]) != (0, 0)]
    base = forms.stream_form(modes) if modes else forms.zero_form(geo.FlatTorus())
    f = AnalyticForm("p", geo.FlatTorus(), lambda x: base(x) + np.array([a, b]))
    sys_ = mane.MagneticSystem(form=f, mesh=mesh)
    c, _ = mane.critical_value_hamiltonian(sys_)
    c0, _, _ = mane.strict_critical_value(sys_)
    assert c >= 0 and c0 >= 0
    assert c0 <= c + 1e-4 * max(c, 1e-12) + 1e-12
    # a constant potential is admissible, so c never exceeds max |w|^2 / 2
    vec = dec.hodge_operators(mesh).pointwise_vectors(sys_.cochain)
    assert c <= 0.5 * np.max(np.einsum("ij,ij->i", vec, vec)) * (1 + 1e-9) + 1e-15
    # and never falls below (the averaged form)^2 / 2
    assert c >= 0.5 * (a * a + b * b) * (1 - 1e-3) - 1e-9
