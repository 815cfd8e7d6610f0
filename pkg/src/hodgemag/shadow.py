"""Quasigeodesics in hyperbolic space: curvature, shadow geodesics, averaged differences.

Everything works in the upper half-space chart {x_n > 0}.  Ideal points are
either a boundary point ``a`` in R^(n-1) or ``inf``.  Distances and feet of
perpendiculars use the hyperboloid pairings written directly in half-space
coordinates,

    -<X, P_a>  = (|x' - a|^2 + y^2) / (2 y),      -<X, P_inf> = 1 / y,
    -<P_a, P_b> = |a - b|^2 / 2,                 -<P_a, P_inf> = 1,

which avoid cancellation even for points very close to the boundary.  The
distance from X to the geodesic joining P and Q satisfies
cosh^2 d = 2 <X,P><X,Q> / -<P,Q>, and the foot has parameter
u = log(<X,Q>/<X,P>) / 2 (up to a constant).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid
from scipy.interpolate import CubicSpline, PchipInterpolator

from . import geometry as geo
from .magflow import Trajectory


class ShadowError(RuntimeError):
    pass


class EndpointDriftError(ShadowError):
    def __init__(self, message, drift):
        super().__init__(message)
        self.drift = drift


class CoarseSamplingError(ShadowError):
    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


# ---------------------------------------------------------------- curvature

def _stencil(x, h, step=1):
    """Five-point first and second derivatives at interior samples."""
    k = step
    xm2, xm1, x0, xp1, xp2 = (x[2 * k + j * k: len(x) - 2 * k + j * k] for j in (-2, -1, 0, 1, 2))
    H = h * k
    v = (-xp2 + 8 * xp1 - 8 * xm1 + xm2) / (12 * H)
    a = (-xp2 + 16 * xp1 - 30 * x0 + 16 * xm1 - xm2) / (12 * H * H)
    return x0, v, a


def _curvature(space, x, v, a):
    cov = a - space.geodesic_acceleration(x, v)
    if isinstance(space, geo.RoundSphere):
        cov = space.project(x, cov)
    vv = space.inner(x, v, v)
    tang = space.inner(x, cov, v) / vv
    normal = cov - tang[..., None] * v
    return space.norm(x, normal) / vv


def geodesic_curvature(space, traj, tol=1e-6, return_error=False):
    """Geodesic curvature |nabla_v v|_perp / |v|^2 at interior samples.

    ``traj`` must be sampled uniformly in time; two samples at each end are
    dropped.  The truncation error is estimated by Richardson comparison
    with the stencil on every other sample; if it exceeds ``tol`` the
    sampling is too coarse and CoarseSamplingError is raised.  Samples whose
    floating point resolution in the chart is worse than ``tol`` (points
    extremely close to the ideal boundary) are returned as NaN.
    """
    t = np.asarray(traj.t, float)
    x = np.asarray(traj.x, float)
    if len(t) < 9:
        raise CoarseSamplingError("need at least 9 samples", math.inf)
    h = float(t[1] - t[0])
    if not np.allclose(np.diff(t), h, rtol=1e-9, atol=1e-12):
        raise ValueError("samples must be uniform in time")
    x0, v, a = _stencil(x, h)
    kappa = _curvature(space, x0, v, a)

    # roundoff: a coordinate error eps |x| is amplified by about 5 / h^2
    eps = np.finfo(float).eps * np.max(np.abs(x0), axis=-1, keepdims=True)
    noise = space.norm(x0, 5.0 * np.broadcast_to(eps, x0.shape) / h ** 2) / space.inner(x0, v, v)
    kappa = np.where(noise < tol, kappa, np.nan)

    # truncation: compare with the stencil at spacing 2h on the same points
    x2, v2, a2 = _stencil(x, h, step=2)
    k2 = _curvature(space, x2, v2, a2)
    k1 = kappa[2:len(kappa) - 2]
    err = np.abs(k2 - k1) / 15.0
    resolved = np.isfinite(k1)
    if not resolved.any():
        raise CoarseSamplingError("no sample is resolved in floating point", math.inf)
    est = float(np.max(err[resolved]))
    if est > tol:
        raise CoarseSamplingError(f"stencil error estimate {est:.2e} exceeds {tol:.1e}; "
                                  "sample more densely", est)
    if return_error:
        return kappa, est
    return kappa


def quasigeodesic_constant(kappa):
    """(1 - kappa^2)^(-1/2) for curvature bound 0 <= kappa < 1."""
    k = float(kappa)
    if not 0.0 <= k < 1.0:
        raise ValueError(f"curvature {k} outside [0, 1): no quasigeodesic constant")
    return 1.0 / math.sqrt(1.0 - k * k)


# ---------------------------------------------------------------- synthetic curves

def psl2_element(rng):
    """Random element of PSL(2, R) as a 2x2 array, via rotation * boost * rotation."""
    th1, th2 = rng.uniform(0, math.pi, 2)
    s = rng.normal(scale=0.7)

    def rot(a):
        return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])

    return rot(th1) @ np.diag([math.exp(s), math.exp(-s)]) @ rot(th2)


def mobius(g, x, v=None):
    """Apply z -> (az + b)/(cz + d) to points (and tangent vectors) of the upper half-plane."""
    (a, b), (c, d) = np.asarray(g, float)
    z = x[..., 0] + 1j * x[..., 1]
    den = c * z + d
    w = (a * z + b) / den
    out = np.stack([w.real, w.imag], axis=-1)
    if v is None:
        return out
    dz = (v[..., 0] + 1j * v[..., 1]) / den ** 2
    return out, np.stack([dz.real, dz.imag], axis=-1)


def _synthetic(kind, z, dz, t, g, params):
    x = np.stack([z.real, z.imag], axis=-1)
    v = np.stack([dz.real, dz.imag], axis=-1)
    if g is not None:
        x, v = mobius(g, x, v)
    return Trajectory(t, x, v, 1.0, None, {"kind": kind, **params})


def hypercycle(d, T=5.0, n=1001, g=None):
    """Unit-speed curve at signed distance d from the imaginary axis, t in [-T, T].

    z(t) = e^(t / cosh d) (tanh d + i sech d); its curvature is tanh|d|.
    """
    t = np.linspace(-T, T, n)
    c = math.cosh(d)
    e = np.exp(t / c)
    w = math.tanh(d) + 1j / c
    return _synthetic("hypercycle", e * w, e * w / c, t, g, {"distance": float(d)})


def horocycle(T=5.0, n=1001, g=None):
    """Horizontal line z = t + i: unit speed, curvature 1."""
    t = np.linspace(-T, T, n)
    return _synthetic("horocycle", t + 1j, np.ones_like(t) + 0j, t, g, {})


def hyperbolic_geodesic(T=5.0, n=1001, g=None):
    """Imaginary axis z = i e^t."""
    t = np.linspace(-T, T, n)
    z = 1j * np.exp(t)
    return _synthetic("geodesic", z, z, t, g, {})


# ---------------------------------------------------------------- geodesics

def _as_ideal(p):
    if p is None or (isinstance(p, str) and p == "inf"):
        return None
    return np.atleast_1d(np.asarray(p, float))


def _pair_point(x, p):
    """-<X, P_p> for half-space points x."""
    y = x[..., -1]
    if p is None:
        return 1.0 / y
    diff = x[..., :-1] - p
    return (np.sum(diff * diff, axis=-1) + y * y) / (2.0 * y)


def _pair_ideal(p, q):
    if p is None and q is None:
        raise ShadowError("both ideal endpoints at infinity")
    if p is None or q is None:
        return 1.0
    return 0.5 * float(np.sum((p - q) ** 2))


def ball_to_ideal(xi, snap=1e-12):
    """Unit vector in the ball chart -> boundary point of half-space (or None for infinity)."""
    xi = np.asarray(xi, float)
    den = 1.0 - xi[-1]
    if den < snap:
        return None
    return xi[:-1] / den


def ideal_to_ball(p, dim):
    if p is None:
        out = np.zeros(dim)
        out[-1] = 1.0
        return out
    a2 = float(np.sum(p * p))
    return np.concatenate([2 * p, [a2 - 1.0]]) / (1.0 + a2)


def to_ball(x):
    """Half-space points -> Poincare ball chart (stable formula)."""
    x = np.asarray(x, float)
    y = x[..., -1:]
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    num = np.concatenate([2 * x[..., :-1], r2 - 1.0], axis=-1)
    return num / (2 * y + 1.0 + r2)


class Geodesic:
    """Complete geodesic of the upper half-space from ideal point ``start`` to ``end``.

    Parametrized by arc length ``u``, u -> +inf at ``end``.
    """

    def __init__(self, start, end, dim=2):
        self.dim = int(dim)
        self.start = _as_ideal(start)
        self.end = _as_ideal(end)
        self._N = _pair_ideal(self.end, self.start)
        if self._N <= 1e-300:
            raise ShadowError("ideal endpoints coincide")
        # reference point (top of the semicircle, or height 1 on a vertical line)
        top = self._top()
        self._u_off = self._raw_foot(top[None, :])[0]

    def _top(self):
        p, q = self.end, self.start
        top = np.zeros(self.dim)
        if p is None:
            top[:-1], top[-1] = q, 1.0
        elif q is None:
            top[:-1], top[-1] = p, 1.0
        else:
            top[:-1] = 0.5 * (p + q)
            top[-1] = 0.5 * math.sqrt(float(np.sum((p - q) ** 2)))
        return top

    def _raw_foot(self, x):
        return 0.5 * np.log(_pair_point(x, self.start) / _pair_point(x, self.end))

    def distance(self, x):
        """Hyperbolic distance from half-space points to the geodesic."""
        x = np.asarray(x, float)
        c2 = 2.0 * _pair_point(x, self.end) * _pair_point(x, self.start) / self._N
        return np.arccosh(np.sqrt(np.maximum(c2, 1.0)))

    def foot(self, x):
        """Arc-length parameter of the nearest point on the geodesic."""
        return self._raw_foot(np.asarray(x, float)) - self._u_off

    def point(self, u, velocity=False):
        """Half-space coordinates (and unit velocity) at arc length ``u``."""
        u = np.asarray(u, float)
        p, q = self.end, self.start
        shape = u.shape + (self.dim,)
        x = np.zeros(shape)
        v = np.zeros(shape)
        if p is None:
            x[..., :-1] = q
            x[..., -1] = np.exp(u)
            v[..., -1] = np.exp(u)
        elif q is None:
            x[..., :-1] = p
            x[..., -1] = np.exp(-u)
            v[..., -1] = -np.exp(-u)
        else:
            c = 0.5 * (p + q)
            rho = 0.5 * math.sqrt(float(np.sum((p - q) ** 2)))
            e = (p - q) / (2 * rho)
            th, sh = np.tanh(u), 1.0 / np.cosh(u)
            x[..., :-1] = c + rho * th[..., None] * e
            x[..., -1] = rho * sh
            v[..., :-1] = rho * (sh * sh)[..., None] * e
            v[..., -1] = -rho * sh * th
        return (x, v) if velocity else x

    def endpoints(self):
        def enc(p):
            return "inf" if p is None else [float(c) for c in p]
        return {"start": enc(self.start), "end": enc(self.end)}

    def ball_endpoints(self):
        return ideal_to_ball(self.start, self.dim), ideal_to_ball(self.end, self.dim)

    def __repr__(self):
        e = self.endpoints()
        return f"Geodesic({e['start']} -> {e['end']})"


# ---------------------------------------------------------------- shadowing

def _origin_index(t):
    if t[0] <= 0.0 <= t[-1]:
        return int(np.argmin(np.abs(t)))
    return 0


def _sample_at(traj, tq):
    return CubicSpline(traj.t, traj.x, axis=0)(tq)


def _ideal_limit(traj, t_end, t_mid, stab_tol, method="last"):
    b1 = to_ball(_sample_at(traj, t_end))
    b2 = to_ball(_sample_at(traj, t_mid))
    drift = float(np.linalg.norm(b1 - b2))
    if drift > stab_tol:
        raise EndpointDriftError(f"ideal endpoint not stabilized: drift {drift:.2e} > {stab_tol:.1e}; "
                                 "use a longer horizon", drift)
    if method == "extrapolate":
        # b(t) = b_inf + c/t + ...  ->  b_inf = 2 b(T) - b(T/2)
        lim = 2 * b1 - b2
    elif method == "last":
        # quasigeodesics converge exponentially in the ball chart, so b(T) is
        # already closer than the algebraic extrapolation
        lim = b1
    else:
        raise ValueError(f"unknown endpoint method {method!r}")
    return lim / np.linalg.norm(lim), drift


def shadow_geodesic(space, curve, stab_tol=1e-4, method="last"):
    """Geodesic joining the ideal endpoints of a bi-infinite quasigeodesic sample.

    Forward and backward endpoints come from the ball-chart positions at
    times T and T/2 measured from the curve origin (t = 0 when sampled,
    otherwise the first sample).  Their difference is the stabilization
    diagnostic; the estimate is b(T) (``method="last"``) or the linear
    extrapolation in 1/t, 2 b(T) - b(T/2) (``method="extrapolate"``).  Returns (Geodesic, info) where
    info carries the drift metrics and the distance of every sample to the
    geodesic.
    """
    if not isinstance(space, geo.UpperHalfSpace):
        raise geo.DomainError("shadowing is implemented in the upper half-space chart")
    t = np.asarray(curve.t, float)
    i0 = _origin_index(t)
    t0 = t[i0]
    if t[-1] - t0 <= 0 or t0 - t[0] <= 0:
        raise ShadowError("curve must extend on both sides of its origin")
    fwd, dfwd = _ideal_limit(curve, t[-1], t0 + 0.5 * (t[-1] - t0), stab_tol, method)
    bwd, dbwd = _ideal_limit(curve, t[0], t0 - 0.5 * (t0 - t[0]), stab_tol, method)
    if np.linalg.norm(fwd - bwd) < 1e-8:
        raise ShadowError("forward and backward endpoints coincide")
    geod = Geodesic(ball_to_ideal(bwd), ball_to_ideal(fwd), space.dim)
    # samples that rounded onto the boundary get an infinite distance
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = geod.distance(curve.x)
    info = {"drift_forward": dfwd, "drift_backward": dbwd,
            "ball_start": bwd.tolist(), "ball_end": fwd.tolist(), "distances": dist}
    return geod, info


def central_window(t, fraction=0.25):
    """Mask of samples within ``fraction`` of each half-horizon around the origin.

    Endpoint errors of size e are amplified to about e * exp(r) at distance r
    from the origin, so distances to the shadow are only meaningful on a
    central window.
    """
    t = np.asarray(t, float)
    t0 = t[_origin_index(t)]
    return (t >= t0 - fraction * (t0 - t[0])) & (t <= t0 + fraction * (t[-1] - t0))


def fellow_traveling(geod, curve, mask=None):
    """Max distance from curve samples to the geodesic and the projected length.

    Because the foot map is continuous, every geodesic point between the
    feet of the curve ends is within this distance of the curve, so it is
    the Hausdorff distance between the curve and that geodesic segment.
    """
    x = curve.x if mask is None else curve.x[mask]
    d = geod.distance(x)
    u = geod.foot(x)
    return float(np.max(d)), float(abs(u[-1] - u[0])), d


def arc_length(space, traj):
    """Cumulative arc length from the first sample (Simpson)."""
    speed = space.norm(traj.x, traj.v)
    return cumulative_simpson(speed, x=traj.t, initial=0.0)


def _line_integral_curve(space, form, traj, T):
    """Integral of the form over the curve from its origin to arc length T."""
    i0 = _origin_index(traj.t)
    t = traj.t[i0:]
    x, v = traj.x[i0:], traj.v[i0:]
    part = Trajectory(t, x, v, traj.speed, None)
    s = arc_length(space, part)
    if s[-1] < T * (1 - 1e-12):
        raise ShadowError(f"curve has arc length {s[-1]:.6g} < T = {T}")
    # monotone inversion of arc length
    tT = float(PchipInterpolator(s, t)(min(T, s[-1])))
    f = np.einsum("...i,...i->...", form(x), v)
    F = cumulative_simpson(f, x=t, initial=0.0)
    Ftr = cumulative_trapezoid(f, x=t, initial=0.0)
    val = float(CubicSpline(t, F)(tT))
    err = float(abs(CubicSpline(t, Ftr)(tT) - val))
    # trapezoid error overestimates Simpson error by a large factor; keep it as a safe bound
    return val, err


def _line_integral_geodesic(form, geod, u0, T, panel=0.05, order=8):
    npan = max(1, int(math.ceil(T / panel)))
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = u0 + np.linspace(0.0, T, npan + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    u = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    x, v = geod.point(u, velocity=True)
    f = np.einsum("...i,...i->...", form(x), v)
    val = float(np.sum(w * f))
    # lower order on the same panels as an error estimate
    n2, w2 = np.polynomial.legendre.leggauss(order // 2)
    u2 = (mid[:, None] + half[:, None] * n2[None, :]).ravel()
    x2, v2 = geod.point(u2, velocity=True)
    val2 = float(np.sum((half[:, None] * w2[None, :]).ravel() * np.einsum("...i,...i->...", form(x2), v2)))
    return val, abs(val - val2)


def average_difference(space, form, curve, T=None, geodesic=None, kappa_max=None, tol=1e-6):
    """Average difference of the line integrals of ``form`` along a curve and its shadow.

    Both curves are parametrized by arc length from the curve origin and
    from the foot of the origin on the shadow geodesic.  Returns
    (measured, bound, info) with bound = (A + D) kappa_max.
    """
    if geodesic is None:
        geodesic, _ = shadow_geodesic(space, curve)
    if kappa_max is None:
        kappa_max = float(np.nanmax(geodesic_curvature(space, curve)))
    if T is None:
        i0 = _origin_index(curve.t)
        sub = Trajectory(curve.t[i0:], curve.x[i0:], curve.v[i0:], curve.speed, None)
        T = float(arc_length(space, sub)[-1]) * (1 - 1e-9)
    I_curve, e_curve = _line_integral_curve(space, form, curve, T)
    u0 = float(geodesic.foot(curve.x[_origin_index(curve.t)][None, :])[0])
    I_geod, e_geod = _line_integral_geodesic(form, geodesic, u0, T)
    measured = abs(I_curve - I_geod) / T
    bound = (form.A + form.D) * kappa_max
    quad_err = (e_curve + e_geod) / T
    info = {"T": T, "integral_curve": I_curve, "integral_geodesic": I_geod,
            "quadrature_error": quad_err, "slack": bound - measured,
            "ratio": measured / bound if bound > 0 else (0.0 if measured == 0 else math.inf)}
    if measured > bound + tol + quad_err:
        raise AssertionError(f"average difference {measured:.3e} exceeds bound {bound:.3e}")
    return measured, bound, info


@dataclass
class ShadowReport:
    kappa_max: float
    Q: float
    geodesic: Geodesic
    L: float
    measured: float
    bound: float
    measured_Q: float = math.nan
    mean_distance: float = math.nan
    info: dict = field(default_factory=dict)

    def to_record(self):
        return {"kappa_max": self.kappa_max, "Q": self.Q, "endpoints": self.geodesic.endpoints(),
                "L": self.L, "measured": self.measured, "bound": self.bound,
                "measured_Q": self.measured_Q, "mean_distance": self.mean_distance,
                **{k: v for k, v in self.info.items() if not isinstance(v, np.ndarray)}}

    def to_json(self):
        return json.dumps(self.to_record(), sort_keys=True)


def shadow_report(space, curve, form=None, T=None, stab_tol=1e-4, curvature_tol=1e-6, window=0.25,
                  method="last"):
    """Curvature, shadow geodesic, fellow-traveling distance and averaged difference.

    Distances, lengths and the measured quasigeodesic constant are taken on
    the central window (see ``central_window``).
    """
    kappa = geodesic_curvature(space, curve, tol=curvature_tol)
    kmax = float(np.nanmax(kappa))
    Q = quasigeodesic_constant(kmax)
    geod, info = shadow_geodesic(space, curve, stab_tol, method)
    mask = central_window(curve.t, window)
    L, proj, dist = fellow_traveling(geod, curve, mask)
    sub = Trajectory(curve.t[mask], curve.x[mask], curve.v[mask], curve.speed, None)
    length = float(arc_length(space, sub)[-1])
    measured, bound = 0.0, (form.A + form.D) * kmax if form is not None else math.nan
    extra = {"drift_forward": info["drift_forward"], "drift_backward": info["drift_backward"],
             "length": length, "projected_length": proj, "window": window}
    if form is not None:
        measured, bound, ai = average_difference(space, form, curve, T, geod, kmax)
        extra.update({k: ai[k] for k in ("T", "quadrature_error", "ratio")})
    return ShadowReport(kmax, Q, geod, L, measured, bound, length / proj,
                        float(np.mean(dist)), extra)


def write_curve_pair(path, curve, geod):
    """CSV with the curve samples and the feet of their perpendiculars on the shadow geodesic."""
    feet = geod.point(geod.foot(curve.x))
    m = curve.x.shape[1]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t"] + [f"x{i}" for i in range(m)] + [f"g{i}" for i in range(m)])
        for t, x, g in zip(curve.t, curve.x, feet):
            wr.writerow([repr(float(t))] + [repr(float(c)) for c in x] + [repr(float(c)) for c in g])


def magnetic_curve(system, x0, v0, T, sample_dt=0.01, drift_tol=1e-8):
    """Magnetic geodesic through (x0, v0) sampled on [-T, T] (backward and forward runs)."""
    from .magflow import integrate

    fwd = integrate(system, x0, v0, T, sample_dt=sample_dt, drift_tol=drift_tol)
    bwd = integrate(system, x0, v0, -T, sample_dt=sample_dt, drift_tol=drift_tol)
    if fwd.exited or bwd.exited:
        raise ShadowError("orbit left the chart; shorten the horizon")
    t = np.concatenate([bwd.t[:0:-1], fwd.t])
    x = np.concatenate([bwd.x[:0:-1], fwd.x])
    v = np.concatenate([bwd.v[:0:-1], fwd.v])
    meta = {"drift": max(fwd.meta["drift"], bwd.meta["drift"]), "kind": "magnetic"}
    return Trajectory(t, x, v, fwd.speed, system, meta)
