"""Analytic 1-forms on model spaces.

A form is a covector field ``x -> w(x)`` in chart coordinates together with
its Jacobian ``J[..., i, j] = d_j w_i`` and certified pointwise bounds
``A >= |w|`` and ``D >= |dw|`` (norms taken in the metric of ``space``).
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import EuclideanSpace, FlatTorus, RoundSphere, UpperHalfSpace


class AnalyticForm:
    def __init__(self, name, space, fn, jac=None, A=math.inf, D=math.inf, params=None):
        self.name = name
        self.space = space
        self._fn = fn
        self._jac = jac
        self.A = float(A)
        self.D = float(D)
        self.params = dict(params or {})

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self._fn(x)

    def jacobian(self, x, h=1e-6):
        x = np.asarray(x, dtype=float)
        if self._jac is not None:
            return self._jac(x)
        m = x.shape[-1]
        cols = []
        for j in range(m):
            e = np.zeros(m)
            e[j] = h
            cols.append((self._fn(x + e) - self._fn(x - e)) / (2 * h))
        return np.stack(cols, axis=-1)

    def differential(self, x):
        """Antisymmetric matrix Omega[..., i, j] = d_i w_j - d_j w_i."""
        J = self.jacobian(x)
        return np.swapaxes(J, -1, -2) - J

    def pointwise_norm(self, x):
        return self.space.covector_norm(x, self(x))

    def differential_norm(self, x):
        """Metric norm of dw (2-form norm, one component per plane)."""
        Om = self.differential(x)
        ginv = self.space.inverse_metric(x)
        # |Om|^2 = 1/2 Om_ij Om_kl g^ik g^jl
        return np.sqrt(np.clip(0.5 * np.einsum("...ij,...kl,...ik,...jl->...", Om, Om, ginv, ginv), 0, None))

    def scaled(self, t):
        fn, jac = self._fn, self._jac
        return AnalyticForm(f"{t}*{self.name}", self.space, lambda x: t * fn(x),
                            None if jac is None else (lambda x: t * jac(x)),
                            abs(t) * self.A, abs(t) * self.D, dict(self.params, scale=t))

    def describe(self):
        return {"name": self.name, **{k: v for k, v in self.params.items()}}

    def __repr__(self):
        return f"AnalyticForm({self.name!r}, A={self.A:.4g}, D={self.D:.4g})"


def zero_form(space):
    m = space.dim

    def fn(x):
        return np.zeros_like(x)

    def jac(x):
        return np.zeros(x.shape + (m,))

    return AnalyticForm("zero", space, fn, jac, 0.0, 0.0)


def constant_form(coeffs, space=None):
    """Constant-coefficient form sum a_i dx_i on a flat space."""
    a = np.asarray(coeffs, dtype=float)
    space = space or FlatTorus((2 * math.pi,) * len(a))

    def fn(x):
        return np.broadcast_to(a, x.shape).copy()

    def jac(x):
        return np.zeros(x.shape + (len(a),))

    return AnalyticForm("constant", space, fn, jac, float(np.linalg.norm(a)), 0.0,
                        {"coeffs": a.tolist()})


def sine_form(eps, space=None):
    """eps * sin(x) dy on the flat 2-torus."""
    eps = float(eps)
    space = space or FlatTorus()

    def fn(x):
        out = np.zeros_like(x)
        out[..., 1] = eps * np.sin(x[..., 0])
        return out

    def jac(x):
        J = np.zeros(x.shape + (2,))
        J[..., 1, 0] = eps * np.cos(x[..., 0])
        return J

    return AnalyticForm("sine", space, fn, jac, abs(eps), abs(eps), {"eps": eps})


def stream_form(modes, space=None):
    """Coexact form psi_y dx - psi_x dy for psi = sum c cos(k.x) + s sin(k.x).

    ``modes`` is a list of (kx, ky, c, s) with integer wave numbers.
    """
    space = space or FlatTorus()
    modes = [tuple(float(v) for v in m) for m in modes]
    periods = space.periods

    def parts(x):
        grad = np.zeros_like(x)
        hess = np.zeros(x.shape + (2,))
        for kx, ky, c, s in modes:
            k = np.array([kx, ky]) * 2 * math.pi / periods
            ph = x @ k
            d1 = -c * np.sin(ph) + s * np.cos(ph)
            d2 = -c * np.cos(ph) - s * np.sin(ph)
            grad += d1[..., None] * k
            hess += d2[..., None, None] * np.outer(k, k)
        return grad, hess

    def fn(x):
        g, _ = parts(x)
        return np.stack([g[..., 1], -g[..., 0]], axis=-1)

    def jac(x):
        _, H = parts(x)
        return np.stack([H[..., 1, :], -H[..., 0, :]], axis=-2)

    amp = sum(math.hypot(c, s) * math.hypot(*(np.array([kx, ky]) * 2 * math.pi / periods))
              for kx, ky, c, s in modes)
    lap = sum(math.hypot(c, s) * float(np.sum((np.array([kx, ky]) * 2 * math.pi / periods) ** 2))
              for kx, ky, c, s in modes)
    return AnalyticForm("stream", space, fn, jac, amp, lap, {"modes": [list(m) for m in modes]})


def sphere_rotation_form(scale=None, radius=1.0):
    """scale * (y dx - x dy) on the round sphere (ambient coordinates).

    Equals -scale sin^2(theta) dphi; the default scale gives unit L2 norm.
    """
    R = float(radius)
    if scale is None:
        # |w|^2 = scale^2 (x^2 + y^2); integral over the sphere = scale^2 * 8 pi R^4 / 3
        scale = math.sqrt(3.0 / (8.0 * math.pi)) / R ** 2
    scale = float(scale)
    space = RoundSphere(R)

    def fn(x):
        out = np.zeros_like(x)
        out[..., 0] = scale * x[..., 1]
        out[..., 1] = -scale * x[..., 0]
        return out

    def jac(x):
        J = np.zeros(x.shape + (3,))
        J[..., 0, 1] = scale
        J[..., 1, 0] = -scale
        return J

    form = AnalyticForm("sphere_rotation", space, fn, jac, abs(scale) * R, 2 * abs(scale),
                        {"scale": scale, "radius": R})
    # tangential norms on the sphere: |w| = scale * dist to axis, |dw| = 2 scale |z| / R
    form.pointwise_norm = lambda x: np.abs(scale) * np.hypot(x[..., 0], x[..., 1])
    form.differential_norm = lambda x: 2 * abs(scale) * np.abs(x[..., 2]) / R
    return form


def planar_field_form(B):
    """B x dy on the Euclidean plane: uniform field dw = B dx^dy."""
    B = float(B)
    space = EuclideanSpace(2)

    def fn(x):
        out = np.zeros_like(x)
        out[..., 1] = B * x[..., 0]
        return out

    def jac(x):
        J = np.zeros(x.shape + (2,))
        J[..., 1, 0] = B
        return J

    return AnalyticForm("planar_field", space, fn, jac, math.inf, abs(B), {"B": B})


def hyperbolic_field_form(B):
    """B dx / y on the upper half-plane: |w| = B and dw = B times the area form."""
    B = float(B)
    space = UpperHalfSpace(2)

    def fn(x):
        out = np.zeros_like(x)
        out[..., 0] = B / x[..., 1]
        return out

    def jac(x):
        J = np.zeros(x.shape + (2,))
        J[..., 0, 1] = -B / x[..., 1] ** 2
        return J

    return AnalyticForm("hyperbolic_field", space, fn, jac, abs(B), abs(B), {"B": B})


def _bump(t):
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti * ti))
    return out


def _bump_derivative(t):
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti * ti)) * (-2.0 * ti / (1.0 - ti * ti) ** 2)
    return out


_BUMP_GRID = np.linspace(0.0, 1.0, 200001)
_BUMP_MAX = float(_bump(_BUMP_GRID).max())
_BUMP_DMAX = float(np.abs(_bump_derivative(_BUMP_GRID)).max())


def hyperbolic_bump_form(center=(0.0, 1.0), radius=1.0, angle=0.0, A=1.0, D=1.0):
    """Compactly supported form f(r) (cos b dx + sin b dy) / y on the upper half-plane.

    r is hyperbolic distance to ``center`` and f a smooth bump of support
    radius ``radius``.  Since |(cos b dx + sin b dy)/y| = 1, |d of it| = |cos b|
    and |dr| = 1, we have |w| <= sup|f| and |dw| <= sup(|f'| + |f cos b|); the
    amplitude is the largest one making these at most ``A`` and ``D``.
    """
    space = UpperHalfSpace(2)
    c = np.asarray(center, float)
    Rr = float(radius)
    cb, sb = math.cos(angle), math.sin(angle)
    # grid maxima are inflated slightly so the bounds remain certified between nodes
    fmax = _BUMP_MAX
    dmax = _BUMP_DMAX / Rr + abs(cb) * _BUMP_MAX
    amp = min(A / fmax, D / (dmax * (1 + 1e-6)))

    def dist(x):
        return space.distance(x, np.broadcast_to(c, x.shape))

    def fn(x):
        r = dist(x)
        f = amp * _bump(r / Rr)
        out = np.empty_like(x)
        out[..., 0] = f * cb / x[..., 1]
        out[..., 1] = f * sb / x[..., 1]
        return out

    def jac(x):
        r = dist(x)
        y = x[..., 1]
        fp = amp * _bump_derivative(r / Rr) / Rr
        f = amp * _bump(r / Rr)
        # gradient of r: r = 2 asinh(q), q = |x - c| / (2 sqrt(y yc))
        diff = x - c
        rho = np.linalg.norm(diff, axis=-1)
        q = rho / (2 * np.sqrt(y * c[1]))
        with np.errstate(invalid="ignore", divide="ignore"):
            dq = np.empty_like(x)
            dq[..., 0] = diff[..., 0] / (2 * rho * np.sqrt(y * c[1]))
            dq[..., 1] = diff[..., 1] / (2 * rho * np.sqrt(y * c[1])) - q / (2 * y)
            dr = 2.0 / np.sqrt(1 + q * q)[..., None] * dq
        dr = np.where(rho[..., None] > 0, dr, 0.0)
        J = np.empty(x.shape + (2,))
        for i, coef in enumerate((cb, sb)):
            J[..., i, :] = coef * (fp[..., None] * dr / y[..., None])
            J[..., i, 1] -= coef * f / y ** 2
        return J

    return AnalyticForm("hyperbolic_bump", space, fn, jac, A, D,
                        {"center": c.tolist(), "radius": Rr, "angle": float(angle), "amplitude": amp})


def form_from_spec(spec: dict):
    """Build a catalogue form from a config dictionary with a ``kind`` key."""
    kind = spec.get("kind", "zero")
    g = spec.get
    if kind == "zero":
        return zero_form(FlatTorus(tuple(g("periods", (2 * math.pi, 2 * math.pi)))))
    if kind == "constant":
        return constant_form(g("coeffs", (0.3, 0.0)), FlatTorus(tuple(g("periods", (2 * math.pi, 2 * math.pi)))))
    if kind == "sine":
        return sine_form(g("eps", 0.5))
    if kind == "stream":
        return stream_form(g("modes"))
    if kind == "sphere_rotation":
        return sphere_rotation_form(g("scale"), g("radius", 1.0))
    if kind == "planar_field":
        return planar_field_form(g("B", 1.0))
    if kind == "hyperbolic_field":
        return hyperbolic_field_form(g("B", 0.5))
    if kind == "hyperbolic_bump":
        return hyperbolic_bump_form(g("center", (0.0, 1.0)), g("radius", 1.0), g("angle", 0.0))
    raise ValueError(f"unknown form kind {kind!r}")
