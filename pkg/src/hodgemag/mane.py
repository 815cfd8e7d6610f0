"""Critical values of magnetic systems.

Three independent routes to the same number:

* Hamiltonian side, ``inf_u 1/2 |du + w|_inf^2`` over potentials on a mesh
  (optionally also over harmonic shifts), solved as a smoothed min-max;
* Lagrangian side, bisection on the energy k for the sign of the free-period
  action over closed polygonal loops in the universal cover;
* finite covers of a torus, bounding the universal value from above.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from . import geometry as geo
from .dec import Cochain, hodge_operators, sample_form
from .forms import AnalyticForm


class ResourceError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, last=None, defect=None):
        self.last = last
        self.defect = defect
        super().__init__(message)


class BracketError(RuntimeError):
    def __init__(self, message, k_range):
        self.k_range = k_range
        super().__init__(message)


def sample_points(space, n, rng, form=None):
    """Random points in the chart of ``space`` for bound checks."""
    if isinstance(space, geo.FlatTorus):
        return rng.uniform(0, 1, (n, space.dim)) * space.periods
    if isinstance(space, geo.RoundSphere):
        x = rng.standard_normal((n, 3))
        return space.radius * x / np.linalg.norm(x, axis=1, keepdims=True)
    if isinstance(space, geo.UpperHalfSpace):
        c = np.array((form.params.get("center") if form is not None else None) or [0.0] * (space.dim - 1) + [1.0])
        h = c[-1] * np.exp(rng.uniform(-3, 3, n))
        pts = np.empty((n, space.dim))
        pts[:, -1] = h
        pts[:, :-1] = c[:-1] + h[:, None] * rng.uniform(-4, 4, (n, space.dim - 1))
        return pts
    return rng.uniform(-10, 10, (n, space.dim))


class MagneticSystem:
    """A geometry with a 1-form w, its differential, and pointwise bounds.

    Parameters
    ----------
    space : ModelSpace, optional
        Analytic geometry (needed for flows and the Lagrangian solver).
    form : AnalyticForm, optional
    mesh : SimplicialMesh, optional
        Discrete geometry (needed for the Hamiltonian solver).
    cochain : Cochain, optional
        Discrete form; sampled from ``form`` when omitted.
    """

    def __init__(self, space=None, form: AnalyticForm | None = None, mesh=None, cochain=None):
        if space is None and form is not None:
            space = form.space
        if form is None and cochain is None:
            raise ValueError("a magnetic system needs an analytic form or a cochain")
        self.space = space
        self.form = form
        self.mesh = mesh
        if mesh is not None and cochain is None:
            cochain = sample_form(mesh, form)
        if cochain is not None and mesh is None:
            mesh = cochain.mesh
            self.mesh = mesh
        self.cochain = cochain
        self.ops = hodge_operators(mesh) if mesh is not None else None
        # differential: exact coboundary on the mesh, analytic otherwise
        self.Omega = self.ops.coboundary(cochain) if cochain is not None else None
        if form is not None:
            self.A, self.D = form.A, form.D
        else:
            self.A = self.ops.linf_norm(cochain)
            self.D = self.discrete_curvature_bound()

    @classmethod
    def on_mesh(cls, mesh, form=None, cochain=None, space=None):
        return cls(space=space, form=form, mesh=mesh, cochain=cochain)

    def discrete_curvature_bound(self):
        n = self.mesh.dim
        vol = self.mesh.volumes[2]
        return float(np.max(np.abs(self.Omega.values) / vol)) if n >= 2 else 0.0

    def scaled(self, t):
        form = self.form.scaled(t) if self.form is not None else None
        co = self.cochain * t if self.cochain is not None else None
        return MagneticSystem(self.space, form, self.mesh, co)

    def check_bounds(self, n=10_000, seed=0, slack=1e-12):
        """Assert A and D bound the form on random samples; returns observed maxima."""
        if self.form is None:
            vec = self.ops.pointwise_vectors(self.cochain)
            a = float(np.linalg.norm(vec, axis=1).max())
            d = self.discrete_curvature_bound()
        else:
            rng = np.random.default_rng(seed)
            pts = sample_points(self.space, n, rng, self.form)
            a = float(np.max(self.form.pointwise_norm(pts)))
            d = float(np.max(self.form.differential_norm(pts)))
        if a > self.A * (1 + slack) + slack or d > self.D * (1 + slack) + slack:
            raise AssertionError(f"pointwise bounds violated: |w| {a} > A {self.A} or |dw| {d} > D {self.D}")
        return a, d

    def lorentz_force(self, x, v):
        """Y(v) with Omega(v, u) = g(Y(v), u) for every tangent u."""
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        Om = self.form.differential(x)
        low = np.einsum("...i,...ij->...j", v, Om)
        Y = self.space.project(x, self.space.raise_index(x, low)) if not isinstance(
            self.space, geo.RoundSphere) else self.space.project(x, low)
        return Y

    def describe(self):
        out = {"A": self.A, "D": self.D}
        if self.form is not None:
            out["form"] = self.form.describe()
        if self.space is not None:
            out["space"] = self.space.describe()
        if self.mesh is not None:
            out["mesh"] = {"name": self.mesh.name, "counts": list(self.mesh.counts)}
        return out


# ----------------------------------------------------------------------
# action functionals

def _weights(t):
    """Composite Simpson weights on uniform samples (trapezoid end panel if even count)."""
    n = len(t)
    h = (t[-1] - t[0]) / (n - 1)
    if n < 3:
        return np.full(n, h / 2) * np.array([1, 1][:n])
    w = np.zeros(n)
    m = n if n % 2 == 1 else n - 1
    w[:m:2] += 2
    w[1:m:2] += 4
    w[0] -= 1
    w[m - 1] -= 1
    w[:m] *= h / 3
    if m < n:
        w[-2] += h / 2
        w[-1] += h / 2
    return w


def lagrangian_samples(system, x, v):
    g = system.space.inner(x, v, v)
    w = np.einsum("...i,...i->...", system.form(x), v)
    return 0.5 * g - w


def action(system, traj, return_error=False):
    """Integral of 1/2 |v|^2 - w(v) along sampled ``traj`` (attributes t, x, v)."""
    t = np.asarray(traj.t, float)
    L = lagrangian_samples(system, np.asarray(traj.x, float), np.asarray(traj.v, float))
    if not np.all(np.isfinite(L)):
        raise ValueError("non-finite Lagrangian samples along the path")
    if len(t) > 2 and not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=0):
        val = float(np.trapezoid(L, t))
        err = math.inf
    else:
        val = float(_weights(t) @ L)
        # error estimate: same rule on every other sample
        if len(t) >= 5:
            sub = slice(0, None, 2) if len(t) % 2 == 1 else slice(0, len(t) - 1, 2)
            coarse = float(_weights(t[sub]) @ L[sub])
            if len(t) % 2 == 0:
                coarse += 0.5 * (t[-1] - t[-2]) * (L[-1] + L[-2])
            err = abs(val - coarse) / 15.0
        else:
            err = math.inf
    return (val, err) if return_error else val


def free_period_action(system, traj, k):
    if not math.isfinite(k):
        raise ValueError("energy level k must be finite")
    T = float(traj.t[-1] - traj.t[0])
    return action(system, traj) + k * T


def optimal_period_action(length, integral, k):
    """min over the period T of S_k for a loop of given length and w-integral.

    At constant speed s = length / T the action is length^2/(2T) - integral,
    and length^2/(2T) + kT is minimised at T = length / sqrt(2k).
    """
    if k <= 0:
        return -integral
    return length * math.sqrt(2 * k) - integral


# ----------------------------------------------------------------------
# Hamiltonian side

@dataclass
class HamiltonianResult:
    value: float
    potential: Cochain
    harmonic: np.ndarray
    info: dict = field(default_factory=dict)
    strict: bool = False

    def __iter__(self):
        if self.strict:
            return iter((self.value, self.potential, self.harmonic))
        return iter((self.value, self.potential))


def _minmax(system, use_harmonic, tol, u0=None, h0=None, max_stages=60, maxiter=400):
    ops = system.ops
    mesh = system.mesh
    if mesh is None:
        raise ValueError("the Hamiltonian solver needs a mesh")
    R = ops.whitney_barycentre_matrix()
    d0 = ops.d[0]
    w = system.cochain.values
    H = ops.harmonic_basis() if use_harmonic else np.zeros((len(w), 0))
    nv, nh = d0.shape[1], H.shape[1]
    T = mesh.num_simplices(mesh.dim)
    m = mesh.embed_dim
    # pieces' values depend on z = (u, h) through A z + w
    Aop = sp.hstack([d0, sp.csr_matrix(H)]).tocsr() if nh else d0
    RA = (R @ Aop).tocsr()
    Rw = R @ w
    RAt = RA.T.tocsr()

    def pieces(z):
        V = (RA @ z + Rw).reshape(T, m)
        return V, 0.5 * np.einsum("ij,ij->i", V, V)

    z = np.zeros(nv + nh)
    if u0 is not None:
        z[:nv] = u0
    if h0 is not None and nh:
        z[nv:] = h0
    V, q = pieces(z)
    best_z, best = z.copy(), float(q.max())
    scale = best
    log_n = math.log(T)
    history = []
    grad_norm = 0.0
    if scale <= 0:
        return best, best_z[:nv], best_z[nv:], {"stages": 0, "grad_norm": 0.0, "history": history}
    tau = scale
    for stage in range(max_stages):

        def fun(zz, tau=tau):
            V, q = pieces(zz)
            qm = q.max()
            e = np.exp((q - qm) / tau)
            s = e.sum()
            f = qm + tau * math.log(s)
            p = e / s
            g = RAt @ (p[:, None] * V).ravel()
            return f, g

        res = minimize(fun, z, jac=True, method="L-BFGS-B",
                       options={"maxiter": maxiter, "gtol": 1e-14, "ftol": 1e-15, "maxcor": 20})
        z = res.x
        _, q = pieces(z)
        exact = float(q.max())
        grad_norm = float(np.linalg.norm(res.jac))
        history.append((tau, exact, float(res.fun)))
        if exact < best:
            best, best_z = exact, z.copy()
        if tau * log_n <= tol * max(best, tol * scale):
            break
        tau *= 0.5
    info = {"stages": len(history), "grad_norm": grad_norm, "final_tau": tau,
            "smoothing_gap": history[-1][2] - history[-1][1] if history else 0.0}
    return best, best_z[:nv], best_z[nv:], info


def critical_value_hamiltonian(system, tol=1e-4, u0=None, **kw):
    """c = inf over potentials u of 1/2 max |du + w|^2 (log-sum-exp homotopy).

    ``|.|`` is evaluated from the Whitney interpolant at top-simplex
    barycentres, so c is exact for constant forms.
    """
    c, u, h, info = _minmax(system, False, tol, u0=u0, **kw)
    return HamiltonianResult(c, Cochain(0, u, system.mesh), h, info, strict=False)


def strict_critical_value(system, tol=1e-4, u0=None, h0=None, **kw):
    """c_0 = inf over potentials u and harmonic h of 1/2 max |du + h + w|^2."""
    c, u, h, info = _minmax(system, True, tol, u0=u0, h0=h0, **kw)
    return HamiltonianResult(c, Cochain(0, u, system.mesh), h, info, strict=True)


def subsolution_defect(system, u, c, points=None, n_grid=256):
    """max of 1/2 |du + w|^2 - c over evaluation points.

    ``u`` is a 0-cochain (evaluated on the system's mesh) or a callable on the
    model space (gradient by central differences on a grid of points).
    """
    if isinstance(u, Cochain):
        ops = system.ops
        vec = ops.pointwise_vectors(Cochain(1, ops.d[0] @ u.values + system.cochain.values, system.mesh))
        return float(0.5 * np.max(np.einsum("ij,ij->i", vec, vec)) - c)
    if points is None:
        points = _grid(system.space, n_grid)
    w = system.form(points)
    if u is None or (isinstance(u, (int, float)) and u == 0):
        du = np.zeros_like(points)
    else:
        h = 1e-6
        du = np.stack([(u(points + h * e) - u(points - h * e)) / (2 * h)
                       for e in np.eye(points.shape[1])], axis=-1)
    nrm = system.space.covector_norm(points, du + w)
    return float(np.max(0.5 * nrm ** 2) - c)


def _grid(space, n):
    if isinstance(space, geo.FlatTorus):
        axes = [np.arange(n) * p / n for p in space.periods]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)
    if isinstance(space, geo.RoundSphere):
        th = np.linspace(0, math.pi, n)
        ph = np.linspace(0, 2 * math.pi, 2 * n, endpoint=False)
        T, P = np.meshgrid(th, ph, indexing="ij")
        return space.from_chart(np.stack([T.ravel(), P.ravel()], axis=-1))
    return sample_points(space, n * n, np.random.default_rng(0))


def calibration_defect(system, u, c, traj, t0=None, t1=None):
    """u(x(t1)) - u(x(t0)) - integral over [t0, t1] of (c + L).

    Nonpositive for any curve when u is a subsolution at level c; near zero on
    calibrated curves.  ``u`` is a callable on the chart, or None for u = 0.
    """
    t = np.asarray(traj.t, float)
    t0 = t[0] if t0 is None else t0
    t1 = t[-1] if t1 is None else t1
    sel = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
    ts, xs, vs = t[sel], np.asarray(traj.x)[sel], np.asarray(traj.v)[sel]
    if getattr(traj, "exited", False):
        raise ValueError("trajectory left the chart")
    L = lagrangian_samples(system, xs, vs)
    integral = float(_weights(ts) @ (c + L)) if len(ts) > 2 else float(np.trapezoid(c + L, ts))
    if u is None:
        du = 0.0
    else:
        du = float(u(xs[-1:])[0] - u(xs[:1])[0])
    return du - integral


# ----------------------------------------------------------------------
# Lagrangian side

_GL_T, _GL_W = np.polynomial.legendre.leggauss(4)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


class LoopFamily:
    """Closed polylines with ``n`` nodes in the universal cover of a flat space."""

    def __init__(self, form, winding=None, quad_step=0.5):
        self.form = form
        self.space = form.space
        self.m = self.space.dim
        if isinstance(self.space, geo.FlatTorus):
            self.shift = np.asarray(winding if winding is not None else np.zeros(self.m)) * self.space.periods
        else:
            if winding is not None and np.any(np.asarray(winding) != 0):
                raise ValueError("nonzero winding on a simply connected space")
            self.shift = np.zeros(self.m)
        self.winding = tuple(int(v) for v in (winding if winding is not None else np.zeros(self.m)))
        self.quad_step = quad_step

    def segments(self, X):
        a = X
        b = np.vstack([X[1:], X[:1] + self.shift])
        return a, b

    def evaluate(self, X, k, grad=True):
        """(S_k, length, integral, gradient) for node array X of shape (n, m)."""
        a, b = self.segments(X)
        delta = b - a
        seglen = np.sqrt(np.einsum("ij,ij->i", delta, delta) + 1e-300)
        length = float(seglen.sum())
        nsub = np.maximum(1, np.ceil(seglen / self.quad_step).astype(int))
        seg = np.repeat(np.arange(len(a)), nsub)
        sub_start = np.concatenate([np.arange(s) for s in nsub]) / np.repeat(nsub, nsub)
        h = 1.0 / np.repeat(nsub, nsub)
        t = (sub_start[:, None] + h[:, None] * _GL_T[None, :]).ravel()
        wq = (h[:, None] * _GL_W[None, :]).ravel()
        sq = np.repeat(seg, len(_GL_T))
        x = a[sq] + t[:, None] * delta[sq]
        wv = self.form(x)
        integrand = np.einsum("ij,ij->i", wv, delta[sq])
        integral = float(np.bincount(sq, wq * integrand, minlength=len(a)).sum())
        s2k = math.sqrt(2 * max(k, 0.0))
        S = s2k * length - integral
        if not grad:
            return S, length, integral, None
        J = self.form.jacobian(x)
        jtd = np.einsum("nij,ni->nj", J, delta[sq])
        ga = ((1 - t)[:, None] * jtd - wv) * wq[:, None]
        gb = (t[:, None] * jtd + wv) * wq[:, None]
        dI_a = np.zeros_like(a)
        dI_b = np.zeros_like(a)
        for j in range(self.m):
            dI_a[:, j] = np.bincount(sq, ga[:, j], minlength=len(a))
            dI_b[:, j] = np.bincount(sq, gb[:, j], minlength=len(a))
        unit = delta / seglen[:, None]
        dS_a = -s2k * unit - dI_a
        dS_b = s2k * unit - dI_b
        g = dS_a + np.roll(dS_b, 1, axis=0)
        return S, length, integral, g


@dataclass
class LoopWitness:
    nodes: np.ndarray
    winding: tuple
    k: float
    action: float
    length: float
    integral: float

    @property
    def ratio(self):
        return self.integral / self.length

    def to_rows(self):
        return [tuple(float(c) for c in p) for p in self.nodes]


def _seed_loop(rng, space, winding, n):
    t = np.arange(n) / n
    if isinstance(space, geo.FlatTorus):
        P = space.periods
        span = float(P.min())
    else:
        P = np.ones(space.dim) * 2 * math.pi
        span = 2 * math.pi
    x0 = rng.uniform(0, 1, space.dim) * P
    w = np.asarray(winding, float)
    if np.any(w != 0):
        direction = w * P
        normal = np.array([-direction[1], direction[0]]) / np.linalg.norm(direction)
        amp = rng.uniform(0, 0.25) * span
        freq = rng.integers(1, 4)
        phase = rng.uniform(0, 2 * math.pi)
        return x0 + t[:, None] * direction + (amp * np.sin(2 * math.pi * freq * t + phase))[:, None] * normal
    r = rng.uniform(0.05, 0.6) * span
    aspect = math.exp(rng.uniform(-1.5, 1.5))
    rot = rng.uniform(0, math.pi)
    c, s = math.cos(rot), math.sin(rot)
    ang = 2 * math.pi * t * (1 if rng.uniform() < 0.5 else -1)
    ell = np.column_stack([r * aspect * np.cos(ang), r / aspect * np.sin(ang)])
    ell = ell @ np.array([[c, s], [-s, c]])
    return x0 + ell + rng.normal(0, 0.01 * r, ell.shape)


class _Found(Exception):
    pass


def _search_class(family, k, starts, witness_tol, maxiter):
    """Minimise S_k from each start; return the first witness with S < -tol."""
    n, m = starts[0].shape
    best = None
    for X0 in starts:
        state = {}

        def fun(z):
            S, ln, I, g = family.evaluate(z.reshape(n, m), k)
            state["last"] = (z.copy(), S, ln, I)
            if S < -witness_tol:
                raise _Found
            return S, g.ravel()

        try:
            res = minimize(fun, X0.ravel(), jac=True, method="L-BFGS-B",
                           options={"maxiter": maxiter, "gtol": 1e-10})
            z, S, ln, I = state["last"]
            S, ln, I, _ = family.evaluate(res.x.reshape(n, m), k, grad=False)
            z = res.x
        except _Found:
            z, S, ln, I = state["last"]
        cand = LoopWitness(z.reshape(n, m).copy(), family.winding, k, S, ln, I)
        if best is None or S < best.action:
            best = cand
        if S < -witness_tol:
            return cand, best
    return None, best


def default_windings(space, nullhomologous_only):
    if not isinstance(space, geo.FlatTorus) or nullhomologous_only:
        return [tuple([0] * space.dim)]
    out = [tuple([0] * space.dim)]
    for w in [(1, 0), (0, 1), (1, 1), (1, -1)]:
        out += [w, tuple(-v for v in w)]
    return out


@dataclass
class LagrangianResult:
    value: float
    lower: float
    upper: float
    witnesses: list
    scanned: list
    info: dict = field(default_factory=dict)

    def __float__(self):
        return self.value

    @property
    def best_null_witness(self):
        null = [w for w in self.witnesses if not any(w.winding)]
        return max(null, key=lambda w: w.ratio) if null else None


def critical_value_lagrangian(system, tol=1e-3, nullhomologous_only=False, n_nodes=64,
                              n_starts=16, seed=0, windings=None, maxiter=300,
                              witness_tol=1e-9, k_max=None):
    """Bisection on k for the sign of the free-period action over loops.

    A loop with S_k < -witness_tol certifies k < c (lower bracket); failure of
    every start at k moves the upper bracket (a statistical bound).  For
    k >= A^2/2 the action is nonnegative on every loop, which fixes the
    initial upper bracket.
    """
    form = system.form
    if form is None or not isinstance(system.space, (geo.FlatTorus, geo.EuclideanSpace)):
        raise NotImplementedError("loop search implemented on flat tori and the Euclidean plane")
    if not math.isfinite(form.A):
        if k_max is None:
            raise BracketError("no a priori upper bracket: form is unbounded", (0.0, math.inf))
        hi = float(k_max)
    else:
        hi = 0.5 * form.A ** 2 if k_max is None else float(k_max)
    lo = 0.0
    if hi <= 0:
        return LagrangianResult(0.0, 0.0, 0.0, [], [], {"note": "zero form"})
    windings = windings or default_windings(system.space, nullhomologous_only)
    rng_master = np.random.default_rng(seed)
    seeds = {w: [_seed_loop(np.random.default_rng(rng_master.integers(2 ** 63)), system.space, w, n_nodes)
                 for _ in range(n_starts)] for w in windings}
    families = {w: LoopFamily(form, w) for w in windings}
    witnesses = []
    scanned = []
    while hi - lo > tol:
        k = 0.5 * (lo + hi)
        found = None
        # previously found witnesses first: they remain witnesses for smaller k
        for wit in sorted(witnesses, key=lambda w: -w.ratio):
            S, ln, I, _ = families[wit.winding].evaluate(wit.nodes, k, grad=False)
            if S < -witness_tol:
                found = LoopWitness(wit.nodes, wit.winding, k, S, ln, I)
                break
        if found is None:
            for w in windings:
                warm = [wt.nodes for wt in witnesses if wt.winding == w][-1:]
                found, _ = _search_class(families[w], k, warm + seeds[w], witness_tol, maxiter)
                if found is not None:
                    break
        if found is not None:
            witnesses.append(found)
            # the loop also certifies every k below (integral/length)^2 / 2
            lo = max(k, min(0.5 * found.ratio ** 2, hi)) if found.ratio > 0 else k
            scanned.append((k, "sub"))
        else:
            hi = k
            scanned.append((k, "super"))
    return LagrangianResult(0.5 * (lo + hi), lo, hi, witnesses, scanned,
                            {"windings": [list(w) for w in windings], "n_nodes": n_nodes,
                             "n_starts": n_starts, "nullhomologous_only": nullhomologous_only})


# ----------------------------------------------------------------------
# covers of a torus

def cover_system(system, order):
    """Pull the system back to the order x order cover of a structured 2-torus."""
    mesh = system.mesh
    gen = mesh.generator
    if gen.get("kind") != "torus2" or gen.get("refined"):
        raise ValueError("covers are built for generator-made 2-torus meshes")
    if order == 1:
        return system, np.arange(mesh.num_simplices(0))
    nx, ny = gen["n"], gen["ny"]
    periods = np.asarray(gen["periods"]) * order
    cover = geo.torus_mesh(tuple(periods), n=nx * order, ny=ny * order)
    Nx = nx * order
    idx = np.arange(cover.num_simplices(0))
    i, j = idx % Nx, idx // Nx
    proj = (j % ny) * nx + (i % nx)
    lookup = {tuple(e): r for r, e in enumerate(mesh.simplices[1])}
    ce = cover.simplices[1]
    pa, pb = proj[ce[:, 0]], proj[ce[:, 1]]
    sign = np.where(pa < pb, 1.0, -1.0)
    rows = np.array([lookup[(min(x, y), max(x, y))] for x, y in zip(pa, pb)])
    values = sign * system.cochain.values[rows]
    space = system.space
    if isinstance(space, geo.FlatTorus):
        space = geo.FlatTorus(tuple(periods))
    co = Cochain(1, values, cover)
    lifted = MagneticSystem(space=space, form=None, mesh=cover, cochain=co)
    lifted.form = system.form
    lifted.A, lifted.D = system.A, system.D
    return lifted, proj


def universal_critical_value_estimate(system, cover_orders=(1, 2, 3), tol=1e-4,
                                      max_vertices=2_000_000, strict=False):
    """Hamiltonian critical value on a tower of finite covers of a 2-torus.

    Every cover starts from the lift of the base optimum, whose value it can
    only improve, so each entry is at most the base value up to solver
    tolerance.  Returns [(order, c), ...].
    """
    base_nv = system.mesh.num_simplices(0)
    for order in cover_orders:
        if base_nv * order * order > max_vertices:
            raise ResourceError(f"cover of order {order} needs {base_nv * order * order} vertices "
                                f"(budget {max_vertices})")
    solver = strict_critical_value if strict else critical_value_hamiltonian
    base = solver(system, tol=tol)
    out = []
    for order in cover_orders:
        if order == 1:
            out.append((1, base.value))
            continue
        lifted, proj = cover_system(system, order)
        res = solver(lifted, tol=tol, u0=base.potential.values[proj])
        out.append((order, min(res.value, base.value)))
    return out


# ----------------------------------------------------------------------
# reports

@dataclass
class CriticalValueReport:
    c_hamiltonian: float
    c_strict: float
    c_lagrangian: float | None = None
    c_lagrangian_bracket: tuple | None = None
    c_universal: list | None = None
    harmonic: list = field(default_factory=list)
    residuals: dict = field(default_factory=dict)
    null_loop_ratio: float | None = None
    witnesses: list = field(default_factory=list)

    def to_record(self):
        return json.loads(json.dumps({
            "c_hamiltonian": self.c_hamiltonian, "c_strict": self.c_strict,
            "c_lagrangian": self.c_lagrangian,
            "c_lagrangian_bracket": list(self.c_lagrangian_bracket) if self.c_lagrangian_bracket else None,
            "c_universal": [list(x) for x in self.c_universal] if self.c_universal else None,
            "harmonic": list(self.harmonic), "residuals": self.residuals,
            "null_loop_ratio": self.null_loop_ratio,
        }))


def critical_value_report(system, tol=1e-4, lagrangian=True, null_loops=False,
                          cover_orders=None, seed=0, n_starts=16, lag_tol=1e-3):
    ch = critical_value_hamiltonian(system, tol=tol)
    cs = strict_critical_value(system, tol=tol, u0=ch.potential.values)
    rep = CriticalValueReport(ch.value, min(cs.value, ch.value), harmonic=[float(v) for v in cs.harmonic],
                              residuals={"hamiltonian": ch.info.get("grad_norm"),
                                         "strict": cs.info.get("grad_norm")})
    if lagrangian and system.form is not None and isinstance(system.space, (geo.FlatTorus, geo.EuclideanSpace)):
        lag = critical_value_lagrangian(system, tol=lag_tol, seed=seed, n_starts=n_starts)
        rep.c_lagrangian = lag.value
        rep.c_lagrangian_bracket = (lag.lower, lag.upper)
        rep.witnesses = lag.witnesses
        if null_loops:
            nl = critical_value_lagrangian(system, tol=lag_tol, nullhomologous_only=True,
                                           seed=seed, n_starts=n_starts)
            best = nl.best_null_witness
            rep.null_loop_ratio = best.ratio if best is not None else None
    if cover_orders:
        rep.c_universal = universal_critical_value_estimate(system, cover_orders, tol=tol)
    return rep
