"""Magnetic geodesic flow: integration, time averages, comass, periodic orbits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.stats import qmc

from . import geometry as geo


class ChartExit(RuntimeError):
    pass


@dataclass
class Trajectory:
    """Uniformly sampled orbit: times t (N,), positions x (N, m), velocities v (N, m)."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    speed: float
    system: object = None
    meta: dict = field(default_factory=dict)

    @property
    def exited(self):
        return bool(self.meta.get("exited", False))

    @property
    def horizon(self):
        return float(self.t[-1] - self.t[0])

    def speeds(self):
        return self.system.space.norm(self.x, self.v)

    def to_csv(self, path):
        m = self.x.shape[1]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t"] + [f"x{i}" for i in range(m)] + [f"v{i}" for i in range(m)])
            for t, x, v in zip(self.t, self.x, self.v):
                wr.writerow([repr(float(t))] + [repr(float(c)) for c in x] + [repr(float(c)) for c in v])


def lorentz_force(system, x, v, check=True):
    """Y(v) defined by Omega(v, u) = g(Y(v), u) for all tangent u.

    With Omega = B dx^dy in the plane, Y(s, 0) = (0, B s).
    """
    Y = system.lorentz_force(x, v)
    if check and math.isfinite(system.D):
        sp_ = system.space
        ny = np.atleast_1d(sp_.norm(x, Y))
        nv = np.atleast_1d(sp_.norm(x, v))
        if np.any(ny > system.D * nv * (1 + 1e-9) + 1e-300):
            raise AssertionError("Lorentz force exceeds D |v|")
    return Y


def _acceleration(system, X, V, check):
    a = system.space.geodesic_acceleration(X, V)
    if system.form is not None:
        a = a + lorentz_force(system, X, V, check=check)
    return a


def _in_chart(space, X):
    ok = np.all(np.isfinite(X), axis=-1)
    if isinstance(space, geo.UpperHalfSpace):
        ok &= X[..., -1] > 0
    return ok


def _rk4_run(system, X, V, dt, nsteps, stride, check=True, project=False):
    """Batched RK4.  Returns sample arrays (S, B, m) and per-orbit exit step (or -1)."""
    space = system.space
    nsamp = nsteps // stride + 1
    B = X.shape[0]
    xs = np.empty((nsamp, B, X.shape[1]))
    vs = np.empty_like(xs)
    xs[0], vs[0] = X, V
    exit_at = np.full(B, -1)
    alive = np.ones(B, dtype=bool)
    s0 = space.norm(X, V)
    for step in range(1, nsteps + 1):
        k1x, k1v = V, _acceleration(system, X, V, check)
        x2, v2 = X + 0.5 * dt * k1x, V + 0.5 * dt * k1v
        bad = ~_in_chart(space, x2)
        if bad.any():
            x2[bad] = X[bad]
        k2x, k2v = v2, _acceleration(system, x2, v2, check)
        x3, v3 = X + 0.5 * dt * k2x, V + 0.5 * dt * k2v
        bad |= ~_in_chart(space, x3)
        x3[bad] = X[bad]
        k3x, k3v = v3, _acceleration(system, x3, v3, check)
        x4, v4 = X + dt * k3x, V + dt * k3v
        bad |= ~_in_chart(space, x4)
        x4[bad] = X[bad]
        k4x, k4v = v4, _acceleration(system, x4, v4, check)
        Xn = X + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        Vn = V + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        bad |= ~_in_chart(space, Xn)
        newly = bad & alive
        if newly.any():
            exit_at[newly] = step
            alive &= ~bad
        Xn[~alive] = X[~alive]
        Vn[~alive] = V[~alive]
        if project:
            if isinstance(space, geo.RoundSphere):
                Xn = space.radius * Xn / np.linalg.norm(Xn, axis=1, keepdims=True)
                Vn = space.project(Xn, Vn)
            Vn = Vn * (s0 / space.norm(Xn, Vn))[:, None]
        X, V = Xn, Vn
        if step % stride == 0:
            xs[step // stride], vs[step // stride] = X, V
    return xs, vs, exit_at


def integrate_batch(system, X0, V0, T, sample_dt=None, dt=None, drift_tol=1e-8,
                    max_halvings=12, project=False, check=True):
    """Integrate many orbits at once with step halving on the speed drift.

    Drift tolerance is relative and scales with the horizon: ``drift_tol``
    per 100 time units (never less than ``drift_tol``).
    Returns (t, xs (S, B, m), vs, exit_step, info).
    """
    X0 = np.atleast_2d(np.asarray(X0, float))
    V0 = np.atleast_2d(np.asarray(V0, float))
    space = system.space
    if not np.all(_in_chart(space, X0)):
        raise ChartExit("initial point outside the chart")
    s0 = space.norm(X0, V0)
    if np.any(s0 <= 0):
        raise ValueError("initial speed must be positive")
    T = float(T)
    if sample_dt is None:
        sample_dt = abs(T) / 1000 if T != 0 else 1.0
    n_samples = max(1, int(round(abs(T) / sample_dt)))
    sample_dt = T / n_samples
    if dt is None:
        # initial guess: a small fraction of the faster of the geodesic and cyclotron scales
        scale = float(np.max(s0)) * (1.0 + (system.D if math.isfinite(system.D) else 1.0))
        dt = 0.05 / max(scale, 1e-12)
    substeps = max(1, int(math.ceil(abs(sample_dt) / dt)))
    allowed = drift_tol * max(1.0, abs(T) / 100.0)
    for _ in range(max_halvings + 1):
        h = sample_dt / substeps
        xs, vs, exit_at = _rk4_run(system, X0.copy(), V0.copy(), h, n_samples * substeps, substeps,
                                   check=check, project=project)
        speeds = space.norm(xs, vs)
        valid = np.ones_like(speeds, dtype=bool)
        for b, e in enumerate(exit_at):
            if e >= 0:
                valid[(e // substeps):, b] = False
        drift = float(np.max(np.where(valid, np.abs(speeds / s0[None, :] - 1), 0.0)))
        if drift <= allowed:
            break
        substeps *= 2
    t = np.arange(n_samples + 1) * sample_dt
    info = {"step": float(sample_dt / substeps), "scheme": "rk4", "drift": drift,
            "drift_allowed": allowed, "substeps": substeps, "converged": drift <= allowed}
    return t, xs, vs, exit_at // substeps if np.any(exit_at >= 0) else exit_at, info


def integrate(system, x0, v0, T, sample_dt=None, dt=None, drift_tol=1e-8, project=False):
    """Magnetic geodesic from (x0, v0) over time T (negative T integrates backwards).

    Returns a Trajectory; on leaving the chart the trajectory is truncated
    and ``meta['exited']`` is set.
    """
    t, xs, vs, exit_at, info = integrate_batch(system, x0, v0, T, sample_dt, dt, drift_tol,
                                               project=project)
    x, v = xs[:, 0], vs[:, 0]
    e = int(exit_at[0])
    info["exited"] = e >= 0
    if e >= 0:
        t, x, v = t[:e], x[:e], v[:e]
    s = float(system.space.norm(np.asarray(x0, float), np.asarray(v0, float)))
    return Trajectory(t, x, v, s, system, info)


def _cumulative(t, f):
    """Cumulative trapezoid integral of samples f over t, starting at 0."""
    out = np.zeros_like(f)
    out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t)[(slice(None),) + (None,) * (f.ndim - 1)], axis=0)
    return out


def running_averages(traj, form):
    x, v = traj.x, traj.v
    integrand = np.einsum("...i,...i->...", form(x), v)
    I = _cumulative(traj.t - traj.t[0], integrand)
    tt = traj.t - traj.t[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        avg = I / (traj.speed * tt)
    return tt, avg


def time_average(traj, form, min_horizon=10.0, details=False):
    """(1 / sT) |integral of w(v) dt|, limsup taken as the max over [T/10, T].

    With ``details`` returns (value, signed value at T, tail fluctuation).
    """
    if traj.horizon < min_horizon:
        raise ValueError(f"horizon {traj.horizon} shorter than the minimum {min_horizon}")
    tt, avg = running_averages(traj, form)
    tail = tt >= 0.1 * tt[-1]
    vals = np.abs(avg[tail])
    value = float(vals.max())
    A = getattr(form, "A", math.inf)
    if value > A * (1 + 1e-6) + 1e-12:
        raise AssertionError(f"time average {value} exceeds the pointwise bound {A}")
    if details:
        return value, float(avg[-1]), float(vals.max() - vals.min())
    return value


def _bundle_seeds(space, n, seed):
    """Low-discrepancy unit-speed initial conditions over the unit sphere bundle."""
    sob = qmc.Sobol(d=3, scramble=True, seed=seed)
    u = sob.random(n)
    return _bundle_map(space, u)


def _bundle_map(space, u):
    u = np.atleast_2d(u)
    th = 2 * math.pi * u[:, 2]
    if isinstance(space, geo.FlatTorus):
        X = u[:, :2] * space.periods
        V = np.column_stack([np.cos(th), np.sin(th)])
        return X, V
    if isinstance(space, geo.RoundSphere):
        z = 2 * u[:, 0] - 1
        ph = 2 * math.pi * u[:, 1]
        r = np.sqrt(np.clip(1 - z * z, 0, None))
        X = np.column_stack([r * np.cos(ph), r * np.sin(ph), z]) * space.radius
        e1 = np.column_stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)])
        e2 = np.cross(X / space.radius, e1)
        V = np.cos(th)[:, None] * e1 + np.sin(th)[:, None] * e2
        return X, V
    raise NotImplementedError("unit bundle sampling for flat tori and round spheres")


@dataclass
class ComassReport:
    value: float
    speed: float
    averages: np.ndarray
    signed: np.ndarray
    refined: float | None
    drift: float

    def __float__(self):
        return self.value

    def quantiles(self):
        return {q: float(np.quantile(self.averages, q)) for q in (0.0, 0.5, 0.9, 1.0)}


def comass_estimate(system, s, n_orbits=64, horizon=200.0, seed=0, refine=False, sample_dt=0.1,
                    refine_evals=40):
    """Max of the orbit time averages at speed s over seeded unit-bundle samples.

    The best seed is then improved by a local search over its initial
    condition, since orbits that realise the supremum may be unstable and
    have measure-zero basins.
    """
    if not s > 0:
        raise ValueError("speed must be positive")
    if system.form is None or getattr(system.form, "A", 1) == 0:
        return ComassReport(0.0, s, np.zeros(n_orbits), np.zeros(n_orbits), None, 0.0)
    X, V = _bundle_seeds(system.space, n_orbits, seed)
    u_seeds = qmc.Sobol(d=3, scramble=True, seed=seed).random(n_orbits)
    t, xs, vs, _, info = integrate_batch(system, X, s * V, horizon, sample_dt=sample_dt)
    avgs = np.empty(n_orbits)
    signed = np.empty(n_orbits)
    for b in range(n_orbits):
        tr = Trajectory(t, xs[:, b], vs[:, b], s, system)
        avgs[b], signed[b], _ = time_average(tr, system.form, min_horizon=min(10.0, horizon), details=True)
    best = float(avgs.max())
    drift = info["drift"]
    refined = None
    if refine:
        u0 = u_seeds[int(np.argmax(avgs))]

        def neg(u):
            Xr, Vr = _bundle_map(system.space, np.mod(u, 1.0))
            tr = integrate(system, Xr[0], s * Vr[0], horizon, sample_dt=sample_dt)
            return -time_average(tr, system.form, min_horizon=min(10.0, horizon))

        res = minimize(neg, u0, method="Nelder-Mead",
                       options={"xatol": 1e-5, "fatol": 1e-7, "maxfev": refine_evals, "initial_simplex":
                                u0 + np.vstack([np.zeros(3), 0.02 * np.eye(3)])})
        refined = float(-res.fun)
        best = max(best, refined)
    return ComassReport(best, s, avgs, signed, refined, drift)


@dataclass
class PeriodicOrbit:
    x0: np.ndarray
    v0: np.ndarray
    period: float
    closure_defect: float
    winding: tuple
    contractible: bool
    trajectory: Trajectory | None = None


def _flow_map(system, x0, v0, T, n_steps):
    xs, vs, exit_at = _rk4_run(system, x0[None, :], v0[None, :], T / n_steps, n_steps, n_steps, check=False)
    if exit_at[0] >= 0:
        raise ChartExit("orbit left the chart")
    return xs[-1, 0], vs[-1, 0]


def find_periodic_orbit(system, s, seeds, step=0.02, max_nfev=200, want_contractible=None):
    """Shooting for closed orbits at speed s on a 2-dimensional space.

    ``seeds`` is a list of (x0, angle, T) guesses with T > 0, and the return
    time is searched in [T/2, 2T].  The unknowns are the
    start point, initial direction and return time; residual is the change of
    state modulo the period lattice.  Returns the first orbit with closure
    defect <= 1e-6 s (respecting ``want_contractible`` if given), else None.
    """
    space = system.space
    if space.dim != 2:
        raise NotImplementedError("periodic orbit search on 2-dimensional spaces")
    periods = space.periods if isinstance(space, geo.FlatTorus) else None

    def unit(x, ang):
        g = space.metric(x)
        e = np.array([math.cos(ang), math.sin(ang)])
        return e / math.sqrt(e @ g @ e)

    def wrap(dx):
        if periods is None:
            return dx, np.zeros(2)
        wind = np.round(dx / periods)
        return dx - wind * periods, wind

    for x0, ang0, T0 in seeds:
        x0 = np.asarray(x0, float)
        n_steps = max(50, int(math.ceil(abs(T0) / step)))
        cache = {}

        def evaluate(p, h=1e-7):
            """Residual and Jacobian from one batched run of p and its perturbations."""
            key = p.tobytes()
            if key in cache:
                return cache[key]
            P = np.tile(p, (4, 1))
            P[1:, :3] += h * np.eye(3)
            X = P[:, :2].copy()
            V = np.stack([s * unit(P[i, :2], P[i, 2]) for i in range(4)])
            xs, vs, exit_at = _rk4_run(system, X, V, p[3] / n_steps, n_steps, n_steps, check=False)
            if np.any(exit_at >= 0):
                raise ChartExit("orbit left the chart")
            xe, ve = xs[-1], vs[-1]
            R = np.empty((4, 4))
            for i in range(4):
                R[i, :2] = wrap(xe[i] - X[i])[0]
                R[i, 2:] = ve[i] - V[i]
            J = np.empty((4, 4))
            J[:, :3] = ((R[1:] - R[0]) / h).T
            # d/dT of the end state is the vector field there
            J[:2, 3] = ve[0]
            J[2:, 3] = _acceleration(system, xe[:1], ve[:1], False)[0]
            cache.clear()
            cache[key] = (R[0], J)
            return cache[key]

        def state(p):
            x, ang, T = p[:2], p[2], p[3]
            v = s * unit(x, ang)
            xe, ve = _flow_map(system, x, v, T, n_steps)
            dx, wind = wrap(xe - x)
            return np.concatenate([dx, ve - v]), wind, v

        def resid(p):
            try:
                return evaluate(p)[0]
            except ChartExit:
                return np.full(4, 1e3)

        def jac(p):
            try:
                return evaluate(p)[1]
            except ChartExit:
                return np.eye(4)

        p0 = np.array([x0[0], x0[1], ang0, T0])
        try:
            # the return time is kept near its guess so the solver cannot collapse to T = 0
            lo = [-np.inf, -np.inf, -np.inf, 0.5 * T0]
            hi = [np.inf, np.inf, np.inf, 2.0 * T0]
            sol = least_squares(resid, p0, jac=jac, bounds=(lo, hi), xtol=1e-14, ftol=1e-14, gtol=1e-14,
                                max_nfev=max_nfev)
        except ChartExit:
            continue
        try:
            r, wind, v = state(sol.x)
        except ChartExit:
            continue
        defect = float(np.linalg.norm(r))
        T = float(sol.x[3])
        if not (defect <= 1e-6 * s and T > 1e-3):
            continue
        contractible = not np.any(wind != 0)
        if want_contractible is not None and contractible != want_contractible:
            continue
        traj = integrate(system, sol.x[:2], v, T, sample_dt=T / 200)
        return PeriodicOrbit(sol.x[:2], v, T, defect, tuple(int(w) for w in wind), contractible, traj)
    return None


def random_orbit_seeds(space, n, T_range, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        if isinstance(space, geo.FlatTorus):
            x0 = rng.uniform(0, 1, 2) * space.periods
        else:
            x0 = rng.uniform(-1, 1, 2)
        out.append((x0, rng.uniform(0, 2 * math.pi), rng.uniform(*T_range)))
    return out
