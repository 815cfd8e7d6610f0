"""Scenario orchestration, run records and the verdict table.

A scenario is executed stage by stage (geometry, dec, spectrum, mane,
flow, shadow, isoperimetric, verify).  Each analysis stores either a result
dictionary or ``{"error": {...}}``.  Records are plain JSON with sorted
keys and no wall-clock data, so a fixed seed gives identical bytes;
timings go to a sidecar file.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import dec, forms, geometry as geo
from .config import RunConfig, Scenario


# ---------------------------------------------------------------- serialization

def clean(obj):
    """Convert numpy scalars/arrays and tuples into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(record):
    return json.dumps(clean(record), sort_keys=True, ensure_ascii=False, allow_nan=False)


def _num(x):
    if isinstance(x, str):
        return float(x)
    return x


# ---------------------------------------------------------------- stages

class Context:
    """Mutable per-scenario state shared between stages."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.mesh = None
        self.space = None
        self.form = None
        self.cochain = None
        self.system = None
        self.eigenpairs = None
        self.record = {}


def build_geometry(spec):
    kind = spec.get("kind")
    g = spec.get
    if kind == "torus2":
        periods = tuple(g("periods", (2 * math.pi, 2 * math.pi)))
        mesh = geo.torus_mesh(periods, n=int(g("n", 32)), ny=g("ny"))
        return mesh, geo.FlatTorus(periods)
    if kind == "torus3":
        p = float(g("period", 2 * math.pi))
        return geo.torus3_mesh(p, n=int(g("n", 8))), geo.FlatTorus((p, p, p))
    if kind == "sphere":
        r = float(g("radius", 1.0))
        return geo.icosphere(int(g("subdivisions", 3)), r), geo.RoundSphere(r)
    if kind == "tetrahedron":
        return geo.tetrahedron_surface(float(g("side", 1.0))), None
    if kind == "file":
        mesh = geo.read_mesh(g("file"))
        space = geo.FlatTorus(tuple(mesh.periods)) if mesh.periods is not None else None
        return mesh, space
    if kind == "plane":
        return None, geo.EuclideanSpace(2)
    if kind == "hyperbolic":
        return None, geo.UpperHalfSpace(int(g("dim", 2)))
    raise ValueError(f"unknown geometry kind {kind!r}")


def stage_geometry(ctx):
    spec = ctx.sc.geometry
    if spec is None:
        return None
    ctx.mesh, ctx.space = build_geometry(spec)
    out = {"kind": spec.get("kind"), "space": ctx.space.describe() if ctx.space is not None else None}
    if ctx.mesh is not None:
        m = ctx.mesh
        ops = dec.hodge_operators(m)
        out.update({"counts": list(m.counts), "euler": m.euler_characteristic(),
                    "volume": m.total_volume(), "h_max": m.quality()["h_max"],
                    "well_centred": bool(np.all(ops.well_centred)),
                    "b1": int(ops.harmonic_basis(seed=ctx.sc.seed).shape[1]) if m.dim >= 2 else 0})
    return out


def _eigenpairs(ctx, count):
    from .spectral import coexact_spectrum

    if ctx.eigenpairs is None or len(ctx.eigenpairs) < count:
        ctx.eigenpairs = coexact_spectrum(ctx.mesh, count, seed=ctx.sc.seed)
    return ctx.eigenpairs


def stage_form(ctx):
    spec = ctx.sc.form
    if spec is None:
        return None
    kind = spec.get("kind")
    scale = float(spec.get("scale", 1.0))
    out = {"kind": kind}
    if kind == "eigenform":
        if ctx.mesh is None:
            raise ValueError("eigenform request needs a mesh")
        pair = _eigenpairs(ctx, int(spec.get("index", 0)) + 1)[int(spec.get("index", 0))]
        ctx.cochain = pair.form * scale
        out["eigenvalue"] = pair.value
    elif kind == "cochain":
        if ctx.mesh is None:
            raise ValueError("cochain file needs a mesh")
        ctx.cochain = dec.read_cochain(spec["file"], ctx.mesh) * scale
    else:
        params = {k: v for k, v in spec.items() if k not in ("scale",)}
        if kind in ("zero", "constant") and isinstance(ctx.space, geo.FlatTorus):
            params.setdefault("periods", tuple(ctx.space.periods))
        f = forms.form_from_spec(params)
        if ctx.space is not None and f.space.describe() != ctx.space.describe():
            raise ValueError(f"form {kind!r} lives on {f.space.describe()}, geometry is {ctx.space.describe()}")
        ctx.form = f.scaled(scale) if scale != 1.0 else f
        out.update({"A": ctx.form.A, "D": ctx.form.D, "params": ctx.form.describe()})
        if ctx.mesh is not None:
            ctx.cochain = dec.sample_form(ctx.mesh, ctx.form)
    if ctx.cochain is not None:
        ops = dec.hodge_operators(ctx.mesh)
        exact, coexact, harmonic = ops.hodge_decompose(ctx.cochain)
        out.update({"l2": ops.l2_norm(ctx.cochain), "linf": ops.linf_norm(ctx.cochain),
                    "l2_exact": ops.l2_norm(exact), "l2_coexact": ops.l2_norm(coexact),
                    "l2_harmonic": ops.l2_norm(harmonic)})
    return out


def stage_spectrum(ctx):
    from .spectral import curl_spectrum, mvi_ratio

    sc = ctx.sc
    count = int(sc.opt("spectrum", "count", 6))
    pairs = _eigenpairs(ctx, count)[:count]
    out = {"values": [p.value for p in pairs], "residuals": [p.residual for p in pairs],
           "coexactness": [p.coexactness for p in pairs], "gap": pairs[0].value,
           "mvi_ratio": mvi_ratio(pairs[0].form)}
    if ctx.mesh.dim == 3 and sc.opt("spectrum", "curl", True):
        ccount = int(sc.opt("spectrum", "curl_count", 5))
        cp = curl_spectrum(ctx.mesh, ccount, seed=sc.seed)
        out["curl"] = [p.value for p in cp]
        out["curl_residuals"] = [p.residual for p in cp]
    return out


def _system(ctx):
    from .mane import MagneticSystem

    if ctx.system is None:
        ctx.system = MagneticSystem(space=ctx.space if ctx.form is not None else None, form=ctx.form,
                                    mesh=ctx.mesh, cochain=ctx.cochain)
    return ctx.system


def stage_mane(ctx):
    from .mane import critical_value_report

    sc = ctx.sc
    system = _system(ctx)
    lag_ok = ctx.form is not None and isinstance(ctx.space, geo.FlatTorus) and ctx.space.dim == 2
    covers = sc.opt("mane", "covers")
    if isinstance(covers, int):
        covers = [covers]
    rep = critical_value_report(
        system, tol=sc.tol("mane"), lagrangian=bool(sc.opt("mane", "lagrangian", lag_ok)) and lag_ok,
        null_loops=bool(sc.opt("mane", "null_loops", False)) and lag_ok,
        cover_orders=tuple(covers) if covers else None, seed=sc.seed,
        n_starts=int(sc.opt("mane", "starts", 16)), lag_tol=sc.tol("lagrangian"))
    out = rep.to_record()
    out["s0"] = math.sqrt(2 * max(rep.c_strict, 0.0))
    out["volume"] = ctx.mesh.total_volume()
    if rep.witnesses:
        out["witnesses"] = [{"winding": list(w.winding), "ratio": w.ratio, "k": w.k}
                            for w in rep.witnesses[:8]]
    return out


def stage_flow(ctx):
    from .magflow import comass_estimate
    from .mane import MagneticSystem

    sc = ctx.sc
    if ctx.form is None:
        raise ValueError("flows need an analytic form")
    mane = ctx.record.get("mane") or {}
    s0 = mane.get("s0")
    factors = sc.opt("flow", "speeds", [1.0, 2.0])
    if not isinstance(factors, (list, tuple)):
        factors = [factors]
    absolute = bool(sc.opt("flow", "absolute", False))
    if not absolute and not (isinstance(s0, float) and s0 > 0):
        raise ValueError("relative flow speeds need a positive critical speed from the mane analysis")
    system = MagneticSystem(space=ctx.space, form=ctx.form)
    rows = []
    for f in factors:
        s = float(f) if absolute else float(f) * s0
        rep = comass_estimate(system, s, n_orbits=int(sc.opt("flow", "orbits", 64)),
                              horizon=float(sc.opt("flow", "horizon", 200.0)), seed=sc.seed,
                              refine=bool(sc.opt("flow", "refine", False)))
        rows.append({"factor": None if absolute else float(f), "speed": s, "comass": rep.value,
                     "drift": rep.drift, "quantiles": rep.quantiles()})
    return {"s0": s0, "table": rows}


def shadow_suite(n, seed, horizon=300.0, spacing=0.01, kappa_range=(0.05, 0.9)):
    """Random bump-form / hypercycle pairs; returns per-pair rows."""
    from . import shadow as sh

    H = geo.UpperHalfSpace(2)
    rng = np.random.default_rng(seed)
    rows = []
    npts = int(round(2 * horizon / spacing)) + 1
    for i in range(n):
        kappa = float(rng.uniform(*kappa_range))
        d = math.atanh(kappa) * (1 if rng.random() < 0.5 else -1)
        curve = sh.hypercycle(d, T=horizon, n=npts)
        # bump centred near a point of the curve within the first few units of arc length
        t_c = rng.uniform(-2.0, 6.0)
        e = math.exp(t_c / math.cosh(d))
        base = np.array([e * math.tanh(d), e / math.cosh(d)])
        offset = rng.uniform(-0.8, 0.8)
        center = base * np.array([1.0, math.exp(offset)])
        form = forms.hyperbolic_bump_form(tuple(center), radius=float(rng.uniform(0.3, 1.5)),
                                          angle=float(rng.uniform(0, 2 * math.pi)), A=1.0, D=1.0)
        k = sh.geodesic_curvature(H, curve)
        kmax = float(np.nanmax(k))
        geod, _ = sh.shadow_geodesic(H, curve)
        measured, bound, info = sh.average_difference(H, form, curve, T=horizon * (1 - 1e-9),
                                                      geodesic=geod, kappa_max=kmax, tol=math.inf)
        rows.append({"kappa": kmax, "measured": measured, "bound": bound,
                     "quadrature_error": info["quadrature_error"], "ratio": info["ratio"]})
    return rows


def stage_shadow(ctx):
    from . import shadow as sh
    from .mane import MagneticSystem

    sc = ctx.sc
    H = ctx.space if ctx.space is not None else geo.UpperHalfSpace(2)
    B = float(sc.opt("shadow", "B", 0.5))
    s = float(sc.opt("shadow", "speed", 1.0))
    out = {"B": B, "speed": s}
    if B / s < 1:
        system = MagneticSystem(space=H, form=forms.hyperbolic_field_form(B))
        T = float(sc.opt("shadow", "horizon", 24.0 / s))
        curve = sh.magnetic_curve(system, [0.0, 1.0], [0.6 * s, 0.8 * s], T, sample_dt=0.01)
        rep = sh.shadow_report(H, curve)
        out["orbit"] = {**rep.to_record(), "kappa_expected": B / s,
                        "distance_expected": math.atanh(B / s),
                        "Q_expected": sh.quasigeodesic_constant(B / s), "drift": curve.meta["drift"]}
    n = int(sc.opt("shadow", "suite", 0))
    if n:
        rows = shadow_suite(n, sc.seed, horizon=float(sc.opt("shadow", "suite_horizon", 300.0)))
        tol = sc.tol("shadow")
        viol = [i for i, r in enumerate(rows) if r["measured"] > r["bound"] + tol + r["quadrature_error"]]
        out["suite"] = {"n": n, "violations": len(viol), "max_ratio": max(r["ratio"] for r in rows),
                        "min_slack": min(r["bound"] - r["measured"] for r in rows), "tol": tol}
    return out


def _parse_loop(mesh, text):
    from . import isoperimetric as iso

    kind, *args = str(text).split(":")
    if kind == "square":
        cx, cy, hw = (float(a) for a in args)
        return iso.region_loop(mesh, iso.square_region(mesh, (cx, cy), hw))
    if kind == "triangle":
        return iso.triangle_loop(mesh, int(args[0]))
    if kind == "path":
        return iso.loop_from_vertices(mesh, [int(a) for a in args])
    raise ValueError(f"unknown loop spec {text!r}")


def stage_isoperimetric(ctx):
    from . import isoperimetric as iso

    sc = ctx.sc
    if ctx.mesh is None or ctx.mesh.dim != 2:
        raise ValueError("stable-area loops need a triangle mesh")
    specs = sc.opt("isoperimetric", "loops")
    if specs is None:
        L = ctx.mesh.periods if ctx.mesh.periods is not None else np.ones(2)
        specs = [f"square:{L[0] / 4}:{L[1] / 2}:{w * L[0]}" for w in (0.05, 0.1, 0.2)]
    if isinstance(specs, str):
        specs = [specs]
    system = _system(ctx)
    rows = []
    loops = []
    for spec in specs:
        gamma = _parse_loop(ctx.mesh, spec)
        loops.append(gamma)
        chain = iso.minimal_spanning_chain(ctx.mesh, gamma)
        chk = iso.cheeger_chain_check(system, gamma, chain)
        rows.append({"loop": spec, **chain.to_record(), **{f"check_{k}": v for k, v in chk.to_record().items()}})
    h1 = iso.h1_upper_estimate(ctx.mesh, loops)
    return {"loops": rows, "h1_estimate": h1.value, "h1_witness": specs[h1.witness]}


STAGES = {"spectrum": stage_spectrum, "mane": stage_mane, "flow": stage_flow,
          "shadow": stage_shadow, "isoperimetric": stage_isoperimetric}


# ---------------------------------------------------------------- verdicts

def _row(claim, verdict, left, right, tol, reason=""):
    slack = None
    if isinstance(left, (int, float)) and isinstance(right, (int, float)):
        slack = right - left
    return {"claim": claim, "verdict": verdict, "left": left, "right": right, "tol": tol,
            "slack": slack, "reason": reason}


def _ok(part):
    """Present and not an error."""
    return isinstance(part, dict) and "error" not in part


def _failed(part):
    return isinstance(part, dict) and "error" in part


def verify(record, tolerances=None):
    """Verdict rows re-derived from a stored record (no recomputation)."""
    from .config import DEFAULT_TOLERANCES

    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or record.get("tolerances") or {})
    res = record.get("results", {})
    form = res.get("form") or {}
    mane = res.get("mane")
    rows = []

    # L2 norm of the coexact part against sqrt(vol) times the critical speed
    if _ok(mane) and "l2_coexact" in form:
        left = _num(form["l2_coexact"])
        right = math.sqrt(_num(mane["volume"])) * _num(mane["s0"])
        t = tol["normcomp"] + 1e-3 * right
        rows.append(_row("l2_vs_critical_speed", "PASS" if left <= right + t else "FAIL", left, right, t))
    else:
        rows.append(_row("l2_vs_critical_speed", "INCONCLUSIVE", None, None, tol["normcomp"],
                         "mane analysis missing"))

    if _ok(mane):
        c, c0 = _num(mane["c_hamiltonian"]), _num(mane["c_strict"])
        t = 10 * tol["mane"] * max(c, 1e-2)
        rows.append(_row("strict_le_plain", "PASS" if c0 <= c + t else "FAIL", c0, c, t))
        cl = mane.get("c_lagrangian")
        if cl is not None:
            cl = _num(cl)
            diff = abs(c - cl)
            t = tol["cipp"] * max(c, 1e-12)
            ok = diff <= t or diff <= 1e-3
            rows.append(_row("hamiltonian_equals_lagrangian", "PASS" if ok else "FAIL", diff, t, tol["cipp"]))
        else:
            rows.append(_row("hamiltonian_equals_lagrangian", "INCONCLUSIVE", c, None, tol["cipp"],
                             "no Lagrangian estimate"))
        ratio = mane.get("null_loop_ratio")
        s0 = _num(mane["s0"])
        if s0 <= 1e-6:
            rows.append(_row("null_loop_witness", "PASS", s0, ratio, tol["null_loop"], "critical speed is zero"))
        elif ratio is None:
            rows.append(_row("null_loop_witness", "INCONCLUSIVE", s0, None, tol["null_loop"],
                             "no null-homologous loop search"))
        else:
            ok = _num(ratio) >= (1 - tol["null_loop"]) * s0
            rows.append(_row("null_loop_witness", "PASS" if ok else "INCONCLUSIVE", s0 * (1 - tol["null_loop"]),
                             _num(ratio), tol["null_loop"], "" if ok else "loop search is sampling-limited"))
        cu = mane.get("c_universal")
        if cu:
            vals = [_num(v) for _, v in cu]
            worst = max((b - a for a, b in zip(vals[:-1], vals[1:])), default=0.0)
            rows.append(_row("cover_monotonicity", "PASS" if worst <= tol["tower"] else "FAIL",
                             worst, tol["tower"], tol["tower"]))
    else:
        for claim in ("strict_le_plain", "hamiltonian_equals_lagrangian", "null_loop_witness"):
            rows.append(_row(claim, "INCONCLUSIVE", None, None, None, "mane analysis missing"))

    flow = res.get("flow")
    geom = res.get("geometry") or {}
    if _ok(flow) and flow.get("s0"):
        s0 = _num(flow["s0"])
        for r in flow["table"]:
            f, m = r.get("factor"), _num(r["comass"])
            if f is None:
                continue
            if abs(f - 1.0) < 1e-12:
                lo, hi = (1 - tol["comass"]) * s0, (1 + tol["comass"]) * s0
                if m > hi:
                    v = "FAIL"
                elif m >= lo:
                    v = "PASS"
                else:
                    v = "INCONCLUSIVE"
                reason = "" if v != "INCONCLUSIVE" else "supremum not attained by the sampled orbits"
                if geom.get("b1", 0) != 0:
                    reason = "b1 > 0: equality not expected"
                    v = "INCONCLUSIVE" if v != "FAIL" else v
                rows.append(_row("comass_at_critical_speed", v, m, s0, tol["comass"], reason))
            elif f > 1.0:
                hi = (1 + tol["comass"]) * s0
                rows.append(_row(f"comass_above_critical_speed_x{f:g}", "PASS" if m <= hi else "FAIL",
                                 m, hi, tol["comass"]))
    else:
        rows.append(_row("comass_at_critical_speed", "INCONCLUSIVE", None, None, tol["comass"],
                         "flow analysis missing"))

    shadow = res.get("shadow")
    if _ok(shadow) and "suite" in shadow:
        su = shadow["suite"]
        rows.append(_row("shadow_average_bound", "PASS" if su["violations"] == 0 else "FAIL",
                         su["violations"], 0, su["tol"], f"{su['n']} random pairs"))
    if _ok(shadow) and "orbit" in shadow:
        o = shadow["orbit"]
        dk = abs(_num(o["kappa_max"]) - _num(o["kappa_expected"]))
        dq = abs(_num(o["measured_Q"]) - _num(o["Q_expected"]))
        rows.append(_row("orbit_curvature", "PASS" if dk <= 1e-4 else "FAIL", dk, 1e-4, 1e-4))
        rows.append(_row("quasigeodesic_constant", "PASS" if dq <= 1e-3 else "FAIL", dq, 1e-3, 1e-3))

    iso = res.get("isoperimetric")
    if _ok(iso):
        gaps = max(_num(r["relative_gap"]) for r in iso["loops"])
        stokes = max(_num(r["check_stokes_defect"]) for r in iso["loops"])
        worst = min(_num(r["check_slack"]) for r in iso["loops"])
        rows.append(_row("lp_duality_gap", "PASS" if gaps <= tol["lp_gap"] else "FAIL", gaps, tol["lp_gap"],
                         tol["lp_gap"]))
        rows.append(_row("discrete_stokes", "PASS" if stokes <= tol["stokes"] else "FAIL", stokes,
                         tol["stokes"], tol["stokes"]))
        rows.append(_row("loop_flux_bound", "PASS" if worst >= 0 else "FAIL", -worst, 0.0, 0.0,
                         f"{len(iso['loops'])} loops"))
    return rows


# ---------------------------------------------------------------- running

def run_scenario(sc: Scenario):
    """Execute one scenario; returns (record, timings, failed)."""
    ctx = Context(sc)
    results = {}
    timings = {}
    failed = False

    def guarded(name, fn):
        nonlocal failed
        t0 = time.perf_counter()
        try:
            out = fn(ctx)
        except AssertionError as exc:
            failed = True
            out = {"error": {"type": "AssertionError", "message": str(exc), "assertion": True}}
        except Exception as exc:  # structured error, recorded per analysis
            out = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        timings[name] = time.perf_counter() - t0
        return out

    results["geometry"] = guarded("geometry", stage_geometry)
    ctx.record = results
    base_ok = not _failed(results["geometry"])
    if base_ok:
        results["form"] = guarded("form", stage_form)
        base_ok = not _failed(results["form"])
    for name in sc.analyses:
        if name == "verify":
            continue
        if not base_ok:
            results[name] = {"error": {"type": "DependencyError",
                                       "message": "geometry or form stage failed"}}
            continue
        results[name] = guarded(name, STAGES[name])
    record = {"scenario": sc.id, "version": __version__, "seed": sc.seed,
              "spec": sc.describe(), "tolerances": sc.tolerances, "results": results}
    if "verify" in sc.analyses:
        rows = verify(record)
        record["verdicts"] = rows
        failed = failed or any(r["verdict"] == "FAIL" for r in rows)
    return clean(record), timings, failed


def run(cfg: RunConfig, out_dir, stem=None, append=False, only=None, analyses=None, echo=None):
    """Run every scenario (optionally a subset); write JSONL plus a timing sidecar.

    Returns (records, exit_code) with exit code 0 iff no assertion-level failure.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or (Path(cfg.path).stem if cfg.path else "run")
    scenarios = [s for s in cfg.scenarios if only is None or s.id in only]
    if analyses is not None:
        for s in scenarios:
            s.analyses = [a for a in s.analyses if a in analyses] or list(analyses)
    mode = "a" if append else "w"
    records = []
    failed_any = False
    with ThreadPoolExecutor(max_workers=max(1, cfg.threads)) as pool:
        results = list(pool.map(run_scenario, scenarios))
    with open(out_dir / f"{stem}.jsonl", mode, encoding="utf-8") as fh, \
            open(out_dir / f"{stem}.timings.jsonl", mode, encoding="utf-8") as th:
        for sc, (record, timings, failed) in zip(scenarios, results):
            fh.write(dumps(record) + "\n")
            th.write(json.dumps({"scenario": sc.id, "seconds": timings}, sort_keys=True) + "\n")
            records.append(record)
            failed_any = failed_any or failed
            if echo:
                echo(record)
    return records, (1 if failed_any else 0)


def read_records(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def plot_series(records, series):
    """Rows for CSV export: spectra, cover tower, comass table."""
    rows = []
    for r in records:
        res = r.get("results", {})
        sid = r["scenario"]
        if series == "spectrum" and _ok(res.get("spectrum")):
            h = (res.get("geometry") or {}).get("h_max")
            for i, v in enumerate(res["spectrum"]["values"]):
                rows.append({"scenario": sid, "h_max": h, "index": i, "value": v})
        elif series == "covers" and _ok(res.get("mane")) and res["mane"].get("c_universal"):
            for order, c in res["mane"]["c_universal"]:
                rows.append({"scenario": sid, "order": order, "c": c})
        elif series == "comass" and _ok(res.get("flow")):
            for row in res["flow"]["table"]:
                rows.append({"scenario": sid, "speed": row["speed"], "factor": row["factor"],
                             "comass": row["comass"], "s0": res["flow"]["s0"]})
    return rows
