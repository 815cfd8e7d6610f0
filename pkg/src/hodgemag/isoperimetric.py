"""Minimal spanning 2-chains by linear programming and stable-area based estimates.

A 1-cycle ``gamma`` on a closed triangle mesh bounds a real 2-chain iff it
pairs to zero with every harmonic 1-cochain.  The least-mass spanning chain

    minimize  sum_s area(s) |c_s|   subject to  boundary(c) = gamma

is solved as an LP with c = p - n, p, n >= 0 (HiGHS).  The LP mass is an
upper bound for the stable area of the loop.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.linalg import lsqr

from . import dec


class IsoperimetricError(RuntimeError):
    pass


class HomologyError(IsoperimetricError):
    def __init__(self, message, index, pairing):
        super().__init__(message)
        self.index = index
        self.pairing = pairing


class BoundaryMismatchError(IsoperimetricError):
    pass


# ---------------------------------------------------------------- loops

def region_chain(mesh, mask):
    """2-chain equal to 1 on the selected triangles (top simplices are coherently oriented)."""
    return np.asarray(mask, dtype=float)


def region_loop(mesh, mask):
    """Boundary 1-cycle of a set of triangles, as integer coefficients per edge."""
    if mesh.dim != 2:
        raise IsoperimetricError("loops are handled on triangle meshes")
    return mesh.boundary[2] @ region_chain(mesh, mask)


def square_region(mesh, center, half_width):
    """Triangles whose barycentres lie in the axis-aligned square (periodic distance on tori)."""
    bc = mesh.barycenters(2)
    delta = mesh.minimal_image(bc[:, :2] - np.asarray(center, float))
    return np.all(np.abs(delta) < half_width, axis=1)


def triangle_loop(mesh, index):
    mask = np.zeros(mesh.num_simplices(2), dtype=bool)
    mask[index] = True
    return region_loop(mesh, mask)


def loop_from_vertices(mesh, path):
    """1-chain of a closed vertex path (first vertex repeated at the end or not)."""
    path = list(path)
    if path[0] != path[-1]:
        path.append(path[0])
    lookup = {tuple(e): i for i, e in enumerate(mesh.simplices[1])}
    chain = np.zeros(mesh.num_simplices(1))
    for a, b in zip(path[:-1], path[1:]):
        key = (min(a, b), max(a, b))
        if key not in lookup:
            raise IsoperimetricError(f"vertices {a} and {b} are not joined by an edge")
        chain[lookup[key]] += 1.0 if a < b else -1.0
    return chain


def loop_length(mesh, cycle):
    return float(np.abs(cycle) @ mesh.volumes[1])


def homology_pairings(mesh, cycle):
    """Pairings of the cycle with the harmonic basis, relative to the pairing scale."""
    H = dec.hodge_operators(mesh).harmonic_basis()
    if H.shape[1] == 0:
        return np.zeros(0)
    raw = H.T @ cycle
    scale = np.maximum(np.abs(H).T @ np.abs(cycle), 1.0)
    return raw / scale


def check_null_homologous(mesh, cycle, tol=1e-9):
    cycle = np.asarray(cycle, float)
    closing = mesh.boundary[1] @ cycle
    if np.max(np.abs(closing), initial=0.0) > tol:
        raise HomologyError("chain is not a cycle", -1, float(np.max(np.abs(closing))))
    pair = homology_pairings(mesh, cycle)
    for k, p in enumerate(pair):
        if abs(p) > tol:
            raise HomologyError(f"cycle pairs to {p:.3e} with harmonic form {k}: not null-homologous",
                                k, float(p))


# ---------------------------------------------------------------- LP

@dataclass
class SpanningChain:
    coefficients: np.ndarray
    cycle: np.ndarray
    mass: float
    gap: float
    dual: np.ndarray = None
    boundary_residual: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def relative_gap(self):
        return self.gap / self.mass if self.mass > 0 else self.gap

    def to_record(self):
        return {"mass": self.mass, "gap": self.gap, "relative_gap": self.relative_gap,
                "boundary_residual": self.boundary_residual,
                "support": int(np.count_nonzero(self.coefficients)), **self.info}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["simplex", "coefficient"])
            for i in np.flatnonzero(self.coefficients):
                wr.writerow([int(i), repr(float(self.coefficients[i]))])


def _polish(Bd, gamma, c):
    """Re-solve the boundary equations on the support to remove LP feasibility slack."""
    support = np.flatnonzero(np.abs(c) > 1e-12)
    if len(support) == 0:
        return c
    sub = Bd[:, support]
    rows = np.unique(sub.nonzero()[0])
    A = sub[rows].toarray() if len(rows) * len(support) <= 4_000_000 else None
    r = gamma - Bd @ c
    if A is not None:
        delta, *_ = np.linalg.lstsq(A, r[rows], rcond=None)
    else:
        delta = lsqr(sub[rows], r[rows], atol=1e-15, btol=1e-15)[0]
    out = c.copy()
    out[support] += delta
    # integer data usually gives integer vertices; snap when that is consistent
    snapped = np.round(out)
    if np.max(np.abs(snapped - out)) < 1e-9 and np.max(np.abs(Bd @ snapped - gamma)) <= \
            np.max(np.abs(Bd @ out - gamma)):
        out = snapped
    return out


def minimal_spanning_chain(mesh, cycle, tol=1e-9, check=True):
    """Least-mass real 2-chain with boundary ``cycle`` (LP with certificate)."""
    gamma = np.asarray(cycle, float)
    if check:
        check_null_homologous(mesh, gamma, tol)
    Bd = mesh.boundary[2].tocsc()
    area = mesh.volumes[2]
    F = len(area)
    if not np.any(gamma):
        return SpanningChain(np.zeros(F), gamma, 0.0, 0.0, np.zeros(len(gamma)), 0.0, {"status": "trivial"})
    # rows of a closed mesh are linearly dependent; HiGHS presolve removes them
    A = sp.hstack([Bd, -Bd]).tocsr()
    cost = np.concatenate([area, area])
    res = linprog(cost, A_eq=A, b_eq=gamma, bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise IsoperimetricError(f"LP failed: {res.message}")
    c = res.x[:F] - res.x[F:]
    c = _polish(Bd, gamma, c)
    mass = float(area @ np.abs(c))
    y = res.eqlin.marginals
    # scaling y into dual feasibility |boundary^T y| <= area makes gamma.y a certified lower bound
    load = np.abs(Bd.T @ y)
    with np.errstate(divide="ignore"):
        factor = min(1.0, float(np.min(np.where(load > 0, area / load, np.inf), initial=np.inf)))
    viol = float(np.max(load - area, initial=0.0))
    dual_obj = factor * float(gamma @ y)
    gap = abs(mass - dual_obj)
    resid = float(np.max(np.abs(Bd @ c - gamma)))
    info = {"status": "optimal", "primal_lp": float(res.fun), "dual": dual_obj,
            "dual_violation": viol, "iterations": int(getattr(res, "nit", 0))}
    return SpanningChain(c, gamma, mass, gap, y, resid, info)


# ---------------------------------------------------------------- checks

def _values(omega):
    return omega.values if isinstance(omega, dec.Cochain) else np.asarray(omega, float)


def stokes_check(mesh, omega, chain, cycle=None, tol=1e-9):
    """Relative defect |<w, cycle> - <dw, chain>| / scale for a 1-cochain w.

    The scale is sum |w_e cycle_e| (at least 1), so the result is the
    rounding-level identity defect of discrete Stokes.
    """
    w = _values(omega)
    c = chain.coefficients if isinstance(chain, SpanningChain) else np.asarray(chain, float)
    gamma = chain.cycle if cycle is None and isinstance(chain, SpanningChain) else np.asarray(cycle, float)
    Bd = mesh.boundary[2]
    mismatch = float(np.max(np.abs(Bd @ c - gamma), initial=0.0))
    if mismatch > tol:
        raise BoundaryMismatchError(f"boundary of the chain differs from the cycle by {mismatch:.2e}")
    dw = Bd.T @ w
    lhs = float(w @ gamma)
    rhs = float(dw @ c)
    scale = max(1.0, float(np.abs(w) @ np.abs(gamma)), float(np.abs(dw) @ np.abs(c)))
    return abs(lhs - rhs) / scale


@dataclass
class CheegerCheck:
    length: float
    integral: float
    mass: float
    dw_sup: float
    lhs: float
    rhs: float
    stokes_defect: float
    relative_gap: float

    @property
    def slack(self):
        return self.rhs - self.lhs

    @property
    def ratio(self):
        return self.lhs / self.rhs if self.rhs > 0 else (0.0 if self.lhs == 0 else math.inf)

    def to_record(self):
        return {**self.__dict__, "slack": self.slack, "ratio": self.ratio}


def _cochain_of(system):
    if getattr(system, "cochain", None) is not None:
        return _values(system.cochain)
    raise IsoperimetricError("system has no cochain on a mesh")


def cheeger_chain_check(system, cycle, chain=None):
    """Per-loop inequality (1/l)|int_gamma w| <= |dw|_inf mass / l.

    ``|dw|_inf`` is the largest flux density |dw(s)| / area(s) of the
    discrete form (the analytic sup-norm dominates it for sampled forms).
    Holds by Stokes and Holder, so a failure raises AssertionError.
    """
    mesh = system.mesh
    w = _cochain_of(system)
    gamma = np.asarray(cycle, float)
    if chain is None:
        chain = minimal_spanning_chain(mesh, gamma)
    length = loop_length(mesh, gamma)
    integral = float(w @ gamma)
    flux = mesh.boundary[2].T @ w
    dw_sup = float(np.max(np.abs(flux) / mesh.volumes[2]))
    lhs = abs(integral) / length
    rhs = dw_sup * chain.mass / length
    defect = stokes_check(mesh, w, chain)
    rep = CheegerCheck(length, integral, chain.mass, dw_sup, lhs, rhs, defect, chain.relative_gap)
    if lhs > rhs * (1 + 1e-12) + 1e-15:
        raise AssertionError(f"loop inequality violated: {lhs:.6e} > {rhs:.6e}")
    return rep


@dataclass
class H1Estimate:
    value: float
    witness: int
    loops: list
    cheeger_rhs: float = math.nan

    def to_record(self):
        return {"value": self.value, "witness": self.witness, "loops": self.loops,
                "cheeger_rhs": self.cheeger_rhs}


def h1_upper_estimate(mesh, loops, mean_value_constant=None, gap=None):
    """min over loops of length / LP mass.

    An upper bound for the degree-one Cheeger constant when the LP masses
    equal the stable areas, otherwise a heuristic.  If a mean-value
    constant C and coexact gap are given, C sqrt(vol) sqrt(gap) is logged
    alongside for comparison (never asserted).
    """
    loops = list(loops)
    if not loops:
        raise IsoperimetricError("empty loop family")
    rows = []
    for k, gamma in enumerate(loops):
        gamma = np.asarray(gamma, float)
        try:
            chain = minimal_spanning_chain(mesh, gamma)
        except HomologyError as exc:
            raise HomologyError(f"loop {k}: {exc}", exc.index, exc.pairing) from exc
        ell = loop_length(mesh, gamma)
        rows.append({"loop": k, "length": ell, "mass": chain.mass,
                     "ratio": ell / chain.mass if chain.mass > 0 else math.inf,
                     "relative_gap": chain.relative_gap})
    best = min(range(len(rows)), key=lambda i: rows[i]["ratio"])
    rhs = math.nan
    if mean_value_constant is not None and gap is not None:
        rhs = float(mean_value_constant) * math.sqrt(mesh.total_volume()) * math.sqrt(gap)
    return H1Estimate(rows[best]["ratio"], best, rows, rhs)


def write_jsonl(path, records):
    with open(path, "a", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
