"""Coexact 1-form Laplace eigenpairs, curl eigenpairs on 3-meshes, mean-value ratios."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .dec import Cochain, SolverError, barycentric_gradients, hodge_operators, whitney_mass


@dataclass
class EigenPair:
    """Eigenvalue with a unit-norm 1-cochain eigenform.

    ``value`` is the Laplace eigenvalue for coexact pairs and the signed curl
    eigenvalue for curl pairs.
    """

    value: float
    form: Cochain
    residual: float
    coexactness: float
    kind: str = "laplace"
    diagnostics: dict = field(default_factory=dict)


def _deflation(ops, include_harmonic=True):
    """Star-orthogonal projector onto the complement of exact (+ harmonic) 1-cochains."""
    H = ops.harmonic_basis() if include_harmonic else np.zeros((ops.mesh.num_simplices(1), 0))

    def project(x):
        y = x - ops.exact_projection(x)
        if H.shape[1]:
            y = y - H @ (H.T @ (ops.star[1] * y))
        return y

    return project


def _cluster(values, rel=1e-3):
    """Group nearly equal eigenvalues; returns a list of index lists."""
    groups = []
    for i, v in enumerate(values):
        if groups and abs(v - values[groups[-1][-1]]) <= rel * max(abs(v), 1e-300):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _star_orthonormalise(vecs, star):
    G = vecs.T @ (star[:, None] * vecs)
    L = np.linalg.cholesky(0.5 * (G + G.T))
    return np.linalg.solve(L, vecs.T).T


def coexact_spectrum(mesh, count, seed=0, tol=1e-10, ncv=None):
    """Smallest ``count`` coexact eigenpairs of the 1-form Hodge Laplacian.

    Shift-invert Lanczos on the symmetric pencil (K, star_1), with every
    iterate projected off the exact and harmonic subspaces.

    Returns
    -------
    list of EigenPair
        Eigenvalues nondecreasing; forms star-orthonormal.
    """
    count = int(count)
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return []
    ops = hodge_operators(mesh)
    N = mesh.num_simplices(1)
    K = ops.stiffness(1)
    star = ops.star[1]
    M = sp.diags(star)
    project = _deflation(ops)
    # small negative shift scaled like the first eigenvalue of a domain of this volume
    sigma = -1e-3 * (2 * math.pi) ** 2 / mesh.total_volume() ** (2.0 / mesh.dim)
    lu = spla.splu((K - sigma * M).tocsc())
    op = spla.LinearOperator((N, N), matvec=lambda y: project(lu.solve(y)), dtype=float)
    rng = np.random.default_rng(seed)
    v0 = project(rng.standard_normal(N))
    k = min(count + 4, N - 2)
    if ncv is None:
        ncv = min(N - 1, max(2 * k + 1, 40))
    try:
        vals, vecs = eigsh(K, k=k, M=M, sigma=sigma, OPinv=op, v0=v0, tol=tol, ncv=ncv,
                           which="LM", maxiter=20 * N)
    except ArpackNoConvergence as exc:
        raise SolverError("Lanczos did not converge", values=exc.eigenvalues) from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    vecs = np.column_stack([project(vecs[:, j]) for j in range(vecs.shape[1])])
    # re-orthonormalise inside each cluster of repeated eigenvalues
    for grp in _cluster(vals):
        vecs[:, grp] = _star_orthonormalise(vecs[:, grp], star)
    lap = ops.laplacian(1)
    codiff = ops.codifferential(1)
    pairs = []
    for j in range(count):
        w = vecs[:, j]
        nrm = math.sqrt(w @ (star * w))
        w = w / nrm
        lam = float(w @ (K @ w))
        r = lap @ w - lam * w
        res = math.sqrt(r @ (star * r))
        dw = codiff @ w
        co = math.sqrt(dw @ (ops.star[0] * dw))
        pairs.append(EigenPair(lam, Cochain(1, w, mesh), res, co, "laplace",
                               {"sigma": sigma, "ritz": float(vals[j])}))
    # Rayleigh quotients inside a degenerate cluster can swap at rounding level
    pairs.sort(key=lambda p: p.value)
    return pairs


# ----------------------------------------------------------------------
# curl on tetrahedral 3-meshes

def wedge_matrix(mesh):
    """C[f, e] = integral of W_f ^ W_e (Whitney 2-form ^ Whitney 1-form).

    The bilinear form (d1 a)^T C b equals the integral of da ^ b, which on a
    3-manifold is <curl a, b>.
    """
    if mesh.dim != 3:
        raise ValueError("curl requires a 3-mesh")
    top = mesh.simplices[3]
    T = len(top)
    pts = mesh.local_coords(3)
    e = pts[:, 1:, :] - pts[:, :1, :]
    signed_vol = np.linalg.det(e) / 6.0
    G = barycentric_gradients(mesh)  # (T, 4, 3)

    def det3(a, b, c):
        return np.einsum("ti,ti->t", G[:, a], np.cross(G[:, b], G[:, c]))

    dets = {}
    for a, b, c in itertools.product(range(4), repeat=3):
        dets[a, b, c] = det3(a, b, c) if len({a, b, c}) == 3 else np.zeros(T)
    e_lookup = {tuple(r): i for i, r in enumerate(mesh.simplices[1])}
    f_lookup = {tuple(r): i for i, r in enumerate(mesh.simplices[2])}
    rows, cols, vals = [], [], []
    for fl in itertools.combinations(range(4), 3):
        for el in itertools.combinations(range(4), 2):
            val = np.zeros(T)
            gf = top[:, list(fl)]
            ge = top[:, list(el)]
            # local vertex order following the global sorted order
            forder = np.argsort(gf, axis=1, kind="stable")
            eorder = np.argsort(ge, axis=1, kind="stable")
            floc = np.array(fl)[forder]
            eloc = np.array(el)[eorder]
            for t_idx in _unique_rows(floc, eloc):
                idx, fi, ej = t_idx
                i, j, k = fi
                p, q = ej
                acc = np.zeros(len(idx))
                for a, b, c in ((i, j, k), (j, k, i), (k, i, j)):
                    acc += ((1 + (a == p)) * dets[b, c, q][idx]
                            - (1 + (a == q)) * dets[b, c, p][idx])
                val[idx] = 2.0 * acc * signed_vol[idx] / 20.0
            fid = np.array([f_lookup[tuple(r)] for r in np.sort(gf, axis=1)])
            eid = np.array([e_lookup[tuple(r)] for r in np.sort(ge, axis=1)])
            rows.append(fid)
            cols.append(eid)
            vals.append(val)
    C = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(mesh.num_simplices(2), mesh.num_simplices(1)))
    return C


def _unique_rows(floc, eloc):
    key = np.concatenate([floc, eloc], axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    for u, row in enumerate(uniq):
        yield np.flatnonzero(inv == u), tuple(row[:3]), tuple(row[3:])


def curl_form(mesh):
    """Symmetric matrix of (a, b) -> integral of da ^ b on 1-cochains."""
    ops = hodge_operators(mesh)
    key = "curl_B"
    if key not in ops._cache:
        C = wedge_matrix(mesh)
        B = (ops.d[1].T @ C).tocsr()
        ops._cache[key] = (0.5 * (B + B.T)).tocsr()
    return ops._cache[key]


class _WhitneyDeflation:
    """Projector onto the Whitney-mass orthogonal complement of exact + harmonic cochains."""

    def __init__(self, ops, M):
        self.ops, self.M = ops, M
        d0 = ops.d[0]
        L = (d0.T @ M @ d0).tocsc()
        self.lu = spla.splu(L[1:, 1:].tocsc())
        H = np.array(ops.harmonic_basis(), copy=True)
        for j in range(H.shape[1]):
            H[:, j] -= self.exact(H[:, j])
        if H.shape[1]:
            G = H.T @ (M @ H)
            H = np.linalg.solve(np.linalg.cholesky(0.5 * (G + G.T)), H.T).T
        self.H = H

    def exact(self, x):
        d0 = self.ops.d[0]
        rhs = d0.T @ (self.M @ x)
        a = np.zeros(d0.shape[1])
        a[1:] = self.lu.solve(rhs[1:])
        return d0 @ a

    def __call__(self, x):
        y = x - self.exact(x)
        if self.H.shape[1]:
            y = y - self.H @ (self.H.T @ (self.M @ y))
        return y


def curl_spectrum(mesh, count, seed=0, tol=1e-10, ncv=None, shift=None):
    """Smallest-|mu| coexact eigenpairs of curl a = mu a on a tetrahedral 3-mesh.

    Galerkin problem in Whitney 1-forms: B a = mu M a, where B is the wedge
    pairing (a, b) -> integral of da ^ b and M the consistent Whitney mass
    matrix.  Exact and harmonic cochains span the kernel of B and are
    deflated in the M inner product; norms and coexactness of the returned
    forms are measured in that inner product.
    """
    count = int(count)
    if count < 0:
        raise ValueError("count must be nonnegative")
    if mesh.dim != 3:
        raise ValueError("curl_spectrum requires a 3-mesh")
    if count == 0:
        return []
    ops = hodge_operators(mesh)
    N = mesh.num_simplices(1)
    B = curl_form(mesh)
    if "whitney_mass" not in ops._cache:
        ops._cache["whitney_mass"] = whitney_mass(mesh)
    M = ops._cache["whitney_mass"]
    project = _WhitneyDeflation(ops, M)
    # Shifts sit at +-0.7 of the first |mu| of a flat cube of this volume.  A
    # shift near zero would amplify round-off leakage from the (large) kernel.
    if shift is None:
        shift = 0.7 * 2 * math.pi / mesh.total_volume() ** (1.0 / 3.0)
    found = []
    for sigma in (abs(shift), -abs(shift)):
        lu = spla.splu((B - sigma * M).tocsc())
        op = spla.LinearOperator((N, N), matvec=lambda y, lu=lu: project(lu.solve(y)), dtype=float)
        rng = np.random.default_rng(seed)
        v0 = project(rng.standard_normal(N))
        k = min(count + 8, N - 2)
        nc = ncv or min(N - 1, max(2 * k + 1, 48))
        try:
            vals, vecs = eigsh(B, k=k, M=M, sigma=sigma, OPinv=op, v0=v0, tol=tol, ncv=nc,
                               which="LM", maxiter=20 * N)
        except ArpackNoConvergence as exc:
            raise SolverError("Lanczos did not converge for curl", values=exc.eigenvalues) from exc
        # discard Ritz vectors dominated by the kernel
        kept = []
        for j in range(len(vals)):
            v = vecs[:, j]
            pv = project(v)
            frac = math.sqrt((pv @ (M @ pv)) / (v @ (M @ v)))
            if frac > 0.5 and (vals[j] > 0) == (sigma > 0) and abs(vals[j]) > 1e-6 * abs(sigma):
                kept.append(j)
        found.append((vals[kept], vecs[:, kept]))
    vals = np.concatenate([f[0] for f in found])
    vecs = np.concatenate([f[1] for f in found], axis=1)
    order = np.lexsort((vals, np.abs(vals)))
    vals, vecs = vals[order], vecs[:, order]
    vecs = np.column_stack([project(vecs[:, j]) for j in range(vecs.shape[1])])
    for grp in _cluster(vals):
        G = vecs[:, grp].T @ (M @ vecs[:, grp])
        vecs[:, grp] = np.linalg.solve(np.linalg.cholesky(0.5 * (G + G.T)), vecs[:, grp].T).T
    d0 = ops.d[0]
    pairs = []
    for j in range(min(count, len(vals))):
        w = vecs[:, j]
        w = w / math.sqrt(w @ (M @ w))
        mu = float(w @ (B @ w))
        r = B @ w - mu * (M @ w)
        # dual-norm residual: r^T M^{-1} r
        z, info = spla.cg(M, r, rtol=1e-12, atol=0.0, maxiter=2000)
        res = math.sqrt(max(r @ z, 0.0))
        cod = d0.T @ (M @ w)
        co = math.sqrt(cod @ (cod / ops.star[0]))
        pairs.append(EigenPair(mu, Cochain(1, w, mesh), res, co, "curl",
                               {"ritz": float(vals[j]), "sigma": float(shift)}))
    if len(pairs) < count:
        raise SolverError(f"only {len(pairs)} curl eigenpairs found", values=vals)
    return pairs


def mvi_ratio(form: Cochain) -> float:
    """Empirical mean-value constant: sup norm over L2 norm."""
    ops = hodge_operators(form.mesh)
    l2 = ops.l2_norm(form)
    if not l2 > 0:
        raise ValueError("mvi_ratio of the zero form is undefined")
    return ops.linf_norm(form) / l2


def subspace_distance(form: Cochain, basis) -> float:
    """Star-norm distance from a unit form to the span of ``basis`` cochains."""
    ops = hodge_operators(form.mesh)
    V = np.column_stack([b.values for b in basis])
    V = _star_orthonormalise(V, ops.star[1])
    w = form.values / ops.l2_norm(form)
    r = w - V @ (V.T @ (ops.star[1] * w))
    return math.sqrt(max(r @ (ops.star[1] * r), 0.0))


def eigenpair_records(pairs, scenario):
    ops = None
    out = []
    for i, p in enumerate(pairs):
        ops = ops or hodge_operators(p.form.mesh)
        out.append({"scenario": scenario, "index": i, "kind": p.kind,
                    "value": p.value, "residual": p.residual,
                    "linf": ops.linf_norm(p.form), "l2": ops.l2_norm(p.form)})
    return out


def write_jsonl(records, path):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
