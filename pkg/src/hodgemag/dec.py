"""Discrete exterior calculus on simplicial meshes.

Cochains live on the sorted (ascending vertex index) orientation of every
simplex below top degree, and on the given orientation of top simplices.
Hodge stars are diagonal: circumcentric where a top simplex is well centred,
barycentric inside any top simplex that is not.
"""

from __future__ import annotations

import itertools
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.linalg import eigsh

from .geometry import GeometryError, SimplicialMesh


class DecError(RuntimeError):
    pass


class SolverError(DecError):
    """Linear or eigen solver failed; carries a residual or Ritz values."""

    def __init__(self, message, residual=None, values=None):
        self.residual = residual
        self.values = values
        super().__init__(message)


class KernelAmbiguityError(DecError):
    def __init__(self, eigenvalues):
        self.eigenvalues = np.asarray(eigenvalues)
        super().__init__(f"no clear spectral gap separating the kernel: {self.eigenvalues}")


class Cochain:
    """Degree-p cochain: one value per oriented p-simplex of ``mesh``."""

    def __init__(self, degree: int, values, mesh: SimplicialMesh):
        values = np.asarray(values, dtype=float)
        if not 0 <= degree <= mesh.dim:
            raise ValueError(f"degree {degree} out of range for a {mesh.dim}-mesh")
        if values.shape != (mesh.num_simplices(degree),):
            raise ValueError(f"expected {mesh.num_simplices(degree)} values, got {values.shape}")
        self.degree = degree
        self.values = values
        self.mesh = mesh

    def _check(self, other):
        if not isinstance(other, Cochain):
            raise TypeError("expected a Cochain")
        if other.mesh is not self.mesh:
            raise ValueError("cochains live on different meshes")
        if other.degree != self.degree:
            raise ValueError(f"degree mismatch: {self.degree} vs {other.degree}")

    def __add__(self, other):
        self._check(other)
        return Cochain(self.degree, self.values + other.values, self.mesh)

    def __sub__(self, other):
        self._check(other)
        return Cochain(self.degree, self.values - other.values, self.mesh)

    def __mul__(self, c):
        return Cochain(self.degree, float(c) * self.values, self.mesh)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return Cochain(self.degree, self.values / float(c), self.mesh)

    def __neg__(self):
        return Cochain(self.degree, -self.values, self.mesh)

    def copy(self):
        return Cochain(self.degree, self.values.copy(), self.mesh)

    def value_on(self, simplex):
        """Value on an arbitrarily ordered simplex (sign follows the permutation)."""
        simplex = tuple(int(v) for v in simplex)
        if len(simplex) != self.degree + 1:
            raise ValueError("simplex has the wrong dimension")
        table = self.mesh.simplices[self.degree]
        if self.degree == self.mesh.dim:
            for i, row in enumerate(table):
                if set(row) == set(simplex):
                    ref = list(row)
                    perm = [ref.index(v) for v in simplex]
                    return _parity(perm) * self.values[i]
            raise KeyError(simplex)
        key = tuple(sorted(simplex))
        idx = np.flatnonzero((table == key).all(axis=1))
        if not len(idx):
            raise KeyError(simplex)
        perm = [key.index(v) for v in simplex]
        return _parity(perm) * self.values[idx[0]]

    def __repr__(self):
        return f"Cochain(degree={self.degree}, n={len(self.values)})"


def _parity(perm):
    s = 1
    for i, j in itertools.combinations(range(len(perm)), 2):
        if perm[i] > perm[j]:
            s = -s
    return s


# ----------------------------------------------------------------------
# Hodge stars

def _circumcenters(pts):
    """Circumcentres and their barycentric coordinates for simplices (N, k+1, m)."""
    p0 = pts[:, 0, :]
    a = pts[:, 1:, :] - p0[:, None, :]
    if a.shape[1] == 0:
        return p0.copy(), np.ones((len(pts), 1))
    gram = np.einsum("nim,njm->nij", a, a)
    rhs = 0.5 * np.einsum("nim,nim->ni", a, a)
    coef = np.linalg.solve(gram, rhs[..., None])[..., 0]
    centre = p0 + np.einsum("ni,nim->nm", coef, a)
    bary = np.concatenate([1.0 - coef.sum(axis=1, keepdims=True), coef], axis=1)
    return centre, bary


def _flag_measure(points):
    """Unsigned measure of simplices given by vertex arrays (N, k+1, m)."""
    k = points.shape[1] - 1
    if k == 0:
        return np.ones(len(points))
    e = points[:, 1:, :] - points[:, :1, :]
    gram = np.einsum("nim,njm->nij", e, e)
    return np.sqrt(np.clip(np.linalg.det(gram), 0, None)) / math.factorial(k)


def _dual_volumes(mesh, well_centred_tol=1e-10):
    """Signed circumcentric dual volumes, with barycentric fallback.

    For every top simplex and every flag sigma_p < ... < sigma_n = T the dual
    piece is an orthoscheme whose legs join successive circumcentres; its
    signed volume is the product of signed leg lengths over (n - p)!.
    """
    n = mesh.dim
    top = mesh.simplices[n]
    pts = mesh.local_coords(n)
    nt = len(top)
    # per-subset circumcentres inside each top simplex, indexed by local vertex subsets
    subsets = {}
    for k in range(1, n + 2):
        for comb in itertools.combinations(range(n + 1), k):
            sub = pts[:, list(comb), :]
            c, bary = _circumcenters(sub)
            subsets[comb] = (c, bary, sub.mean(axis=1))
    # well centred: every face's circumcentre strictly inside that face
    ok = np.ones(nt, dtype=bool)
    for comb, (_, bary, _) in subsets.items():
        if len(comb) >= 3:
            ok &= bary.min(axis=1) > well_centred_tol
    lookup = []
    for p in range(n + 1):
        table = mesh.simplices[p]
        lookup.append({tuple(row): i for i, row in enumerate(table)} if p < n else None)

    duals = [np.zeros(mesh.num_simplices(p)) for p in range(n + 1)]
    duals[n][:] = 1.0
    for p in range(n):
        acc = duals[p]
        for comb in itertools.combinations(range(n + 1), p + 1):
            glob = np.sort(top[:, list(comb)], axis=1)
            ids = np.array([lookup[p][tuple(r)] for r in glob])
            total = np.zeros(nt)
            # flags: add remaining local vertices one at a time
            rest = [v for v in range(n + 1) if v not in comb]
            for order in itertools.permutations(rest):
                chain = [tuple(sorted(comb))]
                for v in order:
                    chain.append(tuple(sorted(chain[-1] + (v,))))
                circ = np.ones(nt)
                for lo, hi, v in zip(chain[:-1], chain[1:], order):
                    c_lo, _, _ = subsets[lo]
                    c_hi, bary_hi, _ = subsets[hi]
                    leg = np.linalg.norm(c_hi - c_lo, axis=1)
                    # side of c_hi relative to face lo within hi: sign of the
                    # barycentric weight of the vertex opposite lo
                    sign = np.sign(bary_hi[:, hi.index(v)])
                    circ *= leg * sign
                circ /= math.factorial(n - p)
                bar = _flag_measure(np.stack([subsets[c][2] for c in chain], axis=1))
                total += np.where(ok, circ, bar)
            np.add.at(acc, ids, total)
    return duals, ok


class HodgeOperators:
    """Assembled DEC operators on a mesh.

    Attributes
    ----------
    d : list of sparse matrices, ``d[p] : C^p -> C^{p+1}``
    star : list of 1-D arrays, diagonal of the Hodge star on p-cochains
    well_centred : bool array, per top simplex
    """

    def __init__(self, mesh: SimplicialMesh):
        self.mesh = mesh
        n = mesh.dim
        self.d = [mesh.coboundary_matrix(p) for p in range(n)]
        duals, ok = _dual_volumes(mesh)
        self.well_centred = ok
        self.dual_volumes = duals
        self.star = []
        for p in range(n + 1):
            s = duals[p] / mesh.volumes[p]
            if np.any(~(s > 0)):
                bad = int(np.flatnonzero(~(s > 0))[0])
                raise DecError(f"Hodge star on {p}-simplex {bad} is not positive ({s[bad]:.3e})")
            s.setflags(write=False)
            self.star.append(s)
        self._cache = {}

    # basic operators ---------------------------------------------------
    def star_matrix(self, p, inverse=False):
        s = self.star[p]
        return sp.diags(1.0 / s if inverse else s)

    def codifferential(self, p):
        """Matrix of d* : C^p -> C^{p-1}, the adjoint of d[p-1] in the star inner product."""
        if not 1 <= p <= self.mesh.dim:
            raise ValueError("codifferential defined for 1 <= p <= n")
        return (self.star_matrix(p - 1, True) @ self.d[p - 1].T @ self.star_matrix(p)).tocsr()

    def stiffness(self, p):
        """Symmetric K_p = star_p Laplacian_p."""
        key = ("K", p)
        if key not in self._cache:
            n = self.mesh.dim
            K = sp.csr_matrix((self.mesh.num_simplices(p),) * 2)
            if p < n:
                K = K + self.d[p].T @ self.star_matrix(p + 1) @ self.d[p]
            if p > 0:
                B = self.star_matrix(p) @ self.d[p - 1]
                K = K + B @ self.star_matrix(p - 1, True) @ B.T
            self._cache[key] = K.tocsr()
        return self._cache[key]

    def laplacian(self, p):
        """Hodge Laplacian (d + d*)^2 on p-cochains."""
        return (self.star_matrix(p, True) @ self.stiffness(p)).tocsr()

    # cochain-level wrappers --------------------------------------------
    def coboundary(self, c: Cochain) -> Cochain:
        if c.mesh is not self.mesh:
            raise ValueError("cochain from a different mesh")
        if c.degree >= self.mesh.dim:
            raise ValueError("no coboundary of a top-degree cochain")
        return Cochain(c.degree + 1, self.d[c.degree] @ c.values, self.mesh)

    def codiff(self, c: Cochain) -> Cochain:
        return Cochain(c.degree - 1, self.codifferential(c.degree) @ c.values, self.mesh)

    def inner_product(self, a: Cochain, b: Cochain) -> float:
        a._check(b)
        if a.mesh is not self.mesh:
            raise ValueError("cochain from a different mesh")
        return float(a.values @ (self.star[a.degree] * b.values))

    def l2_norm(self, a: Cochain) -> float:
        return math.sqrt(max(self.inner_product(a, a), 0.0))

    def linf_norm(self, a: Cochain) -> float:
        """Pointwise sup estimate of a 1-cochain.

        The Whitney interpolant is evaluated at each top-simplex barycentre;
        that value is exact for constant-coefficient forms.
        """
        if a.degree != 1:
            raise ValueError("linf_norm implemented for 1-cochains")
        vec = self.whitney_barycentre_matrix() @ a.values
        vec = vec.reshape(self.mesh.num_simplices(self.mesh.dim), -1)
        return float(np.linalg.norm(vec, axis=1).max())

    def pointwise_vectors(self, a: Cochain):
        """Whitney-interpolated covector at every top-simplex barycentre, (T, m)."""
        vec = self.whitney_barycentre_matrix() @ a.values
        return vec.reshape(self.mesh.num_simplices(self.mesh.dim), -1)

    def whitney_barycentre_matrix(self):
        """Sparse map from 1-cochains to stacked barycentre covectors (T*m rows)."""
        if "R" in self._cache:
            return self._cache["R"]
        mesh = self.mesh
        n, m = mesh.dim, mesh.embed_dim
        grads = barycentric_gradients(mesh)
        top = mesh.simplices[n]
        e_lookup = {tuple(r): i for i, r in enumerate(mesh.simplices[1])}
        rows, cols, vals = [], [], []
        T = len(top)
        for a, b in itertools.combinations(range(n + 1), 2):
            va, vb = top[:, a], top[:, b]
            lo_first = va < vb
            ida = np.where(lo_first, a, b)
            idb = np.where(lo_first, b, a)
            edge = np.array([e_lookup[(min(x, y), max(x, y))] for x, y in zip(va, vb)])
            # W_{ij} at the barycentre: (grad l_j - grad l_i) / (n + 1)
            w = (grads[np.arange(T), idb] - grads[np.arange(T), ida]) / (n + 1)
            for k in range(m):
                rows.append(np.arange(T) * m + k)
                cols.append(edge)
                vals.append(w[:, k])
        R = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(T * m, mesh.num_simplices(1)))
        self._cache["R"] = R
        return R

    # solves --------------------------------------------------------------
    def _laplace0_factor(self):
        if "L0" not in self._cache:
            L = (self.d[0].T @ self.star_matrix(1) @ self.d[0]).tocsc()
            # pin vertex 0: removes the constant kernel on a connected mesh
            self._cache["L0"] = spla.splu(L[1:, 1:].tocsc())
        return self._cache["L0"]

    def exact_potential(self, values):
        """Potential alpha minimising |d alpha - w| in the star norm, with alpha[0] = 0."""
        rhs = self.d[0].T @ (self.star[1] * values)
        alpha = np.zeros(self.mesh.num_simplices(0))
        alpha[1:] = self._laplace0_factor().solve(rhs[1:])
        return alpha

    def exact_projection(self, values):
        return self.d[0] @ self.exact_potential(values)

    def harmonic_basis(self, seed=0):
        if "H" not in self._cache:
            self._cache["H"] = _harmonic_basis(self, seed)
        return self._cache["H"]

    def harmonic_projection(self, values):
        H = self.harmonic_basis()
        if H.shape[1] == 0:
            return np.zeros_like(values)
        return H @ (H.T @ (self.star[1] * values))

    def hodge_decompose(self, w: Cochain):
        """Split a 1-cochain as exact + coexact + harmonic (star-orthogonal)."""
        if w.degree != 1:
            raise ValueError("hodge_decompose expects a 1-cochain")
        if w.mesh is not self.mesh:
            raise ValueError("cochain from a different mesh")
        exact = self.exact_projection(w.values)
        residual = self.d[0].T @ (self.star[1] * (w.values - exact))
        scale = np.linalg.norm(self.d[0].T @ (self.star[1] * w.values)) + np.linalg.norm(w.values) + 1e-300
        if np.linalg.norm(residual) > 1e-8 * scale:
            raise SolverError("exact-part solve did not converge", residual=float(np.linalg.norm(residual)))
        harm = self.harmonic_projection(w.values - exact)
        co = w.values - exact - harm
        return (Cochain(1, exact, self.mesh), Cochain(1, co, self.mesh), Cochain(1, harm, self.mesh))

    def export_triplets(self, directory):
        """Write d_p, star_p and the 1-form stiffness as ``row col value`` text files."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        files = []

        def dump(name, M):
            M = sp.coo_matrix(M)
            order = np.lexsort((M.col, M.row))
            path = out / f"{name}.txt"
            with path.open("w") as fh:
                fh.write(f"# {M.shape[0]} {M.shape[1]} {M.nnz}\n")
                for r, c, v in zip(M.row[order], M.col[order], M.data[order]):
                    fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")
            files.append(path)

        for p, D in enumerate(self.d):
            dump(f"d{p}", D)
        for p in range(self.mesh.dim + 1):
            dump(f"star{p}", sp.diags(self.star[p]))
        dump("K1", self.stiffness(1))
        return files


def barycentric_gradients(mesh):
    """Gradients of barycentric coordinates in each top simplex, (T, n+1, m)."""
    pts = mesh.local_coords(mesh.dim)
    e = pts[:, 1:, :] - pts[:, :1, :]
    # rows of pinv(E) are the gradients of l_1..l_n (tangent to the simplex)
    pinv = np.linalg.pinv(e)  # (T, m, n)
    g = np.transpose(pinv, (0, 2, 1))
    g0 = -g.sum(axis=1, keepdims=True)
    return np.concatenate([g0, g], axis=1)


def whitney_mass(mesh):
    """Consistent mass matrix of Whitney 1-forms, M[e, e'] = integral of W_e . W_e'."""
    n = mesh.dim
    top = mesh.simplices[n]
    T = len(top)
    G = barycentric_gradients(mesh)
    vol = mesh.volumes[n]
    # integral of l_a l_b over a simplex is |T| (1 + delta_ab) / ((n + 1)(n + 2))
    c = vol / ((n + 1) * (n + 2))
    dots = np.einsum("tam,tbm->tab", G, G)
    e_lookup = {tuple(r): i for i, r in enumerate(mesh.simplices[1])}
    local = []
    for a, b in itertools.combinations(range(n + 1), 2):
        va, vb = top[:, a], top[:, b]
        flip = va > vb
        i = np.where(flip, b, a)
        j = np.where(flip, a, b)
        ids = np.array([e_lookup[(min(x, y), max(x, y))] for x, y in zip(va, vb)])
        local.append((i, j, ids))
    rows, cols, vals = [], [], []
    t = np.arange(T)
    for (i, j, e1), (k, l, e2) in itertools.product(local, repeat=2):
        # W_ij . W_kl = l_i l_k g_j.g_l - l_i l_l g_j.g_k - l_j l_k g_i.g_l + l_j l_l g_i.g_k
        def I(p, q):
            return c * (1.0 + (p == q))
        val = (I(i, k) * dots[t, j, l] - I(i, l) * dots[t, j, k]
               - I(j, k) * dots[t, i, l] + I(j, l) * dots[t, i, k])
        rows.append(e1)
        cols.append(e2)
        vals.append(val)
    N = mesh.num_simplices(1)
    M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    return (0.5 * (M + M.T)).tocsr()


def _harmonic_basis(ops: HodgeOperators, seed=0, max_k=24):
    mesh = ops.mesh
    N = mesh.num_simplices(1)
    K = ops.stiffness(1)
    M = ops.star_matrix(1)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(N)
    # small negative shift keeps K - sigma M positive definite
    diag = K.diagonal() / ops.star[1]
    sigma = -1e-6 * float(np.median(diag))
    lu = spla.splu((K - sigma * M).tocsc())
    op = spla.LinearOperator((N, N), matvec=lu.solve, dtype=float)
    k = 8
    while True:
        k = min(k, N - 2)
        vals, vecs = eigsh(K, k=k, M=M, sigma=sigma, OPinv=op, v0=v0, tol=1e-12, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        ref = None
        gaps = np.abs(vals)
        # first eigenvalue clearly away from zero sets the scale
        big = np.flatnonzero(gaps > 1e-6 * diag.min())
        if len(big):
            ref = gaps[big[0]]
        if ref is None:
            if k >= min(max_k, N - 2):
                raise KernelAmbiguityError(vals)
            k *= 2
            continue
        kernel = gaps < 1e-8 * ref
        nk = int(kernel.sum())
        if nk and not kernel[:nk].all():
            raise KernelAmbiguityError(vals)
        # ambiguity: values between the kernel threshold and a clear gap
        grey = (gaps >= 1e-8 * ref) & (gaps < 1e-3 * ref)
        if grey.any():
            raise KernelAmbiguityError(vals)
        if nk == k and k < min(max_k, N - 2):
            k *= 2
            continue
        H = vecs[:, :nk]
        break
    if H.shape[1]:
        # remove residual exact components, then star-orthonormalise
        for j in range(H.shape[1]):
            H[:, j] -= ops.exact_projection(H[:, j])
        G = H.T @ (ops.star[1][:, None] * H)
        L = np.linalg.cholesky(G)
        H = np.linalg.solve(L, H.T).T
        H = _canonical_rotation(ops, H)
    H.setflags(write=False)
    return H


def _canonical_rotation(ops, H):
    """Deterministic basis for the kernel: align with coordinate directions when possible."""
    mesh = ops.mesh
    vec = (ops.whitney_barycentre_matrix() @ H).reshape(mesh.num_simplices(mesh.dim), mesh.embed_dim, -1)
    mean = vec.mean(axis=0)  # (m, k)
    if H.shape[1] <= mesh.embed_dim and np.linalg.matrix_rank(mean, tol=1e-8) == H.shape[1]:
        # QR of the mean-direction matrix gives an orthogonal rotation
        q, r = np.linalg.qr(mean.T)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1
        rot = q * signs
        return H @ rot
    return H


def sample_form(mesh: SimplicialMesh, form, order=6) -> Cochain:
    """Integrate a covector field along every edge (Gauss-Legendre on the chord).

    ``form`` maps points (N, m) to covectors (N, m).
    """
    pts = mesh.local_coords(1)
    a, b = pts[:, 0, :], pts[:, 1, :]
    t, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t + 1)
    w = 0.5 * w
    delta = b - a
    total = np.zeros(len(a))
    for ti, wi in zip(t, w):
        x = a + ti * delta
        total += wi * np.einsum("nm,nm->n", form(x), delta)
    return Cochain(1, total, mesh)


def sample_function(mesh: SimplicialMesh, f) -> Cochain:
    return Cochain(0, np.asarray(f(mesh.vertices), dtype=float), mesh)


def hodge_operators(mesh: SimplicialMesh) -> HodgeOperators:
    """Assembled operators, memoised on the mesh object."""
    ops = getattr(mesh, "_hodge_ops", None)
    if ops is None:
        ops = HodgeOperators(mesh)
        mesh._hodge_ops = ops
    return ops


def coboundary(c: Cochain) -> Cochain:
    return hodge_operators(c.mesh).coboundary(c)


def inner_product(a: Cochain, b: Cochain) -> float:
    return hodge_operators(a.mesh).inner_product(a, b)


def l2_norm(a: Cochain) -> float:
    return hodge_operators(a.mesh).l2_norm(a)


def linf_norm(a: Cochain) -> float:
    return hodge_operators(a.mesh).linf_norm(a)


def hodge_decompose(w: Cochain):
    return hodge_operators(w.mesh).hodge_decompose(w)


def harmonic_basis(mesh: SimplicialMesh):
    H = hodge_operators(mesh).harmonic_basis()
    return [Cochain(1, H[:, j].copy(), mesh) for j in range(H.shape[1])]


def write_cochain(c: Cochain, path):
    """Plain text: a header line 'degree count', then one value per line in simplex order."""
    with open(path, "w") as fh:
        fh.write(f"{c.degree} {len(c.values)}\n")
        for v in c.values:
            fh.write(f"{float(v)!r}\n")


def read_cochain(path, mesh: SimplicialMesh) -> Cochain:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DecError(f"{path}: header must be 'degree count'")
        degree, count = int(header[0]), int(header[1])
        values = np.array([float(line) for line in fh if line.strip()])
    if len(values) != count:
        raise DecError(f"{path}: expected {count} values, found {len(values)}")
    if count != mesh.num_simplices(degree):
        raise DecError(f"{path}: {count} values but the mesh has {mesh.num_simplices(degree)} "
                       f"{degree}-simplices")
    return Cochain(degree, values, mesh)
