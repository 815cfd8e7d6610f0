"""Geometry backends: simplicial meshes and analytic model spaces.

Meshes carry a geometric realization in an embedding chart, optionally
periodic (flat tori are realized on a fundamental domain with minimal-image
edge vectors).  Model spaces carry closed-form metric data: metric tensor,
Christoffel symbols, and distance.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class GeometryError(ValueError):
    """Invalid geometric input."""


class DegenerateSimplexError(GeometryError):
    def __init__(self, dim, simplex_id, volume):
        self.dim = dim
        self.simplex_id = int(simplex_id)
        self.volume = float(volume)
        super().__init__(f"degenerate {dim}-simplex {simplex_id} (volume {volume:.3e})")


class DomainError(GeometryError):
    """Point outside the chart of a model space."""


def _permutation_parity(perm):
    perm = list(perm)
    parity = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                parity = -parity
    return parity


def _simplex_volumes(edges):
    """Unsigned volumes of simplices given edge vectors, shape (N, k, m)."""
    k = edges.shape[1]
    if k == 0:
        return np.ones(edges.shape[0])
    gram = np.einsum("nim,njm->nij", edges, edges)
    det = np.linalg.det(gram)
    return np.sqrt(np.clip(det, 0.0, None)) / math.factorial(k)


class SimplicialMesh:
    """Oriented closed simplicial n-manifold (n = 2 or 3) with coordinates.

    Parameters
    ----------
    vertices : (V, m) array
        Vertex coordinates in the embedding (or periodic) chart.
    simplices : (T, n+1) int array
        Top simplices; the given vertex order defines the orientation.
    periods : (m,) array, optional
        Periods of the fundamental domain.  Edge vectors are taken as
        minimal images, so every edge must be shorter than half a period.
    """

    def __init__(self, vertices, simplices, periods=None, name="mesh", generator=None,
                 validate=True):
        self.vertices = np.array(vertices, dtype=float, order="C")
        top = np.ascontiguousarray(simplices, dtype=np.int64)
        if top.ndim != 2 or top.shape[1] not in (3, 4):
            raise GeometryError("top simplices must be triangles or tetrahedra")
        self.dim = top.shape[1] - 1
        self.embed_dim = self.vertices.shape[1]
        self.periods = None if periods is None else np.asarray(periods, dtype=float)
        self.name = name
        self.generator = dict(generator or {})

        # simplices[p]: vertex tuples; sorted for p < n, oriented for p = n
        self.simplices = [None] * (self.dim + 1)
        self.simplices[self.dim] = top
        self.boundary = [None] * (self.dim + 1)
        self._build_faces()
        self.vertices.setflags(write=False)

        self.volumes = [self._volumes(p) for p in range(self.dim + 1)]
        if validate:
            self.validate()

    # ------------------------------------------------------------------
    # combinatorics
    def _build_faces(self):
        n = self.dim
        current = self.simplices[n]
        for p in range(n, 0, -1):
            k = p + 1
            faces, signs = [], []
            for i in range(k):
                cols = [c for c in range(k) if c != i]
                face = current[:, cols]
                order = np.argsort(face, axis=1, kind="stable")
                sorted_face = np.take_along_axis(face, order, axis=1)
                if p == n:
                    parity = np.array([_permutation_parity(o) for o in order])
                else:
                    parity = np.ones(len(face), dtype=int)
                faces.append(sorted_face)
                signs.append(((-1) ** i) * parity)
            faces = np.concatenate(faces)
            signs = np.concatenate(signs)
            uniq, inverse = np.unique(faces, axis=0, return_inverse=True)
            inverse = inverse.ravel()
            cols = np.tile(np.arange(len(current)), k)
            self.boundary[p] = sp.csr_matrix(
                (signs.astype(float), (inverse, cols)), shape=(len(uniq), len(current)))
            self.simplices[p - 1] = uniq
            current = uniq
        self.simplices[0] = np.arange(len(self.vertices)).reshape(-1, 1)

    def num_simplices(self, p):
        return len(self.simplices[p])

    @property
    def counts(self):
        return tuple(self.num_simplices(p) for p in range(self.dim + 1))

    def euler_characteristic(self):
        return int(sum((-1) ** p * c for p, c in enumerate(self.counts)))

    def coboundary_matrix(self, p):
        """Integer coboundary d_p : C^p -> C^{p+1} as a sparse matrix."""
        if not 0 <= p < self.dim:
            raise ValueError(f"no coboundary from degree {p} on a {self.dim}-mesh")
        return self.boundary[p + 1].T.tocsr()

    # ------------------------------------------------------------------
    # geometry
    def minimal_image(self, delta):
        if self.periods is None:
            return delta
        return delta - self.periods * np.round(delta / self.periods)

    def local_coords(self, p, ids=None):
        """Unwrapped vertex coordinates of p-simplices, shape (N, p+1, m)."""
        simp = self.simplices[p] if ids is None else self.simplices[p][ids]
        pts = self.vertices[simp]
        if self.periods is not None and p > 0:
            base = pts[:, :1, :]
            pts = base + self.minimal_image(pts - base)
        return pts

    def _volumes(self, p):
        if p == 0:
            return np.ones(self.num_simplices(0))
        pts = self.local_coords(p)
        return _simplex_volumes(pts[:, 1:, :] - pts[:, :1, :])

    def edge_lengths(self):
        return self.volumes[1]

    def barycenters(self, p=None):
        p = self.dim if p is None else p
        return self.local_coords(p).mean(axis=1)

    def total_volume(self):
        return float(self.volumes[self.dim].sum())

    def validate(self):
        n = self.dim
        counts = np.asarray(abs(self.boundary[n]).sum(axis=1)).ravel()
        if np.any(counts != 2):
            bad = int(np.flatnonzero(counts != 2)[0])
            raise GeometryError(f"mesh not closed: {n - 1}-face {bad} has {counts[bad]:.0f} cofaces")
        induced = self.boundary[n] @ np.ones(self.num_simplices(n))
        if np.any(np.abs(induced) > 0.5):
            bad = int(np.flatnonzero(np.abs(induced) > 0.5)[0])
            raise GeometryError(f"mesh not consistently oriented at {n - 1}-face {bad}")
        for p in range(1, n + 1):
            vol = self.volumes[p]
            scale = vol.max() if len(vol) else 1.0
            small = np.flatnonzero(vol <= 1e-12 * scale)
            if len(small):
                raise DegenerateSimplexError(p, small[0], vol[small[0]])
        if self.total_volume() <= 0:
            raise GeometryError("total volume must be positive")

    def quality(self):
        """Mesh statistics; not interpreted as an injectivity radius."""
        h = self.edge_lengths()
        return {"h_max": float(h.max()), "h_min": float(h.min()),
                "h_mean": float(h.mean()), "counts": list(self.counts)}

    def __repr__(self):
        return f"SimplicialMesh({self.name!r}, dim={self.dim}, counts={self.counts})"


# ----------------------------------------------------------------------
# generators

def torus_mesh(periods=(2 * math.pi, 2 * math.pi), n=32, ny=None):
    """Flat 2-torus triangulated by near-equilateral (acute) triangles.

    Rows are shifted by half a cell on alternate lines, so every triangle is
    isosceles with base ``periods[0]/n``.  ``ny`` defaults to the even row
    count making the triangles closest to equilateral.
    """
    px, py = map(float, periods)
    nx = int(n)
    if ny is None:
        ny = max(2, 2 * int(round(nx * (py / px) / math.sqrt(3))))
    if ny % 2:
        raise GeometryError("row count must be even for the shifted torus mesh")
    if nx < 3 or ny < 4:
        raise GeometryError("torus mesh too coarse for minimal-image edges")
    hx, hy = px / nx, py / ny
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    xs = (ii + 0.5 * (jj % 2)) * hx
    ys = jj * hy
    verts = np.column_stack([xs.ravel(), ys.ravel()])

    def vid(i, j):
        return (j % ny) * nx + (i % nx)

    tris = []
    for j in range(ny):
        for i in range(nx):
            if j % 2 == 0:
                tris.append((vid(i, j), vid(i + 1, j), vid(i, j + 1)))
                tris.append((vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
            else:
                tris.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))
                tris.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
    gen = {"kind": "torus2", "periods": [px, py], "n": nx, "ny": ny}
    return SimplicialMesh(verts, np.array(tris), periods=(px, py),
                          name=f"torus2[{nx}x{ny}]", generator=gen)


def torus3_mesh(period=2 * math.pi, n=8):
    """Flat cubic 3-torus with the body-centred-cubic tetrahedralization.

    Every tetrahedron is a disphenoid whose circumcentre is its centroid, so
    the mesh is well-centred and circumcentric Hodge stars are positive.
    """
    n = int(n)
    if n < 3:
        raise GeometryError("3-torus mesh needs n >= 3")
    h = float(period) / n
    idx = np.arange(n)
    k3, j3, i3 = np.meshgrid(idx, idx, idx, indexing="ij")
    corners = np.column_stack([i3.ravel(), j3.ravel(), k3.ravel()]) * h
    verts = np.vstack([corners, corners + 0.5 * h])

    def corner(i, j, k):
        return (i % n) + n * ((j % n) + n * (k % n))

    def centre(i, j, k):
        return n ** 3 + corner(i, j, k)

    tets = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                c0 = centre(i, j, k)
                for axis in range(3):
                    step = [0, 0, 0]
                    step[axis] = 1
                    c1 = centre(i + step[0], j + step[1], k + step[2])
                    # square face shared by the two cubes
                    a1, a2 = [(axis + 1) % 3, (axis + 2) % 3]
                    base = [i, j, k]
                    base[axis] += 1
                    square = []
                    for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        q = list(base)
                        q[a1] += du
                        q[a2] += dv
                        square.append(corner(*q))
                    for s in range(4):
                        tets.append([c0, c1, square[s], square[(s + 1) % 4]])
    tets = np.array(tets)
    periods = np.full(3, float(period))
    pts = verts[tets]
    rel = pts[:, 1:, :] - pts[:, :1, :]
    rel -= periods * np.round(rel / periods)
    neg = np.linalg.det(rel) < 0
    tets[neg, 2], tets[neg, 3] = tets[neg, 3].copy(), tets[neg, 2].copy()
    gen = {"kind": "torus3", "period": float(period), "n": n}
    return SimplicialMesh(verts, tets, periods=periods, name=f"torus3[{n}]", generator=gen)


def icosphere(subdivisions=3, radius=1.0):
    """Round sphere approximated by a subdivided icosahedron (outward oriented)."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(int(subdivisions)):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    verts = np.array(verts) * float(radius)
    faces = np.array(faces)
    pts = verts[faces]
    normal = np.cross(pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0])
    flip = np.einsum("ij,ij->i", normal, pts.mean(axis=1)) < 0
    faces[flip, 1], faces[flip, 2] = faces[flip, 2].copy(), faces[flip, 1].copy()
    gen = {"kind": "sphere", "subdivisions": int(subdivisions), "radius": float(radius)}
    return SimplicialMesh(verts, faces, name=f"icosphere[{subdivisions}]", generator=gen)


def tetrahedron_surface(side=1.0):
    """Boundary of a regular tetrahedron: four equilateral triangles."""
    verts = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    verts *= side / (2 * math.sqrt(2))
    faces = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    pts = verts[faces]
    normal = np.cross(pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0])
    flip = np.einsum("ij,ij->i", normal, pts.mean(axis=1)) < 0
    faces[flip, 1], faces[flip, 2] = faces[flip, 2].copy(), faces[flip, 1].copy()
    return SimplicialMesh(verts, faces, name="tetrahedron", generator={"kind": "tetrahedron"})


def subdivide(mesh, project=True):
    """Midpoint (1-to-4) subdivision of a triangle mesh.

    On generated spheres the midpoints are pushed onto the sphere unless
    ``project`` is False, in which case the refined mesh is the same
    polyhedral surface.  Returns the refined mesh and the map sending each coarse edge to its two
    refined halves as a sparse matrix (refined edges x coarse edges), which
    pushes coarse 1-chains forward.
    """
    if mesh.dim != 2:
        raise GeometryError("subdivision implemented for triangle meshes")
    edges = mesh.simplices[1]
    nv = mesh.num_simplices(0)
    pts = mesh.local_coords(1)
    mids = 0.5 * (pts[:, 0] + pts[:, 1])
    if mesh.periods is not None:
        mids = mids - mesh.periods * np.floor(mids / mesh.periods)
    if project and mesh.generator.get("kind") == "sphere":
        mids *= mesh.generator["radius"] / np.linalg.norm(mids, axis=1, keepdims=True)
    verts = np.vstack([mesh.vertices, mids])
    lookup = {tuple(e): nv + i for i, e in enumerate(edges)}

    def m(a, b):
        return lookup[(min(a, b), max(a, b))]

    tris = []
    for a, b, c in mesh.simplices[2]:
        ab, bc, ca = m(a, b), m(b, c), m(c, a)
        tris += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    gen = dict(mesh.generator)
    gen["refined"] = gen.get("refined", 0) + 1
    fine = SimplicialMesh(verts, np.array(tris), periods=mesh.periods,
                          name=mesh.name + "/2", generator=gen)
    fine_lookup = {tuple(e): i for i, e in enumerate(fine.simplices[1])}
    rows, cols, vals = [], [], []
    for ci, (a, b) in enumerate(edges):
        mid = lookup[(a, b)]
        for u, v in ((a, mid), (mid, b)):
            key = (min(u, v), max(u, v))
            rows.append(fine_lookup[key])
            cols.append(ci)
            vals.append(1.0 if u < v else -1.0)
    refine = sp.csr_matrix((vals, (rows, cols)), shape=(fine.num_simplices(1), len(edges)))
    return fine, refine


# ----------------------------------------------------------------------
# plain-text mesh files

def write_mesh(mesh, path):
    """Write the simplex-list format: header, optional periods, vertices, simplices."""
    lines = [f"{mesh.dim} {mesh.embed_dim} {mesh.num_simplices(0)} {mesh.num_simplices(mesh.dim)}"]
    if mesh.periods is not None:
        lines.append("periods " + " ".join(repr(float(p)) for p in mesh.periods))
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines += [" ".join(str(int(i)) for i in s) for s in mesh.simplices[mesh.dim]]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, name=None):
    """Read a mesh in the simplex-list format (``#`` starts a comment)."""
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    if not rows:
        raise GeometryError(f"{path}: empty mesh file")
    try:
        dim, m, nv, nt = map(int, rows[0])
    except ValueError as exc:
        raise GeometryError(f"{path}: bad header {rows[0]}") from exc
    pos = 1
    periods = None
    if rows[pos][0] == "periods":
        periods = [float(x) for x in rows[pos][1:]]
        pos += 1
    verts = np.array(rows[pos:pos + nv], dtype=float)
    simp = np.array(rows[pos + nv:pos + nv + nt], dtype=np.int64)
    if verts.shape != (nv, m) or simp.shape != (nt, dim + 1):
        raise GeometryError(f"{path}: counts in header do not match body")
    return SimplicialMesh(verts, simp, periods=periods, name=name or Path(path).stem,
                          generator={"kind": "file", "path": str(path)})


# ----------------------------------------------------------------------
# analytic model spaces

class ModelSpace:
    """Closed-form Riemannian geometry in a single chart.

    All point/vector arguments broadcast over leading axes; the last axis is
    the coordinate index.  ``christoffel(x)[..., k, i, j]`` is Gamma^k_ij.
    """

    kind = "abstract"
    dim = 0
    periods = None

    def check(self, x):
        return np.asarray(x, dtype=float)

    def metric(self, x):
        x = self.check(x)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim)).copy()

    def inverse_metric(self, x):
        return np.linalg.inv(self.metric(x))

    def christoffel(self, x):
        x = self.check(x)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def geodesic_acceleration(self, x, v):
        """-Gamma(v, v): the coordinate acceleration of a geodesic."""
        gam = self.christoffel(x)
        return -np.einsum("...kij,...i,...j->...k", gam, v, v)

    def inner(self, x, u, v):
        return np.einsum("...i,...ij,...j->...", u, self.metric(x), v)

    def norm(self, x, v):
        return np.sqrt(np.clip(self.inner(x, v, v), 0.0, None))

    def covector_norm(self, x, w):
        return np.sqrt(np.clip(np.einsum("...i,...ij,...j->...", w, self.inverse_metric(x), w), 0, None))

    def raise_index(self, x, w):
        return np.einsum("...ij,...j->...i", self.inverse_metric(x), w)

    def project(self, x, v):
        """Project an ambient vector to the tangent space (identity in a chart)."""
        return np.asarray(v, dtype=float)

    def distance(self, x, y):
        raise NotImplementedError

    def volume(self):
        return math.inf

    def describe(self):
        return {"kind": self.kind, "dim": self.dim}


class EuclideanSpace(ModelSpace):
    kind = "euclidean"

    def __init__(self, dim=2):
        self.dim = int(dim)

    def distance(self, x, y):
        return np.linalg.norm(np.asarray(y, float) - np.asarray(x, float), axis=-1)


class FlatTorus(ModelSpace):
    """R^n modulo a rectangular period lattice; coordinates are lifts."""

    kind = "flat_torus"

    def __init__(self, periods=(2 * math.pi, 2 * math.pi)):
        self.periods = np.asarray(periods, dtype=float)
        self.dim = len(self.periods)

    def wrap(self, x):
        return np.asarray(x, float) % self.periods

    def distance(self, x, y):
        delta = np.asarray(y, float) - np.asarray(x, float)
        delta = delta - self.periods * np.round(delta / self.periods)
        return np.linalg.norm(delta, axis=-1)

    def winding(self, displacement):
        return np.round(np.asarray(displacement) / self.periods).astype(int)

    def volume(self):
        return float(np.prod(self.periods))

    def describe(self):
        return {"kind": self.kind, "dim": self.dim, "periods": self.periods.tolist()}


class UpperHalfSpace(ModelSpace):
    """Hyperbolic n-space, metric |dx|^2 / x_n^2 on {x_n > 0}."""

    kind = "upper_half_space"

    def __init__(self, dim=2):
        self.dim = int(dim)

    def check(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(~(x[..., -1] > 0)):
            raise DomainError("point outside the upper half-space chart (height must be positive)")
        return x

    def metric(self, x):
        x = self.check(x)
        h = x[..., -1]
        return np.eye(self.dim) / (h[..., None, None] ** 2)

    def inverse_metric(self, x):
        x = self.check(x)
        return np.eye(self.dim) * (x[..., -1][..., None, None] ** 2)

    def christoffel(self, x):
        x = self.check(x)
        n = self.dim
        eye = np.eye(n)
        e_n = eye[n - 1]
        # Gamma^k_ij = -(d_ik e_j + d_jk e_i - d_ij e_k) / x_n
        gam = -(np.einsum("ik,j->kij", eye, e_n) + np.einsum("jk,i->kij", eye, e_n)
                - np.einsum("ij,k->kij", eye, e_n))
        return gam / x[..., -1][..., None, None, None]

    def geodesic_acceleration(self, x, v):
        h = x[..., -1:]
        vn = v[..., -1:]
        acc = 2.0 * vn * v / h
        acc[..., -1] -= (np.sum(v * v, axis=-1)) / h[..., 0]
        return acc

    def distance(self, x, y):
        x = self.check(x)
        y = self.check(y)
        chord = np.linalg.norm(y - x, axis=-1)
        return 2.0 * np.arcsinh(chord / (2.0 * np.sqrt(x[..., -1] * y[..., -1])))


class RoundSphere(ModelSpace):
    """Round sphere of radius R, worked in ambient R^3 coordinates.

    Tangent vectors are ambient vectors orthogonal to the position.  The
    spherical chart (polar angle, azimuth) is available separately for the
    intrinsic metric and Christoffel symbols.
    """

    kind = "round_sphere"

    def __init__(self, radius=1.0):
        self.radius = float(radius)
        self.dim = 3

    def project(self, x, v):
        x = np.asarray(x, float)
        n = x / np.linalg.norm(x, axis=-1, keepdims=True)
        return v - np.sum(v * n, axis=-1, keepdims=True) * n

    def christoffel(self, x):
        # constrained ambient form, valid on tangent vectors
        x = np.asarray(x, float)
        return np.einsum("...k,ij->...kij", x, np.eye(3)) / self.radius ** 2

    def geodesic_acceleration(self, x, v):
        return -np.sum(v * v, axis=-1, keepdims=True) * x / self.radius ** 2

    def distance(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        cross = np.linalg.norm(np.cross(x, y), axis=-1)
        return self.radius * np.arctan2(cross, np.sum(x * y, axis=-1))

    def volume(self):
        return 4.0 * math.pi * self.radius ** 2

    def chart_metric(self, q):
        """Metric in (theta, phi) coordinates."""
        q = np.asarray(q, float)
        g = np.zeros(q.shape[:-1] + (2, 2))
        g[..., 0, 0] = self.radius ** 2
        g[..., 1, 1] = (self.radius * np.sin(q[..., 0])) ** 2
        return g

    def chart_christoffel(self, q):
        q = np.asarray(q, float)
        th = q[..., 0]
        gam = np.zeros(q.shape[:-1] + (2, 2, 2))
        gam[..., 0, 1, 1] = -np.sin(th) * np.cos(th)
        gam[..., 1, 0, 1] = gam[..., 1, 1, 0] = np.cos(th) / np.sin(th)
        return gam

    def from_chart(self, q):
        q = np.asarray(q, float)
        th, ph = q[..., 0], q[..., 1]
        return self.radius * np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)

    def describe(self):
        return {"kind": self.kind, "dim": 2, "radius": self.radius}


def volume(geometry):
    """Volume of a mesh (sum of top-simplex volumes) or a model space (closed form)."""
    if isinstance(geometry, SimplicialMesh):
        return geometry.total_volume()
    return geometry.volume()


def distance(space, x, y):
    return space.distance(x, y)


def metric_compatibility_defect(metric, christoffel, x, h=1e-5):
    """max |d_k g_ij - (Gamma^l_ki g_lj + Gamma^l_kj g_il)| by central differences.

    Relative to max(1, max |d_k g_ij|), so the check is independent of where
    in the chart it is evaluated (the hyperbolic metric blows up near y = 0).
    """
    x = np.asarray(x, float)
    n = x.shape[-1]
    g = metric(x)
    gam = christoffel(x)
    worst = 0.0
    scale = 1.0
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        dg = (metric(x + e) - metric(x - e)) / (2 * h)
        rhs = (np.einsum("li,lj->ij", gam[:, k, :], g) + np.einsum("lj,il->ij", gam[:, k, :], g))
        worst = max(worst, float(np.max(np.abs(dg - rhs))))
        scale = max(scale, float(np.max(np.abs(dg))))
    return worst / scale


__all__ = [name for name in dir() if not name.startswith("_") and name not in {
    "annotations", "math", "np", "sp", "Path"}]
