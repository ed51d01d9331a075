"""Delaunay triangulation (d <= 3) and piecewise-linear simplex interpolation.

Construction is incremental Bowyer-Watson inside a large super-simplex;
1D degenerates to sorted segments.  Prediction locates the containing
simplex by a barycentric neighbor walk (numba kernel) and interpolates
linearly with barycentric weights.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels

WALK_TOL = 1e-12
DUPLICATE_TOL = 1e-12
DEGENERACY_FACTOR = 1e-12
SUPER_SCALE = 1e4
INSPHERE_REL_TOL = 1e-12


class TriangulationError(ValueError):
    pass


class OutsideHullError(ValueError):
    pass


@dataclass(frozen=True)
class Triangulation:
    dim: int
    vertices: np.ndarray  # (n, d)
    values: np.ndarray  # (n,)
    simplices: np.ndarray  # (ns, d+1) vertex indices
    neighbors: np.ndarray  # (ns, d+1), entry i = simplex across facet opposite vertex i
    tinv: np.ndarray  # (ns, d, d) barycentric transforms
    vlast: np.ndarray  # (ns, d) coordinates of each simplex's last vertex

    @property
    def n_simplices(self):
        return self.simplices.shape[0]

    @property
    def n_params(self):
        """Stored parameter count: vertex coordinates plus values."""
        return self.vertices.shape[0] * (self.dim + 1)


def simplex_volume(points):
    """Volume of the simplex with rows of `points` as vertices."""
    t = points[:-1] - points[-1]
    return abs(np.linalg.det(t)) / math.factorial(points.shape[0] - 1)


def _barycentric_transform(points):
    """(Tinv, vlast) such that w[:d] = Tinv @ (x - vlast), w[d] = 1 - sum."""
    t = (points[:-1] - points[-1]).T
    return np.linalg.inv(t), points[-1]


def _circumsphere(points):
    """(center, r2) of the sphere through the simplex vertices."""
    v0 = points[0]
    a = 2.0 * (points[1:] - v0)
    rhs = np.einsum("ij,ij->i", points[1:], points[1:]) - v0 @ v0
    try:
        center = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        center, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    diff = v0 - center
    return center, float(diff @ diff)


class _Builder:
    """Mutable Bowyer-Watson state; ids are reused-free increasing ints."""

    def __init__(self, verts):
        self.verts = verts
        self.simp = {}
        self.neigh = {}
        self.tinv = {}
        self.vlast = {}
        self.center = {}
        self.r2 = {}
        self.next_id = 0
        self.last = None  # walk start cache

    def add_simplex(self, vertex_ids, neighbor_ids):
        sid = self.next_id
        self.next_id += 1
        pts = self.verts[list(vertex_ids)]
        self.simp[sid] = tuple(vertex_ids)
        self.neigh[sid] = list(neighbor_ids)
        self.tinv[sid], self.vlast[sid] = _barycentric_transform(pts)
        self.center[sid], self.r2[sid] = _circumsphere(pts)
        return sid

    def remove(self, sid):
        for table in (
            self.simp,
            self.neigh,
            self.tinv,
            self.vlast,
            self.center,
            self.r2,
        ):
            del table[sid]

    def barycentric(self, sid, x):
        w = self.tinv[sid] @ (x - self.vlast[sid])
        return np.append(w, 1.0 - w.sum())

    def locate(self, x):
        sid = self.last if self.last in self.simp else next(iter(self.simp))
        for _ in range(2 * len(self.simp) + 10):
            w = self.barycentric(sid, x)
            imin = int(np.argmin(w))
            if w[imin] >= -WALK_TOL:
                self.last = sid
                return sid
            nxt = self.neigh[sid][imin]
            if nxt < 0:
                raise TriangulationError("walk exited the super-simplex")
            sid = nxt
        # cycle on near-degenerate geometry: brute-force scan
        for sid, _ in self.simp.items():
            if self.barycentric(sid, x).min() >= -WALK_TOL:
                self.last = sid
                return sid
        raise TriangulationError("point location failed")

    def in_sphere(self, sid, x):
        diff = x - self.center[sid]
        return diff @ diff <= self.r2[sid] * (1.0 + INSPHERE_REL_TOL)

    def insert(self, ip):
        x = self.verts[ip]
        seed = self.locate(x)
        # grow the cavity: all simplices whose circumsphere contains x
        bad = {seed}
        stack = [seed]
        while stack:
            sid = stack.pop()
            for nb in self.neigh[sid]:
                if nb >= 0 and nb not in bad and self.in_sphere(nb, x):
                    bad.add(nb)
                    stack.append(nb)
        # skip points coincident with an existing vertex
        scale = 1.0 + float(np.abs(x).max())
        for sid in bad:
            for v in self.simp[sid]:
                if v != ip and np.abs(self.verts[v] - x).max() <= DUPLICATE_TOL * scale:
                    return
        # boundary facets -> new simplices capped by the new point
        created = []
        facet_map = {}
        for sid in bad:
            vs = self.simp[sid]
            for i, outside in enumerate(self.neigh[sid]):
                if outside in bad:
                    continue
                facet = vs[:i] + vs[i + 1 :]
                new_id = self.add_simplex(
                    facet + (ip,), [-1] * len(facet) + [outside]
                )
                created.append(new_id)
                if outside >= 0:
                    onb = self.neigh[outside]
                    onb[onb.index(sid)] = new_id
                for k, v in enumerate(facet):
                    key = tuple(sorted(facet[:k] + facet[k + 1 :] + (ip,)))
                    if key in facet_map:
                        other, oi = facet_map.pop(key)
                        self.neigh[new_id][k] = other
                        self.neigh[other][oi] = new_id
                    else:
                        facet_map[key] = (new_id, k)
        for sid in bad:
            self.remove(sid)
        if created:
            self.last = created[-1]


def _super_simplex(points):
    """Vertices of a regular simplex dwarfing the point cloud."""
    d = points.shape[1]
    center = 0.5 * (points.min(axis=0) + points.max(axis=0))
    radius = float(np.linalg.norm(points - center, axis=1).max()) + 1.0
    # d+1 directions summing to zero: unit vectors e_1..e_d plus the origin,
    # recentered on their mean, then pushed out to the unit sphere
    corners = np.vstack([np.eye(d), np.zeros(d)])
    corners -= corners.mean(axis=0)
    norms = np.linalg.norm(corners, axis=1)
    corners = corners / norms[:, None]
    return center + SUPER_SCALE * radius * corners


def _finalize(builder, n_real, dim, values, bbox_volume):
    keep = []
    for sid, vs in builder.simp.items():
        if all(v < n_real for v in vs):
            keep.append(sid)
    if not keep:
        raise TriangulationError("no interior simplices; input degenerate?")
    vol_floor = DEGENERACY_FACTOR * bbox_volume / max(len(keep), 1)
    kept = [
        sid
        for sid in keep
        if simplex_volume(builder.verts[list(builder.simp[sid])]) >= vol_floor
    ]
    index = {sid: k for k, sid in enumerate(kept)}
    ns = len(kept)
    simplices = np.empty((ns, dim + 1), dtype=np.int64)
    neighbors = np.full((ns, dim + 1), -1, dtype=np.int64)
    tinv = np.empty((ns, dim, dim))
    vlast = np.empty((ns, dim))
    for sid, k in index.items():
        simplices[k] = builder.simp[sid]
        for i, nb in enumerate(builder.neigh[sid]):
            neighbors[k, i] = index.get(nb, -1)
        tinv[k] = builder.tinv[sid]
        vlast[k] = builder.vlast[sid]
    return Triangulation(
        dim,
        builder.verts[:n_real].copy(),
        np.asarray(values, dtype=np.float64).copy(),
        simplices,
        neighbors,
        tinv,
        vlast,
    )


def _triangulate_1d(points, values):
    xs = points[:, 0]
    order = np.argsort(xs)
    if np.any(np.diff(xs[order]) <= 0.0):
        # drop exact duplicates, keeping the first occurrence
        keep = np.concatenate([[True], np.diff(xs[order]) > 0.0])
        order = order[keep]
    if len(order) < 2:
        raise TriangulationError("need at least 2 distinct points in 1D")
    ns = len(order) - 1
    simplices = np.column_stack([order[:-1], order[1:]]).astype(np.int64)
    neighbors = np.full((ns, 2), -1, dtype=np.int64)
    # facet opposite vertex 0 is the right endpoint -> right neighbor
    neighbors[:-1, 0] = np.arange(1, ns)
    neighbors[1:, 1] = np.arange(0, ns - 1)
    tinv = np.empty((ns, 1, 1))
    vlast = np.empty((ns, 1))
    for k in range(ns):
        a, b = xs[simplices[k, 0]], xs[simplices[k, 1]]
        tinv[k, 0, 0] = 1.0 / (a - b)
        vlast[k, 0] = b
    return Triangulation(
        1,
        points.copy(),
        np.asarray(values, dtype=np.float64).copy(),
        simplices,
        neighbors,
        tinv,
        vlast,
    )


def delaunay_triangulate(points, values):
    """Delaunay triangulation of the points, with per-vertex values attached."""
    points = np.asarray(points, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if points.ndim != 2:
        raise TriangulationError("points must be an (n, d) matrix")
    n, d = points.shape
    if d not in (1, 2, 3):
        raise TriangulationError(f"dimension {d} unsupported (need 1, 2 or 3)")
    if len(values) != n:
        raise TriangulationError("values length must match point count")
    if n < d + 1:
        raise TriangulationError(f"need at least {d + 1} points in {d}D")
    spread = points.max(axis=0) - points.min(axis=0)
    if np.any(spread <= 0.0) and d > 1:
        raise TriangulationError("points are affinely degenerate")
    if d == 1:
        return _triangulate_1d(points, values)

    super_corners = _super_simplex(points)
    verts = np.vstack([points, super_corners])
    builder = _Builder(verts)
    builder.add_simplex(tuple(range(n, n + d + 1)), [-1] * (d + 1))
    order = np.random.default_rng(0).permutation(n)  # fixed order: deterministic
    for ip in order:
        builder.insert(int(ip))
    bbox_volume = float(np.prod(spread))
    tri = _finalize(builder, n, d, values, bbox_volume)
    if tri.n_simplices == 0:
        raise TriangulationError("triangulation degenerate")
    return tri


# ----------------------------------------------------------------------
# Prediction
# ----------------------------------------------------------------------

def simplex_predict_batch(tri, xs, start=0):
    """Interpolated values plus the containing-simplex id per point.

    Points outside the hull get id -1 and NaN; callers that forbid
    extrapolation should check the ids.
    """
    xs = np.ascontiguousarray(np.atleast_2d(xs), dtype=np.float64)
    if xs.shape[1] != tri.dim:
        raise ValueError(f"expected points of shape (m, {tri.dim})")
    out, loc = kernels.walk_predict(
        xs,
        tri.simplices,
        tri.neighbors,
        tri.tinv,
        tri.vlast,
        tri.values,
        start,
        WALK_TOL,
    )
    stuck = np.nonzero(loc == -2)[0]
    for k in stuck:  # walk cycled: brute-force scan
        x = xs[k]
        w = np.einsum("sij,sj->si", tri.tinv, x - tri.vlast)
        w = np.column_stack([w, 1.0 - w.sum(axis=1)])
        inside = np.nonzero(w.min(axis=1) >= -WALK_TOL)[0]
        if len(inside):
            s = int(inside[0])
            loc[k] = s
            out[k] = w[s] @ tri.values[tri.simplices[s]]
        else:
            loc[k] = -1
    return out, loc


def simplex_predict(tri, x, start=0):
    """Piecewise-linear interpolation at a single in-hull point."""
    out, loc = simplex_predict_batch(tri, np.asarray(x, dtype=np.float64).reshape(1, -1), start)
    if loc[0] < 0:
        raise OutsideHullError("point lies outside the convex hull of the vertices")
    return float(out[0])


def barycentric_coords(tri, sid, x):
    """Barycentric weights of x in simplex sid."""
    w = tri.tinv[sid] @ (np.asarray(x, dtype=np.float64) - tri.vlast[sid])
    return np.append(w, 1.0 - w.sum())


def interior_mask(domain, margin_fraction, points):
    """True where a point keeps the given margin from every domain face."""
    if not (0.0 <= margin_fraction < 0.5):
        raise ValueError("margin_fraction must lie in [0, 0.5)")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    pad = margin_fraction * (domain.hi - domain.lo)
    return np.all(
        (points >= domain.lo + pad) & (points <= domain.hi - pad), axis=1
    )


# ----------------------------------------------------------------------
# Serialization
# ----------------------------------------------------------------------

def triangulation_to_json(tri):
    return json.dumps(
        {
            "dim": tri.dim,
            "vertices": tri.vertices.tolist(),
            "values": tri.values.tolist(),
            "simplices": tri.simplices.tolist(),
        }
    )


def triangulation_from_json(text):
    obj = json.loads(text)
    dim = obj["dim"]
    vertices = np.array(obj["vertices"], dtype=np.float64)
    simplices = np.array(obj["simplices"], dtype=np.int64)
    ns = simplices.shape[0]
    neighbors = np.full((ns, dim + 1), -1, dtype=np.int64)
    facet_map = {}
    for s in range(ns):
        vs = tuple(simplices[s])
        for i in range(dim + 1):
            key = tuple(sorted(vs[:i] + vs[i + 1 :]))
            if key in facet_map:
                other, oi = facet_map.pop(key)
                neighbors[s, i] = other
                neighbors[other, oi] = s
            else:
                facet_map[key] = (s, i)
    tinv = np.empty((ns, dim, dim))
    vlast = np.empty((ns, dim))
    for s in range(ns):
        tinv[s], vlast[s] = _barycentric_transform(vertices[simplices[s]])
    return Triangulation(
        dim,
        vertices,
        np.array(obj["values"], dtype=np.float64),
        simplices,
        neighbors,
        tinv,
        vlast,
    )
