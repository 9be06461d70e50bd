"""Closed boundaries, quadrature rules and nested domain layouts.

Supported boundaries:

* 2D parametric curves (``circle``, ``ellipse``, ``star``) discretised with
  the trapezoidal rule on equispaced parameter values.
* 3D ``sphere`` and ``ellipsoid`` built from a Fibonacci lattice with
  per-node area weights.
* 3D ``triangulated`` surfaces read from a triangle soup, integrated with
  the one-point centroid rule.

All arrays attached to a :class:`Boundary` are read-only.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
CONTAINS_RTOL = 1e-9

INSIDE = "inside"
OUTSIDE = "outside"
ON_BOUNDARY = "on-boundary"

_KINDS_2D = ("circle", "ellipse", "star")
_KINDS_3D = ("sphere", "ellipsoid", "triangulated")


class GeometryError(ValueError):
    """Invalid shape description, broken mesh or failed nesting."""


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QuadratureSet:
    """Nodes, positive weights and outward unit normals of a closed boundary.

    ``curvatures`` is only filled for 2D curves.
    """

    nodes: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    curvatures: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.nodes)
        if len(self.weights) != n or len(self.normals) != n:
            raise GeometryError("quadrature arrays have different lengths")
        if self.curvatures is not None and len(self.curvatures) != n:
            raise GeometryError("curvature array has wrong length")
        if np.any(self.weights <= 0):
            raise GeometryError("quadrature weights must be strictly positive")
        if not np.all(np.isfinite(self.nodes)):
            raise GeometryError("non-finite node coordinates")


@dataclass(frozen=True, eq=False)
class Boundary:
    """A discretised closed curve (2D) or surface (3D).

    Build instances with :func:`build_boundary` or the shape helpers
    (:func:`circle`, :func:`sphere`, ...), not directly.
    """

    kind: str
    ambient_dim: int
    center: np.ndarray
    radii: np.ndarray
    n_nodes: int
    quad: QuadratureSet
    params: dict = field(default_factory=dict, compare=False)
    triangles: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    @property
    def nodes(self):
        return self.quad.nodes

    @property
    def weights(self):
        return self.quad.weights

    @property
    def normals(self):
        return self.quad.normals

    @property
    def measure(self):
        """Total quadrature weight (length or area)."""
        return float(np.sum(self.quad.weights))

    @property
    def spacing(self):
        """Local node spacing per node."""
        w = self.quad.weights
        return w if self.ambient_dim == 2 else np.sqrt(w)

    @property
    def diameter(self):
        p = self.quad.nodes
        lo, hi = p.min(axis=0), p.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def radial(self, directions):
        """Distance from the centre to the boundary along unit ``directions``.

        Only defined for star-shaped parametric kinds.
        """
        d = np.atleast_2d(directions)
        if self.kind == "circle" or self.kind == "sphere":
            return np.full(len(d), self.radii[0])
        if self.kind in ("ellipse", "ellipsoid"):
            return 1.0 / np.sqrt(np.sum((d / self.radii) ** 2, axis=1))
        if self.kind == "star":
            theta = np.arctan2(d[:, 1], d[:, 0])
            return _star_radius(theta, self.radii[0], self.params["amplitude"], self.params["lobes"])
        raise GeometryError(f"radial function undefined for {self.kind!r}")

    def scaled(self, factor, n_nodes=None):
        """Copy of a parametric boundary scaled about its centre."""
        if self.kind == "triangulated":
            verts = (self.triangles - self.center) * factor + self.center
            return triangulated(verts)
        spec = dict(self.params)
        spec.update(kind=self.kind, center=self.center, radii=self.radii * factor,
                    n_nodes=n_nodes or self.n_nodes)
        return build_boundary(spec)


def _star_radius(theta, r0, amplitude, lobes):
    return r0 * (1.0 + amplitude * np.cos(lobes * theta))


def _finish(kind, dim, center, radii, nodes, weights, normals, curvatures=None, params=None,
            triangles=None):
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / norms
    quad = QuadratureSet(
        nodes=_frozen(nodes),
        weights=_frozen(weights),
        normals=_frozen(normals),
        curvatures=None if curvatures is None else _frozen(curvatures),
    )
    return Boundary(
        kind=kind,
        ambient_dim=dim,
        center=_frozen(center),
        radii=_frozen(radii),
        n_nodes=len(nodes),
        quad=quad,
        params=dict(params or {}),
        triangles=None if triangles is None else _frozen(triangles),
    )


# ---------------------------------------------------------------------------
# 2D curves
# ---------------------------------------------------------------------------
def _curve_samples(kind, radii, params, theta):
    """Position, first and second derivative of a curve at parameters theta."""
    c, s = np.cos(theta), np.sin(theta)
    if kind == "circle":
        r = radii[0]
        pos = np.stack([r * c, r * s], axis=1)
        d1 = np.stack([-r * s, r * c], axis=1)
        d2 = -pos
    elif kind == "ellipse":
        a, b = radii
        pos = np.stack([a * c, b * s], axis=1)
        d1 = np.stack([-a * s, b * c], axis=1)
        d2 = -pos
    elif kind == "star":
        r0 = radii[0]
        amp, m = params["amplitude"], params["lobes"]
        rho = _star_radius(theta, r0, amp, m)
        drho = -r0 * amp * m * np.sin(m * theta)
        ddrho = -r0 * amp * m * m * np.cos(m * theta)
        pos = np.stack([rho * c, rho * s], axis=1)
        d1 = np.stack([drho * c - rho * s, drho * s + rho * c], axis=1)
        d2 = np.stack([ddrho * c - 2 * drho * s - rho * c,
                       ddrho * s + 2 * drho * c - rho * s], axis=1)
    else:
        raise GeometryError(f"unknown curve kind {kind!r}")
    return pos, d1, d2


def _build_curve(kind, center, radii, n_nodes, params):
    theta = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
    pos, d1, d2 = _curve_samples(kind, radii, params, theta)
    speed = np.linalg.norm(d1, axis=1)
    weights = speed * (2.0 * np.pi / n_nodes)
    # counter-clockwise parametrisation: outward normal is the tangent rotated by -90 degrees
    normals = np.stack([d1[:, 1], -d1[:, 0]], axis=1)
    curvature = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed**3
    return _finish(kind, 2, center, radii, pos + center, weights, normals, curvature, params)


def curve_point(b, t):
    """Point on a 2D parametric boundary at parameter values ``t``."""
    pos, _, _ = _curve_samples(b.kind, b.radii, b.params, np.asarray(t, dtype=float))
    return pos + b.center


# ---------------------------------------------------------------------------
# 3D surfaces
# ---------------------------------------------------------------------------
def fibonacci_sphere(n):
    """Unit vectors of an ``n``-point Fibonacci lattice (equal-area cells)."""
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    phi = 2.0 * np.pi * i / GOLDEN
    rxy = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([rxy * np.cos(phi), rxy * np.sin(phi), z], axis=1)


def _build_ellipsoid(kind, center, radii, n_nodes):
    u = fibonacci_sphere(n_nodes)
    r3 = np.broadcast_to(np.asarray(radii, dtype=float), (3,))
    pos = u * r3
    grad = u / r3
    # area element of the map u -> r3 * u relative to the unit sphere
    jac = np.prod(r3) * np.linalg.norm(grad, axis=1)
    weights = (4.0 * np.pi / n_nodes) * jac
    return _finish(kind, 3, center, radii, pos + center, weights, grad)


def read_triangle_soup(path):
    """Read an ASCII triangle soup: one triangle per line, nine floats."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            vals = line.replace(",", " ").split()
            if len(vals) != 9:
                raise GeometryError(f"{path}:{lineno}: expected 9 floats, got {len(vals)}")
            rows.append([float(v) for v in vals])
    if not rows:
        raise GeometryError(f"{path}: no triangles")
    return np.asarray(rows).reshape(-1, 3, 3)


def _check_watertight(tris, tol):
    """Every undirected edge must be shared by exactly two triangles,
    traversed once in each direction."""
    pts = tris.reshape(-1, 3)
    keys = np.round(pts / tol).astype(np.int64)
    _, vid = np.unique(keys, axis=0, return_inverse=True)
    vid = vid.reshape(-1, 3)
    directed = {}
    for t, (a, b, c) in enumerate(vid):
        for e in ((a, b), (b, c), (c, a)):
            directed[e] = directed.get(e, 0) + 1
    problems = []
    for (a, b), cnt in directed.items():
        if cnt != 1 or directed.get((b, a), 0) != 1:
            problems.append((int(a), int(b)))
    if problems:
        raise GeometryError(
            f"triangulated surface is not watertight/consistently oriented: "
            f"{len(problems)} bad edges, first vertex pair {problems[0]}")


def triangulated(triangles, n_nodes=None):
    """Boundary from an ``(n, 3, 3)`` array of triangle vertices."""
    tris = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    if len(tris) < 4:
        raise GeometryError("a closed triangulated surface needs at least 4 triangles")
    scale = np.ptp(tris.reshape(-1, 3), axis=0).max()
    _check_watertight(tris, 1e-9 * scale)
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    cross = np.cross(e1, e2)
    area = 0.5 * np.linalg.norm(cross, axis=1)
    if np.any(area <= 1e-14 * scale**2):
        raise GeometryError("degenerate (zero-area) triangle in mesh")
    centroids = tris.mean(axis=1)
    signed_volume = np.sum(np.einsum("ij,ij->i", tris[:, 0], np.cross(tris[:, 1], tris[:, 2]))) / 6.0
    if signed_volume < 0:
        tris = tris[:, [0, 2, 1]]
        cross = -cross
    center = np.sum(centroids * area[:, None], axis=0) / area.sum()
    radii = np.array([0.5 * scale])
    return _finish("triangulated", 3, center, radii, centroids, area, cross, triangles=tris)


# ---------------------------------------------------------------------------
# public constructors
# ---------------------------------------------------------------------------
def build_boundary(spec):
    """Build a :class:`Boundary` from a shape description mapping.

    Keys: ``kind``, ``center``, ``radii`` (or ``radius``), ``n_nodes``;
    ``star`` also takes ``amplitude`` and ``lobes``; ``triangulated``
    takes ``triangles`` (array) or ``path`` (triangle soup file).
    """
    spec = dict(spec)
    kind = spec.get("kind")
    if kind == "triangulated":
        tris = spec.get("triangles")
        if tris is None:
            tris = read_triangle_soup(spec["path"])
        return triangulated(tris)
    if kind not in _KINDS_2D + _KINDS_3D:
        raise GeometryError(f"unknown boundary kind {kind!r}")
    dim = 2 if kind in _KINDS_2D else 3
    radii = spec.get("radii", spec.get("radius"))
    if radii is None:
        raise GeometryError(f"{kind}: missing radii")
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    need = {"circle": 1, "sphere": 1, "star": 1, "ellipse": 2, "ellipsoid": 3}[kind]
    if radii.size != need:
        raise GeometryError(f"{kind}: expected {need} radii, got {radii.size}")
    if not np.all(np.isfinite(radii)) or np.any(radii <= 0):
        raise GeometryError(f"{kind}: radii must be positive, got {radii.tolist()}")
    center = np.asarray(spec.get("center", np.zeros(dim)), dtype=float)
    if center.shape != (dim,):
        raise GeometryError(f"{kind}: center must have {dim} coordinates")
    n_nodes = int(spec.get("n_nodes", 64))
    if n_nodes < 4:
        raise GeometryError(f"n_nodes must be >= 4, got {n_nodes}")
    params = {}
    if kind == "star":
        params["amplitude"] = float(spec.get("amplitude", 0.2))
        params["lobes"] = int(spec.get("lobes", 5))
        if not 0 <= params["amplitude"] < 1:
            raise GeometryError("star amplitude must lie in [0, 1)")
    if dim == 2:
        return _build_curve(kind, center, radii, n_nodes, params)
    return _build_ellipsoid(kind, center, radii, n_nodes)


def circle(center=(0.0, 0.0), r=1.0, n=64):
    return build_boundary({"kind": "circle", "center": center, "radii": [r], "n_nodes": n})


def ellipse(center=(0.0, 0.0), a=2.0, b=1.0, n=64):
    return build_boundary({"kind": "ellipse", "center": center, "radii": [a, b], "n_nodes": n})


def star(center=(0.0, 0.0), r=1.0, amplitude=0.2, lobes=5, n=128):
    return build_boundary({"kind": "star", "center": center, "radii": [r], "n_nodes": n,
                           "amplitude": amplitude, "lobes": lobes})


def sphere(center=(0.0, 0.0, 0.0), r=1.0, n=500):
    return build_boundary({"kind": "sphere", "center": center, "radii": [r], "n_nodes": n})


def ellipsoid(center=(0.0, 0.0, 0.0), radii=(2.0, 1.5, 1.0), n=800):
    return build_boundary({"kind": "ellipsoid", "center": center, "radii": radii, "n_nodes": n})


# ---------------------------------------------------------------------------
# nested source sequences
# ---------------------------------------------------------------------------
def van_der_corput(n, base=2):
    """First ``n`` terms of the van der Corput sequence in ``base``."""
    out = np.zeros(n)
    for i in range(n):
        q, denom, k = 0.0, 1.0, i
        while k:
            denom *= base
            k, rem = divmod(k, base)
            q += rem / denom
        out[i] = q
    return out


def source_sequence(b, N):
    """First ``N`` points of a fixed nested dense sequence on ``b``.

    ``source_sequence(b, N)`` is always a prefix of ``source_sequence(b, M)``
    for ``M > N``. Curves use van der Corput parameter ordering; spheres and
    ellipsoids use a Halton (2, 3) sequence mapped area-uniformly; meshes use
    greedy farthest-point ordering of the triangle centroids.
    """
    N = int(N)
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if b.ambient_dim == 2:
        t = 2.0 * np.pi * van_der_corput(N, 2)
        return curve_point(b, t)
    if b.kind in ("sphere", "ellipsoid"):
        z = 1.0 - 2.0 * van_der_corput(N, 2)
        phi = 2.0 * np.pi * van_der_corput(N, 3)
        rxy = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        u = np.stack([rxy * np.cos(phi), rxy * np.sin(phi), z], axis=1)
        return u * b.radii + b.center
    pts = b.nodes
    if N > len(pts):
        raise ValueError(f"mesh has only {len(pts)} centroids, asked for {N}")
    order = [0]
    dist = np.linalg.norm(pts - pts[0], axis=1)
    for _ in range(N - 1):
        j = int(np.argmax(dist))
        order.append(j)
        dist = np.minimum(dist, np.linalg.norm(pts - pts[j], axis=1))
    return pts[order].copy()


# ---------------------------------------------------------------------------
# containment
# ---------------------------------------------------------------------------
def _solid_angle_winding(tris, x):
    """Generalised winding number of a closed oriented mesh at points x."""
    a = tris[None, :, 0] - x[:, None]
    b = tris[None, :, 1] - x[:, None]
    c = tris[None, :, 2] - x[:, None]
    la, lb, lc = (np.linalg.norm(v, axis=2) for v in (a, b, c))
    num = np.einsum("mti,mti->mt", a, np.cross(b, c))
    den = (la * lb * lc + np.einsum("mti,mti->mt", a, b) * lc
           + np.einsum("mti,mti->mt", b, c) * la + np.einsum("mti,mti->mt", c, a) * lb)
    return np.sum(2.0 * np.arctan2(num, den), axis=1) / (4.0 * np.pi)


def _point_triangle_distance(tris, x):
    """Minimum Euclidean distance from each point to a set of triangles."""
    best = np.full(len(x), np.inf)
    for tri in tris:
        p0, p1, p2 = tri
        e0, e1 = p1 - p0, p2 - p0
        n = np.cross(e0, e1)
        n = n / np.linalg.norm(n)
        d = x - p0
        h = d @ n
        proj = d - h[:, None] * n
        d00, d01, d11 = e0 @ e0, e0 @ e1, e1 @ e1
        d20, d21 = proj @ e0, proj @ e1
        den = d00 * d11 - d01 * d01
        v = (d11 * d20 - d01 * d21) / den
        w = (d00 * d21 - d01 * d20) / den
        inside = (v >= 0) & (w >= 0) & (v + w <= 1)
        dist = np.where(inside, np.abs(h), np.inf)
        for s0, s1 in ((p0, p1), (p1, p2), (p2, p0)):
            seg = s1 - s0
            t = np.clip(((x - s0) @ seg) / (seg @ seg), 0.0, 1.0)
            dist = np.minimum(dist, np.linalg.norm(x - (s0 + t[:, None] * seg), axis=1))
        best = np.minimum(best, dist)
    return best


def classify(b, x, tol=None):
    """Vectorised containment: array of INSIDE / OUTSIDE / ON_BOUNDARY strings."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != b.ambient_dim:
        raise GeometryError(f"points have dimension {x.shape[1]}, boundary has {b.ambient_dim}")
    if tol is None:
        tol = CONTAINS_RTOL * b.diameter
    if b.kind == "triangulated":
        dist = _point_triangle_distance(b.triangles, x)
        wind = _solid_angle_winding(b.triangles, x)
        signed = np.where(wind > 0.5, -dist, dist)
    else:
        rel = x - b.center
        rho = np.linalg.norm(rel, axis=1)
        safe = np.where(rho > 0, rho, 1.0)
        dirs = rel / safe[:, None]
        dirs[rho == 0] = np.eye(b.ambient_dim)[0]
        signed = rho - b.radial(dirs)
    out = np.where(signed < 0, INSIDE, OUTSIDE).astype(object)
    out[np.abs(signed) <= tol] = ON_BOUNDARY
    return out


def contains(b, x, tol=None):
    """Classify a single point relative to ``b``."""
    return str(classify(b, np.asarray(x, dtype=float)[None, :], tol)[0])


def strictly_inside(b, x, tol=None):
    return classify(b, x, tol) == INSIDE


def strictly_outside(b, x, tol=None):
    return classify(b, x, tol) == OUTSIDE


def min_distance(a, b):
    """Smallest pairwise distance between the node sets of two boundaries."""
    pa, pb = np.asarray(a), np.asarray(b)
    best = np.inf
    for start in range(0, len(pa), 512):
        d = np.linalg.norm(pa[start:start + 512, None] - pb[None], axis=2)
        best = min(best, float(d.min()))
    return best


# ---------------------------------------------------------------------------
# layouts
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class DomainLayout:
    """Nested boundaries: probe inside inner inside middle inside outer.

    ``separations`` maps each consecutive pair to the minimum node distance.
    """

    inner: Boundary
    middle: Optional[Boundary] = None
    outer: Optional[Boundary] = None
    interior_probe: Optional[Boundary] = None
    separations: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        shells = [("interior_probe", self.interior_probe), ("inner", self.inner),
                  ("middle", self.middle), ("outer", self.outer)]
        shells = [(name, s) for name, s in shells if s is not None]
        dims = {s.ambient_dim for _, s in shells}
        if len(dims) != 1:
            raise GeometryError("all layout boundaries must share the ambient dimension")
        seps = {}
        for (n_in, s_in), (n_out, s_out) in zip(shells, shells[1:]):
            mask = strictly_inside(s_out, s_in.nodes)
            if not np.all(mask):
                bad = int(np.flatnonzero(~mask)[0])
                raise GeometryError(
                    f"nesting violated: node {bad} of {n_in} is not strictly inside {n_out}")
            seps[f"{n_in}/{n_out}"] = min_distance(s_in.nodes, s_out.nodes)
        object.__setattr__(self, "separations", seps)
        for k, v in seps.items():
            logger.debug("layout separation %s = %.3e", k, v)

    @property
    def ambient_dim(self):
        return self.inner.ambient_dim

    def with_probe(self, scale=0.6):
        """Copy with a default probe: the inner boundary shrunk about its centre."""
        probe = self.inner.scaled(scale)
        return DomainLayout(self.inner, self.middle, self.outer, probe)
