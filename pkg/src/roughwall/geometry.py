"""Discrete domains: rough channels, boundary-layer half-strips, windowed norms.

Both domain kinds are structured mapped strips: a uniform set of columns in
x and, per column, a monotone list of row heights.  Bottom rows follow the
rough wall exactly (nodes placed by evaluating the wall), interior rows are
flat so that the interfaces {x2 = 0} and {x2 = 1} are mesh lines.  Each quad
is split into two triangles and every triangle is split again at its
barycenter; the finite element space lives on these sub-triangles.

Lateral boundaries are identified periodically: column ``nc`` is the same
node set as column 0.  Element coordinates are kept unwrapped so geometric
quantities never see the seam.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, ResolutionError
from .roughness import periodize

# sub-triangle layout of a quad (i, j): two macro triangles, each split in three
_MACRO = ((0, 1, 2), (0, 2, 3))  # quad corners: 0=(i,j) 1=(i+1,j) 2=(i+1,j+1) 3=(i,j+1)


@dataclass(eq=False)
class TriMesh:
    """Triangulation with periodic vertex identification.

    points: representative coordinates of each (wrapped) vertex
    tris: vertex ids of every sub-triangle, counter-clockwise
    tri_xy: unwrapped vertex coordinates of every sub-triangle
    wall: boolean mask of vertices carrying a no-slip condition
    """

    points: np.ndarray
    tris: np.ndarray
    tri_xy: np.ndarray
    wall: np.ndarray
    period: float
    x0: float
    tags: dict = field(default_factory=dict)

    @property
    def n_vertices(self):
        return self.points.shape[0]

    @property
    def n_triangles(self):
        return self.tris.shape[0]

    @cached_property
    def areas(self):
        p = self.tri_xy
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def locate(self, xy):
        """Brute-force point location; returns (triangle index, barycentric coords)."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        x = self.x0 + np.mod(xy[:, 0] - self.x0, self.period)
        pts = np.column_stack([x, xy[:, 1]])
        tri = np.full(len(pts), -1)
        bary = np.zeros((len(pts), 3))
        p = self.tri_xy
        det = 2 * self.areas
        for k, q in enumerate(pts):
            l1 = ((q[0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (q[1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])) / det
            l2 = ((p[:, 1, 0] - p[:, 0, 0]) * (q[1] - p[:, 0, 1])
                  - (p[:, 1, 1] - p[:, 0, 1]) * (q[0] - p[:, 0, 0])) / det
            l0 = 1 - l1 - l2
            m = np.minimum(np.minimum(l0, l1), l2)
            t = int(np.argmax(m))
            if m[t] >= -1e-9:
                tri[k] = t
                bary[k] = (l0[t], l1[t], l2[t])
        return tri, bary


@dataclass(eq=False)
class StripMesh(TriMesh):
    """Structured mapped strip; base of both channel and half-strip meshes."""

    xc: np.ndarray = None          # (nc+1,) unwrapped column abscissae
    Y: np.ndarray = None           # (nc+1, nr+1) node heights
    kind: str = "strip"
    params: dict = field(default_factory=dict)
    boundary: object = None
    macro_quality: float = 0.0

    @property
    def nc(self):
        return self.xc.size - 1

    @property
    def nr(self):
        return self.Y.shape[1] - 1

    def row_height(self, name):
        return float(self.Y[0, self.tags[name]])

    def wall_nodes(self, name):
        """Coordinates of the vertices of a wall row (one period)."""
        j = self.tags[name]
        return np.column_stack([self.xc[:-1], self.Y[:-1, j]])

    def locate(self, xy, chunk=20000):
        """Structured point location: column by bisection, row by the mapped row lines."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        n = len(xy)
        if n > chunk:
            parts = [self.locate(xy[k:k + chunk]) for k in range(0, n, chunk)]
            return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
        x = self.x0 + np.mod(xy[:, 0] - self.x0, self.period)
        y = xy[:, 1]
        i = np.clip(np.searchsorted(self.xc, x, side="right") - 1, 0, self.nc - 1)
        t = (x - self.xc[i]) / (self.xc[i + 1] - self.xc[i])
        rows = self.Y[i] * (1 - t)[:, None] + self.Y[i + 1] * t[:, None]
        j = np.clip(np.sum(rows <= y[:, None], axis=1) - 1, 0, self.nr - 1)
        base = (i * self.nr + j) * 6
        cand = base[:, None] + np.arange(6)
        p = self.tri_xy[cand]                       # (n, 6, 3, 2)
        det = 2 * self.areas[cand]
        qx = x[:, None]
        qy = y[:, None]
        l1 = ((qx - p[..., 0, 0]) * (p[..., 2, 1] - p[..., 0, 1])
              - (qy - p[..., 0, 1]) * (p[..., 2, 0] - p[..., 0, 0])) / det
        l2 = ((p[..., 1, 0] - p[..., 0, 0]) * (qy - p[..., 0, 1])
              - (p[..., 1, 1] - p[..., 0, 1]) * (qx - p[..., 0, 0])) / det
        l0 = 1 - l1 - l2
        m = np.minimum(np.minimum(l0, l1), l2)
        best = np.argmax(m, axis=1)
        ok = m[np.arange(n), best] >= -1e-9
        tri = np.where(ok, cand[np.arange(n), best], -1)
        bary = np.stack([l0, l1, l2], axis=-1)[np.arange(n), best]
        return tri, bary


ChannelMesh = StripMesh
HalfStripMesh = StripMesh


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _graded(y0, y1, h0, hmax, growth=1.2):
    """Rows from y0 up to y1 starting at spacing h0, growing to hmax."""
    pts = [y0]
    h = h0
    while True:
        y = pts[-1] + h
        if y >= y1 - 0.5 * h:
            break
        pts.append(y)
        h = min(h * growth, hmax)
    pts.append(y1)
    return np.array(pts)


def _core_rows(h0, hmax, d_bl, growth=1.2):
    """Rows of [0, 1]: fine near both ends, coarser in the middle, mirror symmetric."""
    half = [0.0]
    h = h0
    while half[-1] < 0.5:
        if half[-1] < d_bl - 1e-12:
            step = h0
        else:
            h = min(h * growth, hmax)
            step = h
        half.append(half[-1] + step)
    half = np.array(half)
    # finish at 0.5 by stretching the last interval
    k = np.searchsorted(half, 0.5)
    lower = half[:k]
    if 0.5 - lower[-1] < 0.3 * (lower[-1] - lower[-2] if len(lower) > 1 else h0):
        lower = lower[:-1]
    lower = np.append(lower, 0.5)
    upper = 1.0 - lower[::-1]
    return np.concatenate([lower[:-1], upper])


def _insert_rows(rows, extra):
    """Merge exact rows into a graded list, removing near-duplicates."""
    rows = np.asarray(rows, dtype=float)
    for e in sorted(extra):
        if e <= rows[0] or e >= rows[-1]:
            continue
        k = np.searchsorted(rows, e)
        lo, hi = rows[k - 1], rows[k]
        gap = hi - lo
        if abs(e - lo) < 1e-12 or abs(e - hi) < 1e-12:
            continue
        if e - lo < 0.3 * gap and k - 1 > 0 and lo not in extra:
            rows[k - 1] = e
        elif hi - e < 0.3 * gap and k < len(rows) - 1 and hi not in extra:
            rows[k] = e
        else:
            rows = np.insert(rows, k, e)
    return rows


def ladder_heights(L, y0=0.25, ratio=1.5):
    """Geometric height ladder y0*ratio**k below L, with the doubled heights."""
    hs = []
    y = y0
    while y <= L + 1e-12:
        hs.append(y)
        y *= ratio
    doubles = [2 * v for v in hs if 2 * v <= L + 1e-12]
    return np.array(hs), np.unique(np.array(hs + doubles))


def _build(xc, Y, period, wall_rows, tags, kind, params, boundary, quality_floor):
    nc = xc.size - 1
    nr = Y.shape[1] - 1
    nvm = nc * (nr + 1)                      # wrapped macro vertices
    ii, jj = np.meshgrid(np.arange(nc + 1), np.arange(nr + 1), indexing="ij")
    vid = (ii % nc) * (nr + 1) + jj
    X = np.broadcast_to(xc[:, None], Y.shape)

    qi, qj = np.meshgrid(np.arange(nc), np.arange(nr), indexing="ij")
    qi = qi.ravel()
    qj = qj.ravel()
    corners_i = np.stack([qi, qi + 1, qi + 1, qi], axis=1)
    corners_j = np.stack([qj, qj, qj + 1, qj + 1], axis=1)
    cid = vid[corners_i, corners_j]                            # (nq, 4)
    cxy = np.stack([X[corners_i, corners_j], Y[corners_i, corners_j]], axis=-1)

    nq = qi.size
    macro_ids = np.empty((nq, 2, 3), dtype=np.int64)
    macro_xy = np.empty((nq, 2, 3, 2))
    for a, loc in enumerate(_MACRO):
        macro_ids[:, a] = cid[:, loc]
        macro_xy[:, a] = cxy[:, loc]
    macro_ids = macro_ids.reshape(-1, 3)
    macro_xy = macro_xy.reshape(-1, 3, 2)
    nm = macro_ids.shape[0]
    quality = _quality(macro_xy)
    if quality.min() < quality_floor:
        raise ConfigurationError(
            f"mesh quality {quality.min():.3g} below floor {quality_floor}; refine target_h")

    bary_xy = macro_xy.mean(axis=1)
    bid = nvm + np.arange(nm)
    tris = np.empty((nm, 3, 3), dtype=np.int64)
    txy = np.empty((nm, 3, 3, 2))
    for s, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
        tris[:, s] = np.stack([macro_ids[:, a], macro_ids[:, b], bid], axis=1)
        txy[:, s, 0] = macro_xy[:, a]
        txy[:, s, 1] = macro_xy[:, b]
        txy[:, s, 2] = bary_xy
    tris = tris.reshape(-1, 3)
    txy = txy.reshape(-1, 3, 2)

    points = np.empty((nvm + nm, 2))
    points[:nvm, 0] = X[:nc].ravel()
    points[:nvm, 1] = Y[:nc].ravel()
    points[nvm:] = bary_xy
    wall = np.zeros(nvm + nm, dtype=bool)
    for j in wall_rows:
        wall[np.arange(nc) * (nr + 1) + j] = True
    return StripMesh(points=points, tris=tris, tri_xy=txy, wall=wall, period=period,
                     x0=float(xc[0]), tags=tags, xc=xc, Y=Y, kind=kind, params=params,
                     boundary=boundary, macro_quality=float(quality.min()))


def _quality(xy):
    a = np.linalg.norm(xy[:, 1] - xy[:, 2], axis=1)
    b = np.linalg.norm(xy[:, 2] - xy[:, 0], axis=1)
    c = np.linalg.norm(xy[:, 0] - xy[:, 1], axis=1)
    s = 0.5 * (a + b + c)
    area = np.sqrt(np.maximum(s * (s - a) * (s - b) * (s - c), 0.0))
    r_in = area / s
    r_circ = a * b * c / (4 * np.maximum(area, 1e-300))
    return r_in / r_circ


def _rough_rows(depth, n):
    """Row heights of a rough layer: from -depth (wall) to 0, n rows, per column."""
    s = np.linspace(0.0, 1.0, n + 1)
    return -depth[:, None] * (1 - s)[None, :]


def _columns(width, target_h, x0, phase=0.0, scale=1.0):
    """Uniform columns over one period.

    The first column is moved right by less than one spacing so that the
    wall is sampled at the abscissae where x / scale + phase is a multiple
    of the spacing; shifted copies of a periodic wall then get translated
    copies of the same mesh.
    """
    nc = int(round(width / target_h))
    nc = max(nc, 3)
    dx = width / nc
    start = x0 + scale * np.mod(-(x0 / scale + phase), dx / scale)
    if start - x0 > dx * (1 - 1e-12):
        start = x0
    return start + width * np.arange(nc + 1) / nc


def _phase(b):
    """Lateral phase of a shifted-periodic realization (zero for other families)."""
    if b.spec.kind != "shifted-periodic":
        return 0.0
    return float(b.offset + b.metadata.get("shift", 0.0))


def build_channel_mesh(b, eps, R, target_h, *, growth=1.2, quality_floor=0.01,
                       core_factor=4.0):
    """Rough channel on the lateral window [-R, R] with periodic identification."""
    if not 0 < eps < 1:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {eps}")
    if not R > 0:
        raise ConfigurationError(f"window half-width R must be positive, got {R}")
    if not 0 < target_h <= eps / 4 * (1 + 1e-9):
        raise ResolutionError(
            f"target_h = {target_h} does not resolve the roughness; need target_h <= eps/4 = {eps / 4}",
            required_h=eps / 4)
    W = 2 * R / eps
    b = periodize(b, W)
    xc = _columns(2 * R, target_h, -R, _phase(b), eps)
    xs = xc[:-1]
    hl = eps * b.lower(xs / eps + b.offset)
    hu = eps * b.upper(xs / eps + b.offset)
    nl = 0 if b.lower.sup <= 0 else int(math.ceil(eps * b.lower.sup / target_h - 1e-9))
    nu = 0 if b.upper.sup <= 0 else int(math.ceil(eps * b.upper.sup / target_h - 1e-9))
    core = _core_rows(target_h, core_factor * target_h, eps, growth)
    nc = xs.size
    parts = []
    if nl:
        parts.append(_rough_rows(hl, nl)[:, :-1])
    parts.append(np.broadcast_to(core, (nc, core.size)))
    if nu:
        s = np.linspace(0.0, 1.0, nu + 1)[1:]
        parts.append(1.0 + hu[:, None] * s[None, :])
    Y = np.concatenate(parts, axis=1)
    Y = np.vstack([Y, Y[:1]])
    nr = Y.shape[1] - 1
    tags = {"rough-lower": 0, "sigma0": nl, "sigma1": nl + core.size - 1, "rough-upper": nr}
    params = {"epsilon": eps, "R": R, "target_h": target_h, "growth": growth,
              "core_factor": core_factor, "rough_rows": (nl, nu)}
    return _build(xc, Y, 2 * R, (0, nr), tags, "channel", params, b, quality_floor)


def build_halfstrip_mesh(b, side, R_bl, L, target_h, *, growth=1.2, quality_floor=0.01,
                         max_h=None, ladder_y0=0.25, ladder_ratio=1.5):
    """Boundary-layer half-strip [-R_bl, R_bl] x [-h(y1), L] in the lower orientation.

    For ``side == 'upper'`` the upper wall depth h_u is used; the reflection
    y2 -> -y2 maps the upper cell problem onto this orientation.
    """
    if side not in ("lower", "upper"):
        raise ConfigurationError(f"side must be 'lower' or 'upper', got {side!r}")
    if not R_bl > 0 or not target_h > 0:
        raise ConfigurationError("R_bl and target_h must be positive")
    b = periodize(b, 2 * R_bl)
    wall = b.lower if side == "lower" else b.upper
    if not L > max(wall.sup, 0.0):
        raise ConfigurationError(f"cap height L = {L} must exceed the roughness height {wall.sup}")
    if max_h is None:
        max_h = 4 * target_h
    xc = _columns(2 * R_bl, target_h, -R_bl, _phase(b))
    xs = xc[:-1]
    depth = wall(xs + b.offset)
    n_rl = 0 if wall.sup <= 0 else int(math.ceil(wall.sup / target_h - 1e-9))
    if L > 1:
        near = np.linspace(0.0, 1.0, max(int(round(1.0 / target_h)), 1) + 1)[:-1]
        upper = np.concatenate([near, _graded(1.0, L, target_h, max_h, growth)])
    else:
        upper = np.linspace(0.0, L, int(math.ceil(L / target_h)) + 1)
    _, exact = ladder_heights(L, ladder_y0, ladder_ratio)
    upper = _insert_rows(upper, [v for v in exact if v < L])
    nc = xs.size
    parts = []
    if n_rl:
        parts.append(_rough_rows(depth, n_rl)[:, :-1])
    parts.append(np.broadcast_to(upper, (nc, upper.size)))
    Y = np.concatenate(parts, axis=1)
    Y = np.vstack([Y, Y[:1]])
    nr = Y.shape[1] - 1
    tags = {"rough": 0, "sigma0": n_rl, "cap": nr}
    params = {"side": side, "R_bl": R_bl, "L": L, "target_h": target_h, "growth": growth,
              "max_h": max_h, "rough_rows": n_rl}
    wall_rows = (0,) if n_rl or wall.sup <= 0 else ()
    return _build(xc, Y, 2 * R_bl, wall_rows, tags, "halfstrip", params, b, quality_floor)


def mirrored(mesh):
    """Reflect a mesh through {y2 = 0} (generic triangulation, orientation restored)."""
    txy = mesh.tri_xy.copy()
    txy[..., 1] *= -1
    txy = txy[:, ::-1]
    tris = mesh.tris[:, ::-1].copy()
    pts = mesh.points.copy()
    pts[:, 1] *= -1
    return TriMesh(points=pts, tris=tris, tri_xy=txy, wall=mesh.wall.copy(),
                   period=mesh.period, x0=mesh.x0, tags=dict(mesh.tags))


# ---------------------------------------------------------------------------
# dumps
# ---------------------------------------------------------------------------

def dump_mesh(mesh, path):
    """Write the node table, triangle table and tag table as plain text."""
    with open(path, "w") as fh:
        fh.write(f"# roughwall mesh kind={getattr(mesh, 'kind', 'generic')} period={mesh.period!r}\n")
        fh.write(f"nodes {mesh.n_vertices}\n")
        for k, (x, y) in enumerate(mesh.points):
            fh.write(f"{k} {x:.17g} {y:.17g}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for k, (a, b, c) in enumerate(mesh.tris):
            fh.write(f"{k} {a} {b} {c}\n")
        wall = np.flatnonzero(mesh.wall)
        fh.write(f"tags {len(mesh.tags) + 1}\n")
        fh.write("wall " + " ".join(str(v) for v in wall) + "\n")
        for name, row in mesh.tags.items():
            fh.write(f"row {name} {row}\n")


# ---------------------------------------------------------------------------
# windowed norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowNorm:
    kind: str = "b2-sup"
    windows: tuple = (1.0, 2.0, 4.0)

    def __post_init__(self):
        if self.kind not in ("b2-sup", "l2-uloc", "plain-l2"):
            raise ConfigurationError(f"unknown window norm {self.kind!r}")
        if len(self.windows) == 0:
            raise ConfigurationError("window list is empty")
        if self.kind == "b2-sup" and any(w <= 0 for w in self.windows):
            raise ConfigurationError("b2-sup windows must be positive half-widths")


def windowed_norm(integrate, norm):
    """Apply a window norm to an integrator ``integrate(a, b) = int_{a < x1 < b} f``.

    b2-sup:   sup over half-widths R of (1/R) * integrate(-R, R)
    l2-uloc:  sup over left endpoints a of integrate(a, a + 1)
    plain-l2: sum of integrate(a, b) over (a, b) pairs, or integrate(-R, R) for scalars
    """
    if not isinstance(norm, WindowNorm):
        raise ConfigurationError("norm must be a WindowNorm")
    if norm.kind == "b2-sup":
        return max(integrate(-R, R) / R for R in norm.windows)
    if norm.kind == "l2-uloc":
        return max(integrate(a, a + 1.0) for a in norm.windows)
    total = 0.0
    for w in norm.windows:
        if np.ndim(w) == 0:
            total += integrate(-w, w)
        else:
            total += integrate(w[0], w[1])
    return total


class ColumnIntegrator:
    """Integrates a periodic density given by its integrals over mesh columns.

    Intervals longer than one period are handled by periodic extension;
    partial columns are pro-rated linearly.
    """

    def __init__(self, edges, values):
        self.edges = np.asarray(edges, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.period = self.edges[-1] - self.edges[0]
        self.cum = np.concatenate([[0.0], np.cumsum(self.values)])

    def _F(self, x):
        """Antiderivative from edges[0]."""
        n, r = divmod(x - self.edges[0], self.period)
        xr = self.edges[0] + r
        i = min(max(np.searchsorted(self.edges, xr, side="right") - 1, 0), self.values.size - 1)
        frac = (xr - self.edges[i]) / (self.edges[i + 1] - self.edges[i])
        return n * self.cum[-1] + self.cum[i] + frac * self.values[i]

    def __call__(self, a, b):
        return self._F(b) - self._F(a)
