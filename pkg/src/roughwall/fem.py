"""Quadratic velocity / discontinuous linear pressure elements on split meshes.

On barycentrically split triangulations this pair is inf-sup stable and the
divergence of every discrete velocity is itself a discrete pressure, so the
weak incompressibility constraint makes discrete velocities exactly
divergence free.  Section fluxes are therefore independent of the section.

Local velocity basis ordering: three vertex functions lambda_i (2 lambda_i - 1),
then edge functions 4 lambda_0 lambda_1, 4 lambda_1 lambda_2, 4 lambda_2 lambda_0.
Pressure basis: the three barycentric coordinates of each sub-triangle.
"""

import numpy as np
import scipy.sparse as sp

# 7-point Dunavant rule, exact for degree 5 (barycentric points, weights sum to 1)
_A1, _B1, _W1 = 0.059715871789770, 0.470142064105115, 0.132394152788506
_A2, _B2, _W2 = 0.797426985353087, 0.101286507323456, 0.125939180544827
QUAD_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
QUAD_W = np.array([0.225, _W1, _W1, _W1, _W2, _W2, _W2])

_G3_X, _G3_W = np.polynomial.legendre.leggauss(3)
GAUSS3_T = 0.5 * (_G3_X + 1)
GAUSS3_W = 0.5 * _G3_W

_EDGES = ((0, 1), (1, 2), (2, 0))


def p2_basis(L):
    """P2 shape functions at barycentric points L (..., 3) -> (..., 6)."""
    L0, L1, L2 = L[..., 0], L[..., 1], L[..., 2]
    return np.stack([L0 * (2 * L0 - 1), L1 * (2 * L1 - 1), L2 * (2 * L2 - 1),
                     4 * L0 * L1, 4 * L1 * L2, 4 * L2 * L0], axis=-1)


def p2_dbasis(L):
    """Derivatives with respect to the barycentric coordinates (..., 6, 3)."""
    L = np.asarray(L, dtype=float)
    out = np.zeros(L.shape[:-1] + (6, 3))
    for i in range(3):
        out[..., i, i] = 4 * L[..., i] - 1
    for k, (i, j) in enumerate(_EDGES):
        out[..., 3 + k, i] = 4 * L[..., j]
        out[..., 3 + k, j] = 4 * L[..., i]
    return out


def p2_d2basis():
    """Second derivatives with respect to barycentric coordinates (6, 3, 3), constant."""
    out = np.zeros((6, 3, 3))
    for i in range(3):
        out[i, i, i] = 4.0
    for k, (i, j) in enumerate(_EDGES):
        out[3 + k, i, j] = out[3 + k, j, i] = 4.0
    return out


def bary_gradients(tri_xy):
    """Gradients of the barycentric coordinates, (nt, 3, 2)."""
    p = tri_xy
    det = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
           - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    g1 = np.stack([p[:, 2, 1] - p[:, 0, 1], -(p[:, 2, 0] - p[:, 0, 0])], axis=-1) / det[:, None]
    g2 = np.stack([-(p[:, 1, 1] - p[:, 0, 1]), p[:, 1, 0] - p[:, 0, 0]], axis=-1) / det[:, None]
    return np.stack([-g1 - g2, g1, g2], axis=1)


class P2Space:
    """Continuous P2 scalar space on a (periodic) triangulation."""

    def __init__(self, mesh):
        self.mesh = mesh
        tris = mesh.tris
        nt = tris.shape[0]
        nv = mesh.n_vertices
        edges = np.concatenate([tris[:, list(e)] for e in _EDGES])
        edges = np.sort(edges, axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        inv = inv.reshape(3, nt).T
        self.edges = uniq
        self.cell_dofs = np.hstack([tris, nv + inv])
        self.n = nv + uniq.shape[0]
        wall_edge = mesh.wall[uniq[:, 0]] & mesh.wall[uniq[:, 1]]
        self.wall = np.concatenate([mesh.wall, wall_edge])
        self.grad_lambda = bary_gradients(mesh.tri_xy)
        self.area = np.abs(mesh.areas)

        # representative node coordinates, wrapped into the window
        xy = np.empty((self.n, 2))
        loc = np.empty((nt, 6, 2))
        loc[:, :3] = mesh.tri_xy
        for k, (i, j) in enumerate(_EDGES):
            loc[:, 3 + k] = 0.5 * (mesh.tri_xy[:, i] + mesh.tri_xy[:, j])
        xy[self.cell_dofs.ravel()] = loc.reshape(-1, 2)
        xy[:, 0] = mesh.x0 + np.mod(xy[:, 0] - mesh.x0, mesh.period)
        self.node_xy = xy

        self._N = p2_basis(QUAD_BARY)                   # (nq, 6)
        dN = p2_dbasis(QUAD_BARY)                       # (nq, 6, 3)
        self._G = np.einsum("qik,tkd->tqid", dN, self.grad_lambda)   # (nt, nq, 6, 2)
        self._wa = self.area[:, None] * QUAD_W[None, :]               # (nt, nq)

    # -- quadrature helpers -------------------------------------------------
    def quad_points(self):
        """Physical quadrature points (nt, nq, 2) and weights (nt, nq)."""
        xy = np.einsum("qk,tkd->tqd", QUAD_BARY, self.mesh.tri_xy)
        return xy, self._wa

    def values_at_quad(self, coef):
        """Values of a scalar or vector field (…, n) at quadrature points -> (…, nt, nq)."""
        c = np.asarray(coef)[..., self.cell_dofs]        # (..., nt, 6)
        return np.einsum("...ti,qi->...tq", c, self._N)

    def grads_at_quad(self, coef):
        """Gradients (…, nt, nq, 2)."""
        c = np.asarray(coef)[..., self.cell_dofs]
        return np.einsum("...ti,tqid->...tqd", c, self._G)

    def _scatter(self, local, rows, cols, shape):
        r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
        c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
        return sp.csr_matrix((local.ravel(), (r, c)), shape=shape)

    # -- matrices ----------------------------------------------------------
    def stiffness(self):
        loc = np.einsum("tqid,tqjd,tq->tij", self._G, self._G, self._wa)
        return self._scatter(loc, self.cell_dofs, self.cell_dofs, (self.n, self.n))

    def mass(self, weight=None, cells=None):
        """Scalar mass matrix with optional per-quadrature-point weight (nt, nq)."""
        wa = self._wa if weight is None else self._wa * weight
        if cells is not None:
            wa = wa * cells[:, None]
        loc = np.einsum("qi,qj,tq->tij", self._N, self._N, wa)
        return self._scatter(loc, self.cell_dofs, self.cell_dofs, (self.n, self.n))

    def load(self, weight=None):
        """Integrals of the basis functions (optionally weighted)."""
        wa = self._wa if weight is None else self._wa * weight
        loc = np.einsum("qi,tq->ti", self._N, wa)
        out = np.zeros(self.n)
        np.add.at(out, self.cell_dofs, loc)
        return out

    def convection(self, w):
        """Matrix of (w . grad phi_j, phi_i) for a vector field w given as (2, n)."""
        wq = np.stack([self.values_at_quad(w[0]), self.values_at_quad(w[1])], axis=-1)
        adv = np.einsum("tqd,tqjd->tqj", wq, self._G)
        loc = np.einsum("qi,tqj,tq->tij", self._N, adv, self._wa)
        return self._scatter(loc, self.cell_dofs, self.cell_dofs, (self.n, self.n))

    def divergence(self):
        """B with B[(cell, k), comp * n + dof] = int lambda_k d_comp phi_dof; (3 nt, 2 n)."""
        nt = self.cell_dofs.shape[0]
        loc = np.einsum("qk,tqid,tq->tkdi", QUAD_BARY, self._G, self._wa)  # (nt,3,2,6)
        rows = np.broadcast_to((3 * np.arange(nt)[:, None] + np.arange(3))[:, :, None, None],
                               loc.shape)
        cols = np.broadcast_to(
            (np.arange(2)[None, None, :, None] * self.n + self.cell_dofs[:, None, None, :]),
            loc.shape)
        return sp.csr_matrix((loc.ravel(), (rows.ravel(), cols.ravel())), shape=(3 * nt, 2 * self.n))

    def pressure_mass_vector(self):
        return np.repeat(self.area / 3.0, 3)

    # -- evaluation --------------------------------------------------------
    def evaluate(self, coef, tri, bary):
        """Values of a field (…, n) at points given by triangle indices and barycentric coords."""
        N = p2_basis(bary)                                 # (m, 6)
        c = np.asarray(coef)[..., self.cell_dofs[tri]]     # (..., m, 6)
        return np.einsum("...mi,mi->...m", c, N)

    def evaluate_grad(self, coef, tri, bary):
        dN = p2_dbasis(bary)                               # (m, 6, 3)
        G = np.einsum("mik,mkd->mid", dN, self.grad_lambda[tri])
        c = np.asarray(coef)[..., self.cell_dofs[tri]]
        return np.einsum("...mi,mid->...md", c, G)

    def evaluate_hessian(self, coef, tri):
        """Second derivatives (…, m, 2, 2); constant on each sub-triangle."""
        gl = self.grad_lambda[tri]
        H = np.einsum("ikl,mka,mlb->miab", p2_d2basis(), gl, gl)
        c = np.asarray(coef)[..., self.cell_dofs[tri]]
        return np.einsum("...mi,miab->...mab", c, H)


def evaluate_pressure(p, tri, bary):
    return np.einsum("mk,mk->m", p.reshape(-1, 3)[tri], bary)


# ---------------------------------------------------------------------------
# line integrals
# ---------------------------------------------------------------------------

def line_segments(mesh, axis, c, bounds=None):
    """Intersect the line {x_axis = c} with every sub-triangle.

    Returns (tri, P, Q, length) with barycentric segment endpoints.  When
    the line runs along an edge only the neighbour on the positive side
    (above for horizontal lines, right for vertical ones) is kept, so every
    point of the line is counted once.
    """
    coord = 1 if axis == "horizontal" else 0
    p = mesh.tri_xy
    if coord == 0:
        c = mesh.x0 + np.mod(c - mesh.x0, mesh.period)
    s = p[:, :, coord] - c                                   # (nt, 3)
    cand = np.flatnonzero((s.min(axis=1) <= 0) & (s.max(axis=1) >= 0))
    s = s[cand]
    eye = np.eye(3)
    pts = np.zeros((cand.size, 6, 3))
    have = np.zeros((cand.size, 6), dtype=bool)
    for k in range(3):
        zero = s[:, k] == 0
        pts[zero, k] = eye[k]
        have[:, k] = zero
    for k, (i, j) in enumerate(_EDGES):
        cross = s[:, i] * s[:, j] < 0
        t = np.where(cross, s[:, i] / np.where(cross, s[:, i] - s[:, j], 1.0), 0.0)
        pts[:, 3 + k] = (1 - t)[:, None] * eye[i] + t[:, None] * eye[j]
        have[:, 3 + k] = cross
    count = have.sum(axis=1)
    nz = (s == 0).sum(axis=1)
    third_pos = np.where(nz == 2, (np.where(s == 0, 0.0, s)).sum(axis=1) > 0, True)
    keep = (count == 2) & third_pos
    cand, pts, have = cand[keep], pts[keep], have[keep]
    order = np.argsort(~have, axis=1, kind="stable")[:, :2]
    P = pts[np.arange(cand.size), order[:, 0]]
    Q = pts[np.arange(cand.size), order[:, 1]]
    XP = np.einsum("mk,mkd->md", P, p[cand])
    XQ = np.einsum("mk,mkd->md", Q, p[cand])
    if bounds is not None:
        # clip each segment to lo <= (coordinate along the line) <= hi
        along = 1 - coord
        lo, hi = bounds
        a, b = XP[:, along], XQ[:, along]
        d = np.where(b != a, b - a, 1.0)
        t0 = np.clip((lo - a) / d, 0, 1)
        t1 = np.clip((hi - a) / d, 0, 1)
        ta = np.where(b >= a, t0, t1)
        tb = np.where(b >= a, t1, t0)
        tb = np.maximum(ta, tb)
        P, Q = P + ta[:, None] * (Q - P), P + tb[:, None] * (Q - P)
        XP = np.einsum("mk,mkd->md", P, p[cand])
        XQ = np.einsum("mk,mkd->md", Q, p[cand])
    length = np.linalg.norm(XQ - XP, axis=1)
    ok = length > 0
    return cand[ok], P[ok], Q[ok], length[ok]


def line_quadrature(mesh, axis, c, window=None, bounds=None):
    """Three-point Gauss rule per segment: (tri, bary, weight, xy) flattened.

    ``bounds`` clips the line exactly (in the coordinate along the line);
    ``window`` = (a, b) filters quadrature points by a < x1 < b.
    """
    tri, P, Q, length = line_segments(mesh, axis, c, bounds)
    bary = P[:, None, :] * (1 - GAUSS3_T)[None, :, None] + Q[:, None, :] * GAUSS3_T[None, :, None]
    w = length[:, None] * GAUSS3_W[None, :]
    xy = np.einsum("msk,mkd->msd", bary, mesh.tri_xy[tri])
    tri = np.repeat(tri, 3)
    bary = bary.reshape(-1, 3)
    w = w.ravel()
    xy = xy.reshape(-1, 2)
    if window is not None:
        a, b = window
        m = (xy[:, 0] > a) & (xy[:, 0] < b)
        tri, bary, w, xy = tri[m], bary[m], w[m], xy[m]
    return tri, bary, w, xy
