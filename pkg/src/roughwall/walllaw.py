"""Wall-law fields: Poiseuille flow, first-order correctors and the Navier-slip channel.

Closed-form fields are stored as coefficient records (polynomials in x2 on
the core 0 < x2 < 1, constants outside) and evaluated on demand.  The
corrector expansion combines them with two boundary-layer cell solutions
rescaled by x -> x / eps:

    u_app = u0 + eps (U_l(x/eps) - U_l^inf) 1{x2 < 1} + eps (U_u - U_u^inf) 1{x2 > 0}
            + eps (v_l + v_u + c_l + c_u) + eps theta u0

Above the cell cap height L the cell fields are continued by their value on
the cap row; this only matters when L < 1 / eps and is reported.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError
from .fem import line_quadrature, line_segments

log = logging.getLogger(__name__)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


# ---------------------------------------------------------------------------
# closed-form profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProfileField:
    """Horizontal field (f(x2), 0): polynomial on [0, 1], constants below and above."""

    name: str
    core: tuple                 # ascending coefficients of f on [0, 1]
    below: float = 0.0
    above: float = 0.0

    def profile(self, x2):
        x2 = np.asarray(x2, dtype=float)
        inside = np.polynomial.polynomial.polyval(x2, self.core)
        return np.where(x2 < 0, self.below, np.where(x2 > 1, self.above, inside))

    def dprofile(self, x2):
        x2 = np.asarray(x2, dtype=float)
        d = np.polynomial.polynomial.polyder(self.core) if len(self.core) > 1 else [0.0]
        inside = np.polynomial.polynomial.polyval(x2, d)
        return np.where((x2 < 0) | (x2 > 1), 0.0, inside)

    def __call__(self, xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return np.column_stack([self.profile(xy[:, 1]), np.zeros(len(xy))])

    def grad(self, xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        g = np.zeros((len(xy), 2, 2))
        g[:, 0, 1] = self.dprofile(xy[:, 1])
        return g

    def core_flux(self):
        """int_0^1 f."""
        P = np.polynomial.polynomial.polyint(self.core)
        return float(np.polynomial.polynomial.polyval(1.0, P))

    def to_dict(self):
        return {"name": self.name, "core": [float(c) for c in self.core],
                "below": float(self.below), "above": float(self.above)}


def poiseuille(phi):
    """u0 = (6 phi x2 (1 - x2), 0) on the core, zero outside."""
    return ProfileField("u0", (0.0, 6.0 * phi, -6.0 * phi))


def _horizontal(U, name, tol):
    U = np.asarray(U, dtype=float).ravel()
    if U.size == 1:
        return float(U[0])
    if abs(U[1]) > tol * max(1.0, abs(U[0])):
        raise ConfigurationError(f"{name} has a vertical component {U[1]:.3e}; the far field must be horizontal")
    return float(U[0])


def corrector_u1(U_l, U_u, tol=1e-6):
    """u1 = 3(l+u) x2^2 - (4l + 2u) x2 - u on the core, -u below and -l above."""
    l = _horizontal(U_l, "U_l^inf", tol)
    u = _horizontal(U_u, "U_u^inf", tol)
    return ProfileField("u1", (-u, -(4 * l + 2 * u), 3 * (l + u)), below=-u, above=-l)


def counterflows(U_l, U_u, tol=1e-6):
    """c_l = (1 - 4 x2 + 3 x2^2) l, c_u = (3 x2^2 - 2 x2) u, with constant continuations."""
    l = _horizontal(U_l, "U_l^inf", tol)
    u = _horizontal(U_u, "U_u^inf", tol)
    c_l = ProfileField("c_l", (l, -4 * l, 3 * l), below=l, above=0.0)
    c_u = ProfileField("c_u", (0.0, -2 * u, 3 * u), below=0.0, above=u)
    return c_l, c_u


# ---------------------------------------------------------------------------
# Navier-slip channel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NavierSlipSolution:
    """v1(x2) = a x2^2 + b x2 + c with slip at both walls and flux phi."""

    alpha_l: float
    alpha_u: float
    eps: float
    phi: float
    a: float
    b: float
    c: float

    def profile(self, x2):
        x2 = np.asarray(x2, dtype=float)
        return self.a * x2 ** 2 + self.b * x2 + self.c

    def dprofile(self, x2):
        return 2 * self.a * np.asarray(x2, dtype=float) + self.b

    def __call__(self, xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return np.column_stack([self.profile(xy[:, 1]), np.zeros(len(xy))])

    def grad(self, xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        g = np.zeros((len(xy), 2, 2))
        g[:, 0, 1] = self.dprofile(xy[:, 1])
        return g

    def residuals(self):
        el, eu = self.eps * self.alpha_l, self.eps * self.alpha_u
        return {"slip_lower": float(self.profile(0.0) - el * self.dprofile(0.0)),
                "slip_upper": float(self.profile(1.0) + eu * self.dprofile(1.0)),
                "flux": float(self.a / 3 + self.b / 2 + self.c - self.phi)}

    def pressure_gradient(self, nu=1.0):
        """Constant axial pressure gradient nu v1''."""
        return 2 * nu * self.a

    def printed_formula_check(self):
        """Evaluate the alternative closed form (M, profile) read literally and compare."""
        el, eu = self.eps * self.alpha_l, self.eps * self.alpha_u
        den = 1 - (el + eu)
        out = {"denominator": den}
        if den == 0:
            out["status"] = "singular"
            return out
        phi_M = 1 / 3 - (1 - 2 * el) * (1 - 2 * eu) / den
        out["phi_over_M"] = phi_M
        if phi_M == 0:
            out["status"] = "singular"
            return out
        M = self.phi / phi_M
        # M (x2^2 - (x2 - el)(1 - 2 eu) / (2 den))
        k = (1 - 2 * eu) / (2 * den)
        lit = NavierSlipSolution(self.alpha_l, self.alpha_u, self.eps, self.phi,
                                 M, -M * k, M * k * el)
        r = lit.residuals()
        x = np.linspace(0, 1, 101)
        out.update({"status": "evaluated", "M": M, "residuals": r,
                    "max_profile_difference": float(np.max(np.abs(lit.profile(x) - self.profile(x))))})
        return out

    def to_dict(self):
        return {"alpha_l": self.alpha_l, "alpha_u": self.alpha_u, "eps": self.eps, "phi": self.phi,
                "a": self.a, "b": self.b, "c": self.c, "residuals": self.residuals(),
                "printed_formula": self.printed_formula_check()}


def navier_slip_solution(alpha_l, alpha_u, eps, phi):
    """Solve the three constraints {slip at 0, slip at 1, flux} for (a, b, c)."""
    el, eu = eps * alpha_l, eps * alpha_u
    A = np.array([[0.0, -el, 1.0],
                  [1.0 + 2 * eu, 1.0 + eu, 1.0],
                  [1 / 3, 1 / 2, 1.0]])
    rhs = np.array([0.0, 0.0, phi])
    det = (1 + 4 * (el + eu) + 12 * el * eu) / 6
    if abs(det) < 1e-12:
        raise ConfigurationError(f"Navier-slip system is singular for eps alpha = ({el}, {eu}); reduce eps")
    a, b, c = np.linalg.solve(A, rhs)
    return NavierSlipSolution(float(alpha_l), float(alpha_u), float(eps), float(phi),
                              float(a), float(b), float(c))


# ---------------------------------------------------------------------------
# boundary-layer samplers
# ---------------------------------------------------------------------------

class CellSampler:
    """Evaluates a cell solution in physical cell coordinates, continued above the cap.

    Heights are measured into the fluid: for the lower cell y2 >= -h_l, for
    the upper cell y2 <= h_u with the fluid at negative y2.
    """

    def __init__(self, sol):
        self.sol = sol
        self.sign = sol.sign
        self.L = float(sol.settings.L)
        self.field = sol.field
        self.mesh = sol.field.mesh
        self.period = self.mesh.period
        self.u_inf = np.array([sol.u_infinity[0], sol.u_infinity[1]])
        self.clamped = 0

    def _mesh_points(self, y):
        q = np.atleast_2d(np.asarray(y, dtype=float)).copy()
        q[:, 1] *= self.sign
        over = q[:, 1] > self.L
        self.clamped += int(over.sum())
        q[over, 1] = self.L * (1 - 1e-12)
        return q, over

    def _locate(self, q):
        tri, bary = self.mesh.locate(q)
        if np.any(tri < 0):
            bad = q[np.flatnonzero(tri < 0)[0]]
            raise DomainError(f"cell coordinate ({bad[0]:.6g}, {self.sign * bad[1]:.6g}) "
                              f"lies outside the boundary-layer domain")
        return tri, bary

    def velocity(self, y):
        q, _ = self._mesh_points(y)
        tri, bary = self._locate(q)
        u = self.field.space.evaluate(self.field.u, tri, bary).T
        u[:, 1] *= self.sign
        return u

    def grad(self, y):
        q, over = self._mesh_points(y)
        tri, bary = self._locate(q)
        g = np.moveaxis(self.field.space.evaluate_grad(self.field.u, tri, bary), 0, 1)
        g[over, :, 1] = 0.0
        S = np.array([1.0, self.sign])
        return g * S[None, :, None] * S[None, None, :]

    def wall_depth(self, y1):
        """Mesh wall height (<= 0, measured into the wall) below abscissae y1."""
        w = self.mesh.wall_nodes("rough")
        P = self.mesh.period
        y1 = self.mesh.x0 + np.mod(np.asarray(y1, dtype=float) - self.mesh.x0, P)
        return np.interp(y1, np.append(w[:, 0], w[0, 0] + P), np.append(w[:, 1], w[0, 1]))

    def section_integral(self, y1, top):
        """int U_1(y1, y2) dy2 from the wall to the fluid height |top| (continued above L)."""
        top = abs(float(top))
        H = min(top, self.L)
        tri, bary, w, _ = line_quadrature(self.mesh, "vertical", y1, bounds=(-np.inf, H))
        val = float(w @ self.field.space.evaluate(self.field.u[0], tri, bary))
        if top > self.L:
            val += (top - self.L) * float(self.velocity([[y1, self.sign * self.L]])[0, 0])
        return val


class LineTrace:
    """Exact piecewise-quadratic restriction of a cell solution to a horizontal line."""

    def __init__(self, sampler, height):
        self.sampler = sampler
        mesh = sampler.mesh
        H = min(abs(float(height)), sampler.L)
        tri, P, Q, _ = line_segments(mesh, "horizontal", H)
        if tri.size == 0:
            H = H * (1 - 1e-12)
            tri, P, Q, _ = line_segments(mesh, "horizontal", H)
        self.height = H
        self.substituted = abs(float(height)) > sampler.L
        V = sampler.field.space
        M = 0.5 * (P + Q)
        xa = np.einsum("mk,mk->m", P, mesh.tri_xy[tri, :, 0])
        xb = np.einsum("mk,mk->m", Q, mesh.tri_xy[tri, :, 0])
        swap = xb < xa
        P[swap], Q[swap] = Q[swap], P[swap].copy()
        xa, xb = np.minimum(xa, xb), np.maximum(xa, xb)
        order = np.argsort(xa)
        tri, P, Q, M, xa, xb = tri[order], P[order], Q[order], M[order], xa[order], xb[order]
        vals = np.stack([V.evaluate(sampler.field.u, tri, B).T for B in (P, M, Q)], axis=1)
        vals[..., 1] *= sampler.sign                 # physical orientation, (nseg, 3, 2)
        self.xa, self.xb, self.vals = xa, xb, vals
        self.x0 = mesh.x0
        self.period = mesh.period
        # exact segment integrals (Simpson is exact for quadratics)
        seg = (xb - xa)[:, None] * (vals[:, 0] + 4 * vals[:, 1] + vals[:, 2]) / 6
        self.total = seg.sum(axis=0)
        self.cum = np.vstack([np.zeros(2), np.cumsum(seg, axis=0)])
        self.mean = self.total / self.period

    def _where(self, y1):
        y1 = np.asarray(y1, dtype=float)
        w = self.x0 + np.mod(y1 - self.x0, self.period)
        k = np.clip(np.searchsorted(self.xa, w, side="right") - 1, 0, len(self.xa) - 1)
        h = self.xb[k] - self.xa[k]
        t = (w - self.xa[k]) / h
        return k, t, h, np.floor((y1 - self.x0) / self.period)

    def value(self, y1):
        """(m, 2) values and first and second y1-derivatives."""
        k, t, h, _ = self._where(y1)
        v = self.vals[k]
        L = np.stack([2 * (t - 0.5) * (t - 1), -4 * t * (t - 1), 2 * t * (t - 0.5)], axis=1)
        dL = np.stack([4 * t - 3, 4 - 8 * t, 4 * t - 1], axis=1) / h[:, None]
        d2L = np.stack([np.full_like(t, 4.0), np.full_like(t, -8.0), np.full_like(t, 4.0)], axis=1) / (h * h)[:, None]
        return (np.einsum("mk,mkc->mc", L, v), np.einsum("mk,mkc->mc", dL, v),
                np.einsum("mk,mkc->mc", d2L, v))

    def primitive(self, y1):
        """int_{x0}^{y1} (U - mean) dy1', periodic thanks to the mean removal."""
        k, t, h, n = self._where(y1)
        v = self.vals[k]
        # integral of the Lagrange basis from 0 to t, times h
        I = np.stack([t * (2 * t * t / 3 - 1.5 * t + 1), t * t * (2 - 4 * t / 3), t * t * (2 * t / 3 - 0.5)], axis=1)
        part = self.cum[k] + h[:, None] * np.einsum("mk,mkc->mc", I, v)
        w = self.x0 + np.mod(np.asarray(y1, dtype=float) - self.x0, self.period)
        return part - np.outer(w - self.x0, self.mean)


@dataclass
class StreamLift:
    """Divergence-free lift v = curl psi, psi = a(x1) s^3 + b(x1) s^2.

    For the lower wall s = x2, for the upper wall s = 1 - x2.  The lift
    vanishes on its own wall and matches U^inf - U(x1/eps, +-1/eps) on the
    opposite interface.
    """

    side: str
    eps: float
    trace: LineTrace
    u_inf: np.ndarray
    drift: float = 0.0

    def _SD(self, x1):
        e = self.eps
        y1 = np.asarray(x1, dtype=float) / e
        U, dU, d2U = self.trace.value(y1)
        S = -e * (self.trace.primitive(y1)[:, 1] - self.trace.primitive(np.zeros(1))[0, 1])
        # the primitive drops the line mean of U_2; its exact value is zero
        S1 = -(U[:, 1] - self.trace.mean[1])
        S2 = -dU[:, 1] / e
        D = U[:, 0] - self.u_inf[0]
        D1 = dU[:, 0] / e
        D2 = d2U[:, 0] / (e * e)
        return S, S1, S2, D, D1, D2

    def coefficients(self, x1):
        S, S1, S2, D, D1, D2 = self._SD(x1)
        if self.side == "lower":
            a, b = D - 2 * S, 3 * S - D
            a1, b1 = D1 - 2 * S1, 3 * S1 - D1
            a2, b2 = D2 - 2 * S2, 3 * S2 - D2
        else:
            a, b = -D - 2 * S, 3 * S + D
            a1, b1 = -D1 - 2 * S1, 3 * S1 + D1
            a2, b2 = -D2 - 2 * S2, 3 * S2 + D2
        return a, b, a1, b1, a2, b2

    def _s(self, x2):
        return x2 if self.side == "lower" else 1 - x2

    def __call__(self, xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        a, b, a1, b1, _, _ = self.coefficients(xy[:, 0])
        s = self._s(xy[:, 1])
        if self.side == "lower":
            v1 = -(3 * a * s ** 2 + 2 * b * s)
        else:
            v1 = 3 * a * s ** 2 + 2 * b * s
        v2 = a1 * s ** 3 + b1 * s ** 2
        inside = (xy[:, 1] >= 0) & (xy[:, 1] <= 1)
        return np.column_stack([v1, v2]) * inside[:, None]

    def grad(self, xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        a, b, a1, b1, a2, b2 = self.coefficients(xy[:, 0])
        s = self._s(xy[:, 1])
        g = np.zeros((len(xy), 2, 2))
        sgn = -1.0 if self.side == "lower" else 1.0      # d s / d x2 = -sgn
        g[:, 0, 0] = sgn * (3 * a1 * s ** 2 + 2 * b1 * s)
        g[:, 0, 1] = -(6 * a * s + 2 * b)
        g[:, 1, 0] = a2 * s ** 3 + b2 * s ** 2
        g[:, 1, 1] = -sgn * (3 * a1 * s ** 2 + 2 * b1 * s)
        inside = (xy[:, 1] >= 0) & (xy[:, 1] <= 1)
        return g * inside[:, None, None]

    def core_flux(self, x1):
        """int_0^1 v_1 dx2."""
        a, b, *_ = self.coefficients(np.atleast_1d(x1))
        return -(a + b) if self.side == "lower" else a + b


def lift_v(bl, eps, side=None):
    """Stream-function lift for one wall from the cell solution at height 1/eps."""
    side = bl.side if side is None else side
    if side != bl.side:
        raise ConfigurationError(f"lift for the {side} wall needs the {side} cell solution")
    sampler = CellSampler(bl)
    tr = LineTrace(sampler, 1.0 / eps)
    lift = StreamLift(side, eps, tr, sampler.u_inf, drift=float(tr.total[1]))
    if tr.substituted:
        log.info("cell cap L = %g below 1/eps = %g: lift uses the cap row", sampler.L, 1 / eps)
    return lift


# ---------------------------------------------------------------------------
# corrector bundle
# ---------------------------------------------------------------------------

@dataclass
class CorrectorBundle:
    eps: float
    phi: float
    bl_l: object
    bl_u: object
    u_inf_l: np.ndarray
    u_inf_u: np.ndarray
    alpha_l: float
    alpha_u: float
    u0: ProfileField
    u1: ProfileField
    c_l: ProfileField
    c_u: ProfileField
    v_l: StreamLift
    v_u: StreamLift
    navier: NavierSlipSolution
    theta: float = 0.0
    theta_sections: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"eps": self.eps, "phi": self.phi,
                "u_inf_l": [float(v) for v in self.u_inf_l], "u_inf_u": [float(v) for v in self.u_inf_u],
                "alpha_l": self.alpha_l, "alpha_u": self.alpha_u, "theta": self.theta,
                "theta_sections": [[float(x), float(t)] for x, t in self.theta_sections],
                "u0": self.u0.to_dict(), "u1": self.u1.to_dict(),
                "c_l": self.c_l.to_dict(), "c_u": self.c_u.to_dict(),
                "navier": self.navier.to_dict(), "diagnostics": dict(self.diagnostics)}


def build_bundle(bl_l, bl_u, eps, sections=None, tol=1e-6):
    """Assemble every corrector for one realization at one eps."""
    if not 0 < eps < 1:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {eps}")
    if bl_l.side != "lower" or bl_u.side != "upper":
        raise ConfigurationError("build_bundle expects (lower, upper) cell solutions")
    phi = bl_l.flux
    if bl_u.flux != phi:
        raise ConfigurationError("lower and upper cell solutions were computed for different fluxes")
    Ul, Uu = np.asarray(bl_l.u_infinity, float), np.asarray(bl_u.u_infinity, float)
    tol_l = max(tol, bl_l.settings.plateau_tol)
    tol_u = max(tol, bl_u.settings.plateau_tol)
    u1 = corrector_u1(Ul, [Uu[0], 0.0], tol_l)
    corrector_u1([Ul[0], 0.0], Uu, tol_u)
    c_l, c_u = counterflows(Ul[0], Uu[0])
    al = float(Ul[0] / (6 * phi)) if phi else 0.0
    au = float(Uu[0] / (6 * phi)) if phi else 0.0
    bundle = CorrectorBundle(eps=eps, phi=phi, bl_l=bl_l, bl_u=bl_u, u_inf_l=Ul, u_inf_u=Uu,
                             alpha_l=al, alpha_u=au, u0=poiseuille(phi), u1=u1, c_l=c_l, c_u=c_u,
                             v_l=lift_v(bl_l, eps), v_u=lift_v(bl_u, eps),
                             navier=navier_slip_solution(al, au, eps, phi))
    cap = min(bl_l.settings.L, bl_u.settings.L)
    bundle.diagnostics["cap_below_inverse_eps"] = bool(cap < 1 / eps)
    bundle.diagnostics["lift_drift"] = [bundle.v_l.drift, bundle.v_u.drift]
    bundle.diagnostics["plateau_residual"] = float(bl_l.plateau_residual + bl_u.plateau_residual)
    if sections is None:
        W = bl_l.field.mesh.period * eps
        x0 = bl_l.field.mesh.x0 * eps
        sections = x0 + W * (np.arange(5) + 0.29) / 5
    theta(bundle, sections)
    return bundle


def theta(bundle, sections):
    """Flux correction; evaluated on several sections, the mean is stored."""
    e, phi = bundle.eps, bundle.phi
    sl, su = CellSampler(bundle.bl_l), CellSampler(bundle.bl_u)
    vals = []
    for x1 in np.atleast_1d(sections):
        y1 = x1 / e
        I = e * (sl.section_integral(y1, 1 / e) + su.section_integral(y1, 1 / e))
        V = float(bundle.v_l.core_flux(x1)[0] + bundle.v_u.core_flux(x1)[0])
        t = (-I + bundle.u_inf_l[0] + bundle.u_inf_u[0] - V)
        vals.append(t / phi if phi else 0.0)
    vals = np.array(vals)
    bundle.theta = float(vals.mean())
    bundle.theta_sections = list(zip(np.atleast_1d(sections).tolist(), vals.tolist()))
    spread = float(np.ptp(vals))
    bundle.diagnostics["theta_spread"] = spread
    return bundle.theta


class AppField:
    """Sampler of the corrector expansion on the rough channel."""

    def __init__(self, bundle):
        self.bundle = bundle
        self.sl = CellSampler(bundle.bl_l)
        self.su = CellSampler(bundle.bl_u)

    def _parts(self, xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        e = self.bundle.eps
        low = xy[:, 1] < 1
        up = xy[:, 1] > 0
        yl = np.column_stack([xy[:, 0] / e, xy[:, 1] / e])
        yu = np.column_stack([xy[:, 0] / e, (xy[:, 1] - 1) / e])
        return xy, e, low, up, yl, yu

    def __call__(self, xy):
        b = self.bundle
        xy, e, low, up, yl, yu = self._parts(xy)
        out = b.u0(xy) * (1 + e * b.theta)
        out += e * (b.c_l(xy) + b.c_u(xy) + b.v_l(xy) + b.v_u(xy))
        if low.any():
            out[low] += e * (self.sl.velocity(yl[low]) - b.u_inf_l)
        if up.any():
            out[up] += e * (self.su.velocity(yu[up]) - b.u_inf_u)
        return out

    def grad(self, xy):
        b = self.bundle
        xy, e, low, up, yl, yu = self._parts(xy)
        g = b.u0.grad(xy) * (1 + e * b.theta)
        g += e * (b.c_l.grad(xy) + b.c_u.grad(xy) + b.v_l.grad(xy) + b.v_u.grad(xy))
        if low.any():
            g[low] += self.sl.grad(yl[low])
        if up.any():
            g[up] += self.su.grad(yu[up])
        return g

    def section_flux(self, x1, n_core=2000, n_layer=400):
        """Composite Gauss quadrature of u_1 over the full section at x1."""
        b = self.bundle
        e = b.eps
        y1 = x1 / e
        hl = -float(self.sl.wall_depth(y1))
        hu = -float(self.su.wall_depth(y1))
        tot = 0.0
        for lo, hi, n in ((-e * hl, 0.0, n_layer), (0.0, 1.0, n_core), (1.0, 1.0 + e * hu, n_layer)):
            if hi <= lo:
                continue
            edges = np.linspace(lo, hi, n + 1)
            mid = 0.5 * (edges[1:] + edges[:-1])
            half = 0.5 * (edges[1:] - edges[:-1])
            pts = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
            w = (half[:, None] * _GL_W[None, :]).ravel()
            xy = np.column_stack([np.full(pts.size, x1), pts])
            tot += float(w @ self(xy)[:, 0])
        return tot


def assemble_u_app(bundle):
    return AppField(bundle)


def wall_residual(app, n=64):
    """max |u_app| at points of both rough walls (rescaled cell walls)."""
    e = app.bundle.eps
    out = 0.0
    for sampler, top in ((app.sl, False), (app.su, True)):
        mesh = sampler.mesh
        y1 = np.linspace(mesh.x0, mesh.x0 + mesh.period, n, endpoint=False)
        wy = sampler.wall_depth(y1)
        # stay a hair inside the fluid
        x2 = 1 - e * wy - 1e-12 if top else e * wy + 1e-12
        out = max(out, float(np.max(np.abs(app(np.column_stack([e * y1, x2]))))))
    return out
