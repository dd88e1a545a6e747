"""Stationary Stokes and Navier-Stokes solves with prescribed flux.

Weak form on a periodic strip with no-slip walls:

    nu (grad u, grad v) - (p, div v) + lam (1, v_1) + c((u.grad)u, v) = F(v)
    (q, div u) = 0,   (1, u_1) = 2 R phi,   (1, p) = 0

The scalar multiplier ``lam`` is the mean axial pressure gradient; in the
flat channel it equals -12 nu phi.  The Navier-Stokes system is solved by
Picard iteration written for the full velocity u = u0 + w, where u0 is the
Poiseuille profile in the core and w the perturbation.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, NonConvergenceError, SolverError
from .fem import P2Space, evaluate_pressure, line_quadrature, p2_basis

log = logging.getLogger(__name__)

# grad-div weight (relative to nu) of the augmented Lagrangian pressure loop
AUGMENTATION = 100.0


@dataclass(frozen=True)
class PhysicalParams:
    nu: float = 1.0
    flux: float = 0.0
    epsilon: float = None
    phi0: float = 0.5
    tol_picard: float = 1e-10
    max_iter: int = 50

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigurationError(f"viscosity must be positive, got {self.nu}")
        if self.epsilon is not None and not 0 < self.epsilon < 1:
            raise ConfigurationError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.phi0 > 0:
            raise ConfigurationError("phi0 must be positive")


@dataclass(frozen=True)
class LineForce:
    """Traction applied along a horizontal mesh line (tag name or explicit height)."""

    tag: str = "sigma0"
    traction: tuple = (0.0, 0.0)
    height: float = None

    def resolve_height(self, mesh):
        if self.height is not None:
            return float(self.height)
        if self.tag not in mesh.tags or not hasattr(mesh, "row_height"):
            raise ConfigurationError(f"line force on unresolved interface {self.tag!r}")
        return mesh.row_height(self.tag)


@dataclass(frozen=True)
class BoundaryConditions:
    """No-slip on the walls tagged in the mesh, periodic laterally.

    flux_constraint: add the flux multiplier (channel problems)
    pressure_mean: pin the pressure constant (needed when no boundary is stress free)
    """

    flux_constraint: bool = True
    pressure_mean: bool = True


CHANNEL_BC = BoundaryConditions(True, True)
HALFSTRIP_BC = BoundaryConditions(False, False)


@dataclass(eq=False)
class DiscreteFlowField:
    mesh: object
    space: P2Space
    u: np.ndarray                 # (2, n) velocity coefficients
    p: np.ndarray                 # (3 nt,) pressure coefficients
    lam: float
    params: PhysicalParams
    residuals: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    kind: str = "stokes"
    warnings: list = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.history)

    def locate(self, xy):
        tri, bary = self.mesh.locate(xy)
        return tri, bary

    def velocity(self, xy):
        tri, bary = self.locate(xy)
        out = np.full((len(tri), 2), np.nan)
        ok = tri >= 0
        out[ok] = self.space.evaluate(self.u, tri[ok], bary[ok]).T
        return out

    def velocity_grad(self, xy):
        tri, bary = self.locate(xy)
        out = np.full((len(tri), 2, 2), np.nan)
        ok = tri >= 0
        out[ok] = np.moveaxis(self.space.evaluate_grad(self.u, tri[ok], bary[ok]), 0, 1)
        return out

    def pressure(self, xy):
        tri, bary = self.locate(xy)
        out = np.full(len(tri), np.nan)
        ok = tri >= 0
        out[ok] = evaluate_pressure(self.p, tri[ok], bary[ok])
        return out

    def report(self):
        return {"kind": self.kind, "lambda": self.lam, "iterations": self.iterations,
                "history": list(self.history), "residuals": dict(self.residuals),
                "warnings": list(self.warnings), "n_velocity_dofs": 2 * self.space.n,
                "n_pressure_dofs": self.p.size}


def flux_of(field, x1):
    """Section integral of u_1 along {x = x1}, rough parts included."""
    tri, bary, w, _ = line_quadrature(field.mesh, "vertical", x1)
    return float(np.dot(w, field.space.evaluate(field.u[0], tri, bary)))


def line_integral(field, height, fn=None, window=None):
    """int over {x2 = height} of fn(u) (default u_1) with exact segment quadrature."""
    tri, bary, w, xy = line_quadrature(field.mesh, "horizontal", height, window)
    u = field.space.evaluate(field.u, tri, bary)
    vals = u[0] if fn is None else fn(u, xy)
    return float(np.dot(w, vals))


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

class _System:
    def __init__(self, mesh, params, forces, bc, volume_force=None):
        self.mesh = mesh
        self.params = params
        self.bc = bc
        self.space = V = P2Space(mesh)
        n = V.n
        self.n = n
        free_nodes = np.flatnonzero(~V.wall)
        self.free = np.concatenate([free_nodes, n + free_nodes])
        K = V.stiffness()
        self.K2 = sp.block_diag([K, K], format="csr")
        self.B = V.divergence()
        self.c = np.concatenate([V.load(), np.zeros(n)])
        self.m = V.pressure_mass_vector()
        self.F = np.zeros(2 * n)
        for f in forces:
            y = f.resolve_height(mesh)
            tri, bary, w, _ = line_quadrature(mesh, "horizontal", y)
            N = p2_basis(bary) * w[:, None]
            for comp in range(2):
                if f.traction[comp] != 0.0:
                    np.add.at(self.F, comp * n + V.cell_dofs[tri], f.traction[comp] * N)
        if volume_force is not None:
            xy, wa = V.quad_points()
            fq = volume_force(xy.reshape(-1, 2)).reshape(xy.shape[0], xy.shape[1], 2)
            self.F += np.concatenate([V.load(fq[..., 0]), V.load(fq[..., 1])])
        self.np = self.B.shape[0]
        self.window = mesh.period
        # block-diagonal inverse pressure mass: (area/12) [[2,1,1],[1,2,1],[1,1,2]] per cell
        loc = np.linalg.inv(np.array([[2.0, 1, 1], [1, 2, 1], [1, 1, 2]]) / 12.0)
        nt = V.area.size
        blocks = loc[None] / V.area[:, None, None]
        r = np.repeat(3 * np.arange(nt)[:, None] + np.arange(3), 3, axis=1)
        c = np.tile(3 * np.arange(nt)[:, None] + np.arange(3), (1, 3))
        self.Minv = sp.csr_matrix((blocks.ravel(), (r.ravel(), c.ravel())), shape=(self.np, self.np))
        self.Bf = self.B[:, self.free].tocsr()
        self.graddiv = (self.Bf.T @ self.Minv @ self.Bf).tocsr()
        self.K2f = self.K2[self.free][:, self.free]
        self.rho = AUGMENTATION * params.nu
        self.tol_div = 1e-13
        self.max_uzawa = 200

    def assemble(self, extra=None):
        """Velocity operator augmented with rho * grad-div.

        For this element pair B^T Mp^{-1} B is exactly the grad-div form, so
        the augmentation vanishes on the solution and only accelerates the
        pressure update in ``solve``.
        """
        fr = self.free
        A = self.params.nu * self.K2
        if extra is not None:
            A = A + extra
        A0 = A[fr][:, fr].tocsr()
        return (A0 + self.rho * self.graddiv).tocsc(), A0

    def solve(self, ops, F, p0=None):
        """Iterated augmented Lagrangian: returns (u, p, lam, momentum residual)."""
        A, A0 = ops
        try:
            lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise SolverError(f"singular velocity operator ({exc}); check the no-slip tagging") from None
        fr = self.free
        Bf = self.Bf
        Ff = F[fr]
        cf = self.c[fr]
        flux_target = self.window * self.params.flux

        def apply(x):
            # grad-div applied in factored form avoids cancellation in rho * G
            return A0 @ x + self.rho * (Bf.T @ (self.Minv @ (Bf @ x)))

        def refined(b):
            x = lu.solve(b)
            for _ in range(2):
                x = x + lu.solve(b - apply(x))
            return x

        y = refined(cf) if self.bc.flux_constraint else None
        p = np.zeros(self.np) if p0 is None else p0.copy()
        lam = 0.0
        grad_scale = None
        divs = []
        for _ in range(self.max_uzawa):
            x = refined(Ff + Bf.T @ p)
            if self.bc.flux_constraint:
                lam = (float(cf @ x) - flux_target) / float(cf @ y)
                x = x - lam * y
            d = self.Minv @ (Bf @ x)
            p = p - self.rho * d
            div = math.sqrt(max(float(d @ (Bf @ x)), 0.0))
            if grad_scale is None:
                grad_scale = math.sqrt(max(float(x @ (self.K2f @ x)), 0.0))
            if not np.isfinite(div):
                raise SolverError("non-finite iterate in the augmented Lagrangian loop")
            if div <= self.tol_div * max(grad_scale, 1e-300) or grad_scale == 0.0:
                break
            divs.append(div)
            # round-off floor: accept once small and no longer decreasing
            if (len(divs) > 3 and div <= 1e-10 * grad_scale
                    and div > 0.5 * divs[-4]):
                break
        else:
            raise SolverError(f"pressure iteration did not reach the divergence tolerance (div = {div:.3e})")
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite solution; check inf-sup stability and constraints")
        r = A0 @ x - Bf.T @ p - Ff
        if self.bc.flux_constraint:
            r = r + lam * cf
        res = float(np.max(np.abs(r)) / max(np.max(np.abs(Ff)), abs(lam) * np.max(np.abs(cf)),
                                            float(np.max(np.abs(self.params.nu * (self.K2f @ x)))), 1e-300))
        u = np.zeros(2 * self.n)
        u[fr] = x
        if self.bc.pressure_mean:
            p = p - float(self.m @ p) / float(self.m.sum())
        return u.reshape(2, self.n), p, lam, res

    # u0 coupling for the Picard form
    def poiseuille_coupling(self):
        V = self.space
        xy, _ = V.quad_points()
        cy = self.mesh.tri_xy[:, :, 1].mean(axis=1)
        core = ((cy > 0) & (cy < 1)).astype(float)
        d = 6 * self.params.flux * (1 - 2 * xy[..., 1])
        M0 = V.mass(weight=d, cells=core)
        return sp.bmat([[None, M0], [sp.csr_matrix((self.n, self.n)), None]], format="csr")


def _divergence_norm(V, u):
    g0 = V.grads_at_quad(u[0])
    g1 = V.grads_at_quad(u[1])
    div = g0[..., 0] + g1[..., 1]
    return math.sqrt(float(np.sum(V._wa * div ** 2)))


def _finish(system, u, p, lam, res_lin, kind, history, extra_adv=None):
    V = system.space
    params = system.params
    mesh = system.mesh
    field_ = DiscreteFlowField(mesh=mesh, space=V, u=u, p=p, lam=lam, params=params,
                               kind=kind, history=list(history))
    uf = u.ravel()
    visc = params.nu * float(uf @ (system.K2 @ uf))
    work = float(system.F @ uf)
    lam_term = lam * float(system.c @ uf)
    adv = 0.0 if extra_adv is None else float(uf @ (extra_adv @ uf))
    scale = max(abs(visc), abs(work), abs(lam_term), 1e-300)
    energy = abs(visc + adv + lam_term - work) / scale if scale > 1e-300 else 0.0
    if visc == 0 and work == 0 and lam_term == 0:
        energy = 0.0
    r = {"momentum": float(res_lin), "divergence": _divergence_norm(V, u),
         "energy": float(energy), "dissipation": visc, "forcing_work": work,
         "multiplier_work": lam_term, "advection_work": adv}
    if system.bc.flux_constraint:
        xs = mesh.x0 + mesh.period * (np.arange(5) + 0.37) / 5
        fl = [flux_of(field_, x) for x in xs]
        r["flux"] = float(max(abs(f - params.flux) for f in fl))
        r["flux_spread"] = float(max(fl) - min(fl))
        r["flux_mean_constraint"] = abs(float(system.c @ uf) / system.window - params.flux)
    field_.residuals = r
    return field_


def solve_stokes(mesh, params, forces=(), bc=CHANNEL_BC, volume_force=None):
    """Linear Stokes solve; returns a DiscreteFlowField with residual report."""
    system = _System(mesh, params, forces, bc, volume_force)
    u, p, lam, res = system.solve(system.assemble(), system.F)
    return _finish(system, u, p, lam, res, "stokes", [])


def solve_navier_stokes(mesh, params, forces=(), bc=CHANNEL_BC, volume_force=None):
    """Picard iteration started from the Stokes solution."""
    system = _System(mesh, params, forces, bc, volume_force)
    V = system.space
    n = system.n
    warnings = []
    if abs(params.flux) >= params.phi0:
        warnings.append(f"|phi| = {abs(params.flux)} >= phi0 = {params.phi0}: outside the small-data regime")
        log.warning(warnings[-1])
    u, p, lam, res = system.solve(system.assemble(), system.F)
    C0 = system.poiseuille_coupling() if bc.flux_constraint else None
    history = []
    growth = 0
    for it in range(params.max_iter):
        Nk = V.convection(u)
        extra = sp.block_diag([Nk, Nk], format="csr")
        F = system.F
        if C0 is not None:
            extra = extra + C0
            F = F + C0 @ u.ravel()
        u_new, p, lam, res = system.solve(system.assemble(extra), F, p0=p)
        norm = np.linalg.norm(u_new)
        upd = float(np.linalg.norm(u_new - u) / norm) if norm > 0 else 0.0
        history.append(upd)
        u = u_new
        if not np.isfinite(upd):
            raise NonConvergenceError("Picard iteration produced non-finite iterates; reduce the flux phi",
                                      history)
        if upd < params.tol_picard:
            break
        growth = growth + 1 if len(history) > 1 and upd > history[-2] else 0
        if growth >= 3:
            raise NonConvergenceError(
                f"Picard update grew for 3 consecutive steps (last {upd:.3e}); reduce the flux phi "
                f"below the small-data threshold", history)
    else:
        raise NonConvergenceError(
            f"Picard iteration did not converge in {params.max_iter} steps "
            f"(last update {history[-1]:.3e}); reduce the flux phi", history)
    Nu = V.convection(u)
    adv = sp.block_diag([Nu, Nu], format="csr")
    field_ = _finish(system, u, p, lam, res, "navier-stokes", history, extra_adv=adv)
    # residual of the full nonlinear operator at the converged state
    uf = u.ravel()
    r = params.nu * (system.K2 @ uf) + adv @ uf - system.B.T @ p - system.F
    if bc.flux_constraint:
        r = r + lam * system.c
    scale = max(np.max(np.abs(params.nu * (system.K2 @ uf))), 1e-300)
    field_.residuals["nonlinear"] = float(np.max(np.abs(r[system.free])) / scale)
    field_.residuals["contraction"] = [history[k + 1] / history[k] for k in range(len(history) - 1)
                                       if history[k] > 0]
    field_.warnings.extend(warnings)
    return field_
