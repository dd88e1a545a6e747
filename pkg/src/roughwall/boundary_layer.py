"""Boundary-layer cell problems and slip coefficients.

The cell problem is a Stokes flow in the half-strip above a rough wall,
driven by a tangential line force on {y2 = 0}; the velocity tends to a
constant U_inf far from the wall.  The domain is truncated laterally by
periodicity (the realization is periodized over the strip) and vertically
by a stress-free cap at y2 = L.

Both walls are handled in one orientation: the upper problem is solved
with the wall depth h_u below {y2 = 0} and mapped back through
y2 -> -y2, U2 -> -U2.
"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, ExtractionError, RoughWallError
from .fem import line_quadrature
from .geometry import build_halfstrip_mesh, ladder_heights
from .roughness import sample_boundary
from .stokes import HALFSTRIP_BC, LineForce, PhysicalParams, solve_stokes

log = logging.getLogger(__name__)

WORKERS_ENV = "ROUGHWALL_WORKERS"

# relative floor of reported plateau residuals (solver accuracy)
ROUNDOFF_FLOOR = 1e-12


@dataclass(frozen=True)
class BLSettings:
    R_bl: float = 8.0
    L: float = 8.0
    target_h: float = 0.125
    plateau_tol: float = 1e-3
    cap_check: bool = True
    ladder_y0: float = 0.25
    ladder_ratio: float = 1.5
    max_h: float = None

    def __post_init__(self):
        if not (self.R_bl > 0 and self.L > 0 and self.target_h > 0):
            raise ConfigurationError("R_bl, L and target_h must be positive")
        if not 0 < self.plateau_tol < 1:
            raise ConfigurationError("plateau tolerance must lie in (0, 1)")


@dataclass(eq=False)
class BLSolution:
    boundary: object
    side: str
    params: PhysicalParams
    settings: BLSettings
    field: object                       # solution in the lower orientation
    trace_x: np.ndarray
    trace_u: np.ndarray                 # (m, 2), physical orientation
    heights: np.ndarray                 # distance from {y2 = 0} into the fluid
    profiles: np.ndarray                # (k, 2) lateral means A(height), physical orientation
    u_infinity: np.ndarray = None
    plateau_height: float = None
    plateau_residual: float = None
    cap_delta: float = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def mesh(self):
        return self.field.mesh

    @property
    def flux(self):
        return self.params.flux

    @property
    def sign(self):
        return 1.0 if self.side == "lower" else -1.0

    def velocity(self, y):
        """U at physical cell coordinates (y1, y2); for the upper cell y2 <= h_u."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        q = y.copy()
        q[:, 1] *= self.sign
        u = self.field.velocity(q)
        u[:, 1] *= self.sign
        return u

    def top_height(self):
        return float(self.settings.L)

    def to_dict(self):
        return {
            "side": self.side, "flux": self.flux, "nu": self.params.nu,
            "alpha": slip_coefficient(self) if self.flux != 0 and self.u_infinity is not None else None,
            "u_infinity": None if self.u_infinity is None else [float(v) for v in self.u_infinity],
            "plateau_height": self.plateau_height, "plateau_residual": self.plateau_residual,
            "cap_delta": self.cap_delta, "diagnostics": dict(self.diagnostics),
            "settings": {"R_bl": self.settings.R_bl, "L": self.settings.L,
                         "target_h": self.settings.target_h,
                         "plateau_tol": self.settings.plateau_tol},
            "residuals": dict(self.field.residuals),
        }


def lateral_mean(field, height):
    """(1/width) int U(y1, height) dy1 in the lower orientation."""
    tri, bary, w, _ = line_quadrature(field.mesh, "horizontal", height)
    u = field.space.evaluate(field.u, tri, bary)
    return u @ w / field.mesh.period


def _solve_raw(b, side, params, settings, L):
    mesh = build_halfstrip_mesh(b, side, settings.R_bl, L, settings.target_h,
                                max_h=settings.max_h, ladder_y0=settings.ladder_y0,
                                ladder_ratio=settings.ladder_ratio)
    force = LineForce("sigma0", (6.0 * params.nu * params.flux, 0.0))
    return solve_stokes(mesh, params, [force], HALFSTRIP_BC)


def _trace(field, sign):
    V = field.space
    on = np.flatnonzero(np.abs(V.node_xy[:, 1]) < 1e-12)
    x = V.node_xy[on, 0]
    order = np.argsort(x)
    on = on[order]
    u = field.u[:, on].T.copy()
    u[:, 1] *= sign
    return x[order], u


def solve_bl(b, side, params, settings=BLSettings(), *, extract=True):
    """Solve the cell problem for one wall of a realization."""
    if side not in ("lower", "upper"):
        raise ConfigurationError(f"side must be 'lower' or 'upper', got {side!r}")
    field_ = _solve_raw(b, side, params, settings, settings.L)
    sign = 1.0 if side == "lower" else -1.0
    tx, tu = _trace(field_, sign)
    _, heights = ladder_heights(settings.L, settings.ladder_y0, settings.ladder_ratio)
    heights = heights[heights < settings.L - 1e-12]
    prof = np.array([lateral_mean(field_, h) for h in heights]).reshape(-1, 2)
    prof[:, 1] *= sign
    sol = BLSolution(boundary=field_.mesh.boundary, side=side, params=params, settings=settings,
                     field=field_, trace_x=tx, trace_u=tu, heights=heights, profiles=prof)
    sol.diagnostics["energy_identity"] = bl_energy_residual(sol)
    if extract:
        extract_u_infinity(sol)
        if settings.cap_check:
            _cap_check(sol, b)
    return sol


def bl_energy_residual(sol):
    """| nu |grad U|^2 - 6 nu phi int_{Sigma0} U_1 | relative."""
    f = sol.field
    visc = f.residuals["dissipation"]
    tri, bary, w, _ = line_quadrature(f.mesh, "horizontal", 0.0)
    work = 6.0 * sol.params.nu * sol.flux * float(w @ f.space.evaluate(f.u[0], tri, bary))
    scale = max(abs(visc), abs(work))
    return 0.0 if scale == 0 else abs(visc - work) / scale


def extract_u_infinity(sol):
    """Plateau extraction from the lateral-mean profiles on the height ladder."""
    tol = sol.settings.plateau_tol
    hs = sol.heights
    A = sol.profiles
    L = sol.settings.L
    index = {round(h, 12): k for k, h in enumerate(hs)}
    best = None
    for k, h in enumerate(hs):
        if h > L / 2 + 1e-12:
            break
        k2 = index.get(round(2 * h, 12))
        if k2 is None:
            continue
        res = float(np.linalg.norm(A[k] - A[k2]))
        scale = float(np.linalg.norm(A[k]))
        if best is None or res < best[1]:
            best = (k, res)
        if res <= tol * scale or res == 0.0:
            sol.u_infinity = A[k].copy()
            sol.plateau_height = float(h)
            # never report below the attainable accuracy of the solve
            sol.plateau_residual = max(res, ROUNDOFF_FLOOR * scale)
            sol.diagnostics["u_inf_2"] = abs(float(A[k][1]))
            return sol.u_infinity, sol.diagnostics
    msg = "no plateau found below L/2"
    if best is not None:
        msg += f" (smallest residual {best[1]:.3e} at height {hs[best[0]]:.3g})"
    raise ExtractionError(msg + "; increase the cap height L or the strip half-width R_bl")


def _cap_check(sol, b):
    try:
        s2 = replace(sol.settings, L=2 * sol.settings.L, cap_check=False)
        other = _solve_raw(b, sol.side, sol.params, s2, s2.L)
        h = sol.plateau_height
        A2 = lateral_mean(other, h)
        A2[1] *= sol.sign
        sol.cap_delta = float(np.linalg.norm(A2 - sol.u_infinity))
    except RoughWallError as exc:   # pragma: no cover - diagnostic only
        sol.cap_delta = float("nan")
        sol.diagnostics["cap_error"] = str(exc)
    budget = max(sol.plateau_residual, sol.settings.plateau_tol * float(np.linalg.norm(sol.u_infinity)))
    sol.diagnostics["cap_warning"] = bool(not sol.cap_delta <= budget)
    if sol.diagnostics["cap_warning"]:
        log.warning("cap sensitivity %.3e exceeds the plateau budget %.3e", sol.cap_delta, budget)


def slip_coefficient(sol):
    if sol.flux == 0:
        raise ConfigurationError("slip coefficient undefined for zero flux (alpha = U_inf / (6 phi))")
    if sol.u_infinity is None:
        extract_u_infinity(sol)
    return float(sol.u_infinity[0] / (6.0 * sol.flux))


def decay_profile(sol, order=(0, 0)):
    """Lateral mean of |d^order U|^2 on the height ladder (U_inf subtracted for order 0)."""
    order = tuple(int(v) for v in order)
    n = sum(order)
    if n > 2 or min(order) < 0:
        raise ConfigurationError("derivative order must satisfy |alpha| <= 2")
    f = sol.field
    V = f.space
    rows = []
    u_inf = np.zeros(2) if sol.u_infinity is None else sol.u_infinity * np.array([1.0, sol.sign])
    for h in sol.heights:
        tri, bary, w, _ = line_quadrature(f.mesh, "horizontal", h)
        if n == 0:
            vals = V.evaluate(f.u, tri, bary) - u_inf[:, None]
            sq = np.sum(vals ** 2, axis=0)
        elif n == 1:
            g = V.evaluate_grad(f.u, tri, bary)                # (2, m, 2)
            d = 0 if order[0] == 1 else 1
            sq = np.sum(g[..., d] ** 2, axis=0)
        else:
            H = V.evaluate_hessian(f.u, tri)                   # (2, m, 2, 2)
            a = [0] * order[0] + [1] * order[1]
            sq = np.sum(H[..., a[0], a[1]] ** 2, axis=0)
        rows.append((float(h), float(w @ sq) / f.mesh.period))
    return np.array(rows)


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

@dataclass
class SlipCoefficients:
    seeds: list
    alpha_l: np.ndarray
    alpha_u: np.ndarray
    plateau_l: np.ndarray
    plateau_u: np.ndarray
    cap_l: np.ndarray
    cap_u: np.ndarray
    failures: dict = field(default_factory=dict)
    records: list = field(default_factory=list)     # raw per-seed results

    @staticmethod
    def _stats(a):
        a = np.asarray([v for v in a if np.isfinite(v)])
        if a.size == 0:
            return float("nan"), float("nan")
        mean = math.fsum(a) / a.size
        if a.size < 2:
            return mean, float("nan")
        var = math.fsum((a - mean) ** 2) / (a.size - 1)
        return mean, math.sqrt(var / a.size)

    @property
    def mean_l(self):
        return self._stats(self.alpha_l)[0]

    @property
    def mean_u(self):
        return self._stats(self.alpha_u)[0]

    @property
    def stderr_l(self):
        return self._stats(self.alpha_l)[1]

    @property
    def stderr_u(self):
        return self._stats(self.alpha_u)[1]

    def spread(self, side="lower"):
        a = self.alpha_l if side == "lower" else self.alpha_u
        a = a[np.isfinite(a)]
        return float(a.max() - a.min()) if a.size else float("nan")

    def std(self, side="lower"):
        a = self.alpha_l if side == "lower" else self.alpha_u
        a = a[np.isfinite(a)]
        if a.size < 2:
            return 0.0
        m = math.fsum(a) / a.size
        return math.sqrt(math.fsum((a - m) ** 2) / (a.size - 1))

    def summary(self):
        return {"seeds": list(self.seeds), "alpha_l_mean": self.mean_l, "alpha_l_stderr": self.stderr_l,
                "alpha_u_mean": self.mean_u, "alpha_u_stderr": self.stderr_u,
                "failures": {str(k): v for k, v in self.failures.items()}}


def _seed_job(args):
    spec, seed, sides, params, settings = args
    b = sample_boundary(spec, seed)
    out = {"seed": seed}
    for side in sides:
        sol = solve_bl(b, side, params, settings)
        out[side] = {"alpha": slip_coefficient(sol), "u_infinity": sol.u_infinity.tolist(),
                     "plateau_residual": sol.plateau_residual, "cap_delta": sol.cap_delta,
                     "plateau_height": sol.plateau_height}
    return out


def _run_job(args):
    try:
        return _seed_job(args)
    except RoughWallError as exc:
        return {"seed": args[1], "error": f"{type(exc).__name__}: {exc}"}


def worker_count(default=1):
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def map_jobs(fn, jobs, workers=None):
    """Map over jobs, in a process pool when more than one worker is configured."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def ensemble_alpha(spec, side, params, seeds, settings=BLSettings(), workers=None):
    """Per-seed slip coefficients; failing seeds are excluded with their reason."""
    seeds = [int(s) for s in seeds]
    if len(seeds) < 2:
        raise ConfigurationError("ensemble_alpha needs at least two seeds")
    sides = ("lower", "upper") if side == "both" else (side,)
    for s in sides:
        if s not in ("lower", "upper"):
            raise ConfigurationError(f"side must be lower, upper or both, got {side!r}")
    results = map_jobs(_run_job, [(spec, s, sides, params, settings) for s in seeds], workers)
    n = len(seeds)
    arr = {k: np.full(n, np.nan) for k in ("al", "au", "pl", "pu", "cl", "cu")}
    failures = {}
    for k, r in enumerate(results):
        if "error" in r:
            failures[r["seed"]] = r["error"]
            continue
        if "lower" in r:
            arr["al"][k] = r["lower"]["alpha"]
            arr["pl"][k] = r["lower"]["plateau_residual"]
            arr["cl"][k] = r["lower"]["cap_delta"] if r["lower"]["cap_delta"] is not None else np.nan
        if "upper" in r:
            arr["au"][k] = r["upper"]["alpha"]
            arr["pu"][k] = r["upper"]["plateau_residual"]
            arr["cu"][k] = r["upper"]["cap_delta"] if r["upper"]["cap_delta"] is not None else np.nan
    return SlipCoefficients(seeds, arr["al"], arr["au"], arr["pl"], arr["pu"], arr["cl"], arr["cu"],
                            failures, results)
