"""Double-layer representation of Stokes flow in the upper half plane.

A bounded Stokes field in {y2 > 0} is recovered from its trace on {y2 = 0}
by convolution with

    G(y) = 2 y2 / (pi |y|^4) [[y1^2, y1 y2], [y1 y2, y2^2]].

Each row of G integrates to the corresponding row of the identity, so
constants are reproduced.  Traces are piecewise quadratic (or linear) on a
uniform grid and extended periodically.  The convolution is split into the
trace mean, reproduced exactly, and a zero-mean remainder.  The remainder is
integrated against the periodized kernel (closed-form image sum), or, as an
independent check, against the free kernel over a finite window of periods
with a rigorous bound on the neglected far field.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, DomainError, SolverError

_GL6_X, _GL6_W = np.polynomial.legendre.leggauss(6)
_GL4_X, _GL4_W = np.polynomial.legendre.leggauss(4)


def kernel(y1, y2):
    """G evaluated at (y1, y2), broadcasting; result has shape (..., 2, 2)."""
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if np.any(y2 <= 0):
        raise DomainError("the double-layer kernel is defined for y2 > 0 only")
    y1, y2 = np.broadcast_arrays(y1, y2)
    r2 = y1 * y1 + y2 * y2
    c = 2 * y2 / (np.pi * r2 * r2)
    out = np.empty(y1.shape + (2, 2))
    out[..., 0, 0] = c * y1 * y1
    out[..., 0, 1] = out[..., 1, 0] = c * y1 * y2
    out[..., 1, 1] = c * y2 * y2
    return out


def kernel_primitive(t, y2):
    """Antiderivative in y1 of G(y1, y2), shape (..., 2, 2)."""
    t = np.asarray(t, dtype=float)
    y2 = float(y2)
    r2 = t * t + y2 * y2
    at = np.arctan2(t, y2)
    out = np.empty(t.shape + (2, 2))
    out[..., 0, 0] = (at - y2 * t / r2) / np.pi
    out[..., 0, 1] = out[..., 1, 0] = -y2 * y2 / (np.pi * r2)
    out[..., 1, 1] = (at + y2 * t / r2) / np.pi
    return out


def kernel_row_mass(y2, tol=1e-10, limit=200):
    """int_R G(y1, y2) dy1 computed by adaptive quadrature; should be the identity."""
    if y2 <= 0:
        raise DomainError("the double-layer kernel is defined for y2 > 0 only")
    out = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            val, err = 0.0, 0.0
            # split at the origin, where the kernel concentrates
            for a, b in ((-np.inf, 0.0), (0.0, np.inf)):
                v, e = integrate.quad(lambda s: kernel(s, y2)[i, j], a, b,
                                      epsabs=tol, epsrel=tol, limit=limit)
                val, err = val + v, err + e
            if err > 10 * tol:
                raise SolverError(f"kernel quadrature did not converge (achieved {err:.3e})")
            out[i, j] = val
    return out


def kernel_periodic(t, y2, period):
    """Sum of G(t + n P, y2) over all integers n, via the cotangent series.

    With z = t + i y2, G11 + G22 = -(2/pi) Im(1/z), G11 - G22 = (2 y2/pi) Re(1/z^2)
    and G12 = -(y2/pi) Im(1/z^2); the image sums of 1/z and 1/z^2 are
    (pi/P) cot(pi z/P) and (pi/P)^2 / sin^2(pi z/P).
    """
    t = np.asarray(t, dtype=float)
    y2 = float(y2)
    if y2 <= 0:
        raise DomainError("the double-layer kernel is defined for y2 > 0 only")
    w = np.pi / period
    z = w * (t + 1j * y2)
    if w * y2 > 20:
        # cot -> -i and 1/sin^2 -> -4 exp(2 i z) well above the trace line
        e = np.exp(2j * z)
        S1 = w * (-1j) * (1 + 2 * e / (1 - e))
        S2 = -4 * w * w * e / (1 - e) ** 2
    else:
        S1 = w / np.tan(z)
        S2 = w * w / np.sin(z) ** 2
    tr = -(2 / np.pi) * S1.imag
    df = (2 * y2 / np.pi) * S2.real
    out = np.empty(t.shape + (2, 2))
    out[..., 0, 0] = 0.5 * (tr + df)
    out[..., 1, 1] = 0.5 * (tr - df)
    out[..., 0, 1] = out[..., 1, 0] = -(y2 / np.pi) * S2.imag
    return out


@dataclass
class Trace:
    """Samples of a periodic trace on a uniform grid x0 + k dx, k = 0..n-1."""

    x: np.ndarray
    u: np.ndarray                       # (n, 2)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.u = np.asarray(self.u, dtype=float).reshape(len(self.x), 2)
        if len(self.x) < 2:
            raise ConfigurationError("a trace needs at least two samples")
        d = np.diff(self.x)
        if np.any(d <= 0) or np.ptp(d) > 1e-9 * max(1.0, d.mean()):
            raise ConfigurationError("trace abscissae must be strictly increasing and uniform")

    @property
    def dx(self):
        return float(np.mean(np.diff(self.x)))

    @property
    def period(self):
        return self.dx * len(self.x)

    @property
    def quadratic(self):
        return len(self.x) % 2 == 0

    def segments(self):
        """(start, length, nodal values (nseg, k, 2)) of the piecewise polynomial."""
        n = len(self.x)
        uu = np.vstack([self.u, self.u[:1]])
        if self.quadratic:
            idx = np.arange(0, n, 2)
            vals = np.stack([uu[idx], uu[idx + 1], uu[idx + 2]], axis=1)
            return self.x[idx], 2 * self.dx, vals
        idx = np.arange(n)
        return self.x, self.dx, np.stack([uu[idx], uu[idx + 1]], axis=1)

    def mean(self):
        _, length, vals = self.segments()
        if vals.shape[1] == 3:
            tot = (vals[:, 0] + 4 * vals[:, 1] + vals[:, 2]).sum(axis=0) * length / 6
        else:
            tot = (vals[:, 0] + vals[:, 1]).sum(axis=0) * length / 2
        return tot / self.period

    def rule(self, nodes, weights):
        """Quadrature points and weighted values for one period with a per-segment rule."""
        start, length, vals = self.segments()
        t = 0.5 * (nodes + 1)
        if vals.shape[1] == 3:
            L = np.stack([2 * (t - 0.5) * (t - 1), -4 * t * (t - 1), 2 * t * (t - 0.5)], axis=1)
        else:
            L = np.stack([1 - t, t], axis=1)
        s = start[:, None] + length * t[None, :]
        f = np.einsum("qk,skc->sqc", L, vals)
        w = 0.5 * length * weights
        return s.ravel(), (f * w[None, :, None]).reshape(-1, 2), f.reshape(-1, 2)

    def l1_norm(self, mean=None):
        """Per-component L1 norm over one period of (trace - mean)."""
        m = self.mean() if mean is None else mean
        _, _, f = self.rule(_GL6_X, _GL6_W)
        _, length, _ = self.segments()
        w = np.tile(0.5 * length * _GL6_W, len(f) // len(_GL6_W))
        return np.abs(f - m).T @ w


@dataclass
class Reconstruction:
    targets: np.ndarray
    values: np.ndarray                  # (m, 2)
    truncation: np.ndarray              # (m, 2) bound on the neglected far field
    quadrature: np.ndarray              # (m, 2) estimated quadrature error
    periods: np.ndarray                 # number of periods integrated on each side
    warnings: list = field(default_factory=list)

    @property
    def budget(self):
        return self.truncation + self.quadrature


def _tail_bound(l1, D, y2):
    """Entrywise bound of the far field beyond distance D on one side (needs D >= y2)."""
    g = np.abs(kernel(D, y2))
    return g @ l1


def reconstruct(trace, targets, tol=1e-8, max_periods=4000, method="periodic"):
    """Evaluate the double-layer representation of a periodic trace at targets (m, 2).

    ``method="periodic"`` sums all periodic images in closed form, so the
    truncation error is zero.  ``method="truncated"`` integrates the free
    kernel over a finite window of periods and reports a bound for the rest.
    """
    if method not in ("periodic", "truncated"):
        raise ConfigurationError(f"unknown reconstruction method {method!r}")
    if not isinstance(trace, Trace):
        trace = Trace(*trace)
    Y = np.atleast_2d(np.asarray(targets, dtype=float))
    if np.any(Y[:, 1] <= 0):
        raise DomainError("reconstruction targets must lie strictly above the trace line")
    warns = []
    close = np.flatnonzero(Y[:, 1] < 2 * trace.dx)
    if close.size:
        warns.append(f"{close.size} target(s) below 2 trace spacings ({2 * trace.dx:.3g}); "
                     "the volumetric solution is authoritative there")
    mean = trace.mean()
    l1 = trace.l1_norm(mean)
    P = trace.period
    s6, wf6, _ = trace.rule(_GL6_X, _GL6_W)
    s4, wf4, _ = trace.rule(_GL4_X, _GL4_W)
    wf6 = wf6 - np.outer(_weights(trace, _GL6_W), mean)
    wf4 = wf4 - np.outer(_weights(trace, _GL4_W), mean)

    m = len(Y)
    vals = np.zeros((m, 2))
    trunc = np.zeros((m, 2))
    quad = np.zeros((m, 2))
    periods = np.zeros(m, dtype=int)
    if method == "periodic":
        for k, (y1, y2) in enumerate(Y):
            v6 = np.einsum("qij,qj->i", kernel_periodic(y1 - s6, y2, P), wf6)
            v4 = np.einsum("qij,qj->i", kernel_periodic(y1 - s4, y2, P), wf4)
            vals[k] = mean + v6
            quad[k] = np.abs(v6 - v4)
        return Reconstruction(Y, vals, trunc, quad, periods, warns)
    for k, (y1, y2) in enumerate(Y):
        scale = max(float(l1.sum()), 1e-300)
        D = max(np.sqrt(4 * y2 * scale / (np.pi * tol)), 2 * y2 + P)
        K = int(np.ceil(D / P)) + 1
        if K > max_periods:
            K = max_periods
            warns.append(f"target {k}: truncation window capped at {K} periods")
        periods[k] = K
        # whole periods centred on the target
        c = np.floor((y1 - trace.x[0]) / P)
        shifts = (np.arange(-K, K + 1) + c) * P
        acc = np.zeros(2)
        for chunk in np.array_split(shifts, max(1, len(shifts) // 256)):
            t = y1 - (s6[None, :] + chunk[:, None])
            acc += np.einsum("pqij,qj->i", kernel(t, y2), wf6)
        vals[k] = mean + acc
        # near-field quadrature error estimate from a coarser rule
        near = shifts[np.abs(y1 - shifts - 0.5 * P) < 10 * y2 + P]
        if near.size:
            t6 = y1 - (s6[None, :] + near[:, None])
            t4 = y1 - (s4[None, :] + near[:, None])
            quad[k] = np.abs(np.einsum("pqij,qj->i", kernel(t6, y2), wf6)
                             - np.einsum("pqij,qj->i", kernel(t4, y2), wf4))
        left = y1 - (shifts[0])
        right = shifts[-1] + P - y1
        trunc[k] = _tail_bound(l1, left, y2) + _tail_bound(l1, right, y2)
        if trunc[k].max() > tol * max(1.0, float(np.abs(vals[k]).max())):
            warns.append(f"target {k}: tail bound {trunc[k].max():.3e} exceeds tolerance {tol:.1e}")
    return Reconstruction(Y, vals, trunc, quad, periods, warns)


def _weights(trace, w):
    _, length, vals = trace.segments()
    return np.tile(0.5 * length * w, vals.shape[0])


def trace_from_bl(sol):
    """Trace of a cell solution mapped to the lower orientation (fluid above)."""
    u = sol.trace_u.copy()
    u[:, 1] *= sol.sign
    return Trace(sol.trace_x, u)


def cross_validate(sol, heights=None, n_lateral=8, tol=1e-8):
    """Compare the reconstruction with the volumetric cell solution.

    Returns (max relative difference, details) over targets at the given
    heights (default: ladder heights in [1, L/2]) and n_lateral abscissae.
    """
    tr = trace_from_bl(sol)
    if heights is None:
        heights = [h for h in sol.heights if 1.0 <= h <= 0.5 * sol.settings.L]
    heights = np.asarray(heights, dtype=float)
    x = tr.x[0] + tr.period * (np.arange(n_lateral) + 0.5) / n_lateral
    Y = np.array([(a, h) for h in heights for a in x])
    rec = reconstruct(tr, Y, tol=tol)
    vol = sol.field.velocity(Y)
    scale = max(float(np.max(np.abs(vol))), 1e-300)
    diff = np.abs(rec.values - vol)
    return float(diff.max() / scale), {"targets": Y, "reconstructed": rec.values,
                                      "volumetric": vol, "budget": rec.budget}


def reconstruct_from_trace(trace, targets, tol=1e-8, method="periodic"):
    """Velocity samples (m, 2) at targets from a trace; see ``reconstruct`` for budgets."""
    return reconstruct(trace, targets, tol=tol, method=method)
