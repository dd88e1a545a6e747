import math

import numpy as np
import pytest

from roughwall.errors import ConfigurationError, NonConvergenceError
from roughwall.geometry import build_channel_mesh, build_halfstrip_mesh
from roughwall.roughness import RoughnessSpec, periodic_pair, sample_boundary
from roughwall.stokes import (HALFSTRIP_BC, LineForce, PhysicalParams, flux_of, solve_navier_stokes,
                              solve_stokes)


def _flat(depth):
    return sample_boundary(RoughnessSpec(kind="flat-offset", amplitude=depth), 0)


@pytest.fixture(scope="module")
def flat_mesh():
    return build_channel_mesh(_flat(0.0), 0.2, 0.5, 0.05)


@pytest.fixture(scope="module")
def rough_mesh(periodic_spec):
    return build_channel_mesh(periodic_pair(periodic_spec, 0.3), 0.1, 0.05, 0.0125)


@pytest.fixture(scope="module")
def rough_ns(rough_mesh):
    return solve_navier_stokes(rough_mesh, PhysicalParams(flux=0.1, epsilon=0.1))


def _poiseuille_error(f, phi):
    xy = f.space.node_xy
    ref = 6 * phi * xy[:, 1] * (1 - xy[:, 1])
    return max(np.max(np.abs(f.u[0] - ref)), np.max(np.abs(f.u[1])))


def test_flat_channel_poiseuille(flat_mesh):
    for nu in (1.0, 0.5):
        f = solve_stokes(flat_mesh, PhysicalParams(nu=nu, flux=1.0))
        assert _poiseuille_error(f, 1.0) < 1e-8
        assert f.lam == pytest.approx(-12 * nu, abs=1e-8)
        # pressure is constant (its mean is pinned to zero)
        assert np.max(np.abs(f.p)) < 1e-8


def test_zero_flux_zero_field(flat_mesh):
    f = solve_stokes(flat_mesh, PhysicalParams(flux=0.0))
    assert np.max(np.abs(f.u)) == 0.0 and f.lam == 0.0


def test_flat_halfstrip_two_region_shear(flat_half):
    phi = 0.7
    m = build_halfstrip_mesh(flat_half, "lower", 1.0, 4.0, 0.125)
    f = solve_stokes(m, PhysicalParams(flux=phi), [LineForce("sigma0", (6 * phi, 0.0))], HALFSTRIP_BC)
    y = f.space.node_xy[:, 1]
    ref = np.where(y < 0, 6 * phi * (y + 0.5), 3 * phi)
    assert np.max(np.abs(f.u[0] - ref)) < 1e-8
    assert np.max(np.abs(f.u[1])) < 1e-8
    assert f.residuals["energy"] < 1e-8


def test_navier_stokes_flat_one_iteration(flat_mesh):
    f = solve_navier_stokes(flat_mesh, PhysicalParams(flux=0.3))
    assert f.iterations == 1
    assert _poiseuille_error(f, 0.3) < 1e-8


def test_rough_navier_stokes_contracts(rough_ns):
    r = rough_ns.residuals
    assert r["nonlinear"] <= 1e-8
    assert r["divergence"] <= 1e-9
    assert r["flux"] <= 1e-10
    assert r["energy"] <= 1e-8
    # small data: consecutive updates shrink by at least 0.9 after the second iterate
    assert all(c <= 0.9 for c in r["contraction"][1:])
    assert not rough_ns.warnings


def test_flux_at_sections(rough_ns):
    xs = np.random.default_rng(3).uniform(-0.05, 0.05, 5)
    fl = [flux_of(rough_ns, x) for x in xs]
    assert max(fl) - min(fl) < 1e-8
    assert abs(fl[0] - 0.1) < 1e-10


def test_flux_of_poiseuille_and_zero(flat_mesh):
    f = solve_stokes(flat_mesh, PhysicalParams(flux=1.0))
    assert flux_of(f, 0.123) == pytest.approx(1.0, abs=1e-10)
    g = solve_stokes(flat_mesh, PhysicalParams(flux=0.0))
    assert flux_of(g, 0.3) == 0.0


def test_picard_cap_raises_nonconvergence(rough_mesh):
    with pytest.raises(NonConvergenceError) as exc:
        solve_navier_stokes(rough_mesh, PhysicalParams(flux=0.1, max_iter=1, tol_picard=1e-30))
    assert "reduce the flux" in str(exc.value)
    assert len(exc.value.history) == 1


def test_large_flux_warns(rough_mesh):
    f = solve_navier_stokes(rough_mesh, PhysicalParams(flux=1.0, phi0=0.5))
    assert any("small-data" in w for w in f.warnings)
    assert f.residuals["nonlinear"] < 1e-8


def test_determinism(rough_mesh, rough_ns):
    f = solve_navier_stokes(rough_mesh, PhysicalParams(flux=0.1, epsilon=0.1))
    assert f.history == rough_ns.history
    assert np.array_equal(f.u, rough_ns.u)


def test_invalid_params():
    with pytest.raises(ConfigurationError):
        PhysicalParams(nu=0.0)
    with pytest.raises(ConfigurationError):
        PhysicalParams(epsilon=1.5)


def _manufactured(nu, phi, k):
    """u = Poiseuille + curl(sin(k x) sin^2(pi y)), p = 0, lam = -12 nu phi."""
    pi = math.pi

    def u(xy):
        x, y = xy[:, 0], xy[:, 1]
        g, g1 = np.sin(pi * y) ** 2, pi * np.sin(2 * pi * y)
        return np.column_stack([6 * phi * y * (1 - y) + np.sin(k * x) * g1, -k * np.cos(k * x) * g])

    def grad(xy):
        x, y = xy[:, 0], xy[:, 1]
        g, g1, g2 = np.sin(pi * y) ** 2, pi * np.sin(2 * pi * y), 2 * pi * pi * np.cos(2 * pi * y)
        out = np.empty((len(x), 2, 2))
        out[:, 0, 0] = k * np.cos(k * x) * g1
        out[:, 0, 1] = 6 * phi * (1 - 2 * y) + np.sin(k * x) * g2
        out[:, 1, 0] = k * k * np.sin(k * x) * g
        out[:, 1, 1] = -k * np.cos(k * x) * g1
        return out

    def force(xy):
        x, y = xy[:, 0], xy[:, 1]
        g, g1 = np.sin(pi * y) ** 2, pi * np.sin(2 * pi * y)
        g2, g3 = 2 * pi * pi * np.cos(2 * pi * y), -4 * pi ** 3 * np.sin(2 * pi * y)
        lap1 = np.sin(k * x) * (g3 - k * k * g1)
        lap2 = -k * np.cos(k * x) * (g2 - k * k * g)
        return -nu * np.column_stack([lap1, lap2])

    return u, grad, force


def test_manufactured_h1_convergence():
    nu, phi = 1.0, 0.5
    errs = []
    hs = (0.0625, 0.03125, 0.015625)
    for h in hs:
        m = build_channel_mesh(_flat(0.0), 0.5, 0.5, h)       # window [-0.5, 0.5], period 1
        u, grad, force = _manufactured(nu, phi, 2 * math.pi)
        f = solve_stokes(m, PhysicalParams(nu=nu, flux=phi), volume_force=force)
        V = f.space
        xy, wa = V.quad_points()
        g = np.stack([V.grads_at_quad(f.u[0]), V.grads_at_quad(f.u[1])], axis=-2)
        ref = grad(xy.reshape(-1, 2)).reshape(g.shape)
        errs.append(math.sqrt(float(np.sum(wa * np.sum((g - ref) ** 2, axis=(-1, -2))))))
        assert f.lam == pytest.approx(-12 * nu * phi, rel=1e-3)
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(rates) >= 1.8, (errs, rates)
