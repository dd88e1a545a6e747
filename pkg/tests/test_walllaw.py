import numpy as np
import pytest
from scipy import integrate

from roughwall.boundary_layer import BLSettings, solve_bl
from roughwall.errors import ConfigurationError
from roughwall.stokes import PhysicalParams
from roughwall.walllaw import (CellSampler, assemble_u_app, build_bundle, corrector_u1, counterflows,
                               lift_v, navier_slip_solution, poiseuille, wall_residual)


def _flux(fn):
    """Gauss rule, exact for the quadratic profiles used here."""
    return integrate.fixed_quad(np.vectorize(fn), 0.0, 1.0, n=4)[0]


def test_poiseuille():
    u0 = poiseuille(0.5)
    assert u0.profile(0.5) == pytest.approx(0.75)
    assert u0.profile(0.0) == 0.0 and u0.profile(1.0) == 0.0
    assert u0.profile(-0.1) == 0.0 and u0.profile(1.1) == 0.0
    assert _flux(lambda s: float(u0.profile(s))) == pytest.approx(0.5, abs=1e-14)
    assert u0.core_flux() == pytest.approx(0.5, abs=1e-15)
    assert np.allclose(u0([[0.3, 0.25]]), [[0.5625, 0.0]])
    assert u0.grad([[0.0, 0.0]])[0, 0, 1] == pytest.approx(3.0)


def test_corrector_u1_boundary_values_and_flux():
    l, u = 0.7, 0.3
    u1 = corrector_u1([l, 0.0], [u, 0.0])
    assert u1.profile(0.0) == pytest.approx(-u, abs=1e-15)
    assert u1.profile(1.0) == pytest.approx(-l, abs=1e-15)
    # continuous across both interfaces
    assert u1.profile(-1e-9) == pytest.approx(u1.profile(1e-12), abs=1e-8)
    assert u1.profile(1 + 1e-9) == pytest.approx(u1.profile(1 - 1e-12), abs=1e-8)
    # Stokes profile: constant second derivative
    x = np.linspace(0.1, 0.9, 9)
    d2 = np.diff(u1.profile(x), 2) / 0.1 ** 2
    assert np.allclose(d2, 6 * (l + u), rtol=1e-10)
    # u0 + eps u1 carries the flux phi - eps (l + u) on the core
    phi, eps = 0.2, 0.05
    u0 = poiseuille(phi)
    f = _flux(lambda s: float(u0.profile(s) + eps * u1.profile(s)))
    assert f == pytest.approx(phi - eps * (l + u), abs=1e-14)
    with pytest.raises(ConfigurationError):
        corrector_u1([l, 0.1], [u, 0.0])


def test_counterflows_carry_zero_flux():
    l, u = 0.4, -0.9
    c_l, c_u = counterflows(l, u)
    assert (c_l.profile(0.0), c_l.profile(1.0)) == pytest.approx((l, 0.0), abs=1e-15)
    assert (c_u.profile(0.0), c_u.profile(1.0)) == pytest.approx((0.0, u), abs=1e-15)
    assert c_l.profile(-0.3) == l and c_u.profile(1.3) == u
    assert _flux(lambda s: float(c_l.profile(s))) == pytest.approx(0.0, abs=1e-14)
    assert _flux(lambda s: float(c_u.profile(s))) == pytest.approx(0.0, abs=1e-14)


def test_navier_zero_alpha_is_poiseuille():
    s = navier_slip_solution(0.0, 0.0, 0.1, 1.0)
    assert (s.a, s.b, s.c) == pytest.approx((-6.0, 6.0, 0.0), abs=1e-13)
    assert s.pressure_gradient(nu=2.0) == pytest.approx(-24.0)


def test_navier_constraints_directly():
    eps, al, au, phi = 0.1, 0.3, 0.5, 1.0
    s = navier_slip_solution(al, au, eps, phi)
    v, dv = s.profile, s.dprofile
    assert abs(v(0.0) - eps * al * dv(0.0)) <= 1e-12
    assert abs(v(1.0) + eps * au * dv(1.0)) <= 1e-12
    assert abs(_flux(lambda x: float(v(x))) - phi) <= 1e-12
    assert max(abs(r) for r in s.residuals().values()) <= 1e-12


def test_navier_mirror_symmetry():
    a = navier_slip_solution(0.3, 0.5, 0.1, 1.0)
    b = navier_slip_solution(0.5, 0.3, 0.1, 1.0)
    x = np.linspace(0, 1, 11)
    assert np.allclose(a.profile(x), b.profile(1 - x), atol=1e-13)


def test_navier_printed_closed_form_discrepancy():
    chk = navier_slip_solution(0.3, 0.5, 0.1, 1.0).printed_formula_check()
    assert chk["status"] == "evaluated"
    # read literally the alternative form misses the flux and slip constraints
    assert chk["max_profile_difference"] > 1e-3
    assert max(abs(r) for r in chk["residuals"].values()) > 1e-3


def test_navier_singular_and_small_eps():
    with pytest.raises(ConfigurationError):
        navier_slip_solution(-5 / 3, -5 / 3, 0.1, 1.0)
    s = navier_slip_solution(0.3, 0.5, 1e-8, 1.0)
    x = np.linspace(0, 1, 11)
    assert np.allclose(s.profile(x), 6 * x * (1 - x), atol=1e-6)


@pytest.fixture(scope="module")
def flat_pair(flat_bl, flat_half):
    up = solve_bl(flat_half, "upper", PhysicalParams(flux=1.0), BLSettings(R_bl=1.0, L=10.0, target_h=0.125))
    return flat_bl, up


@pytest.mark.parametrize("eps", [0.2, 0.1])
def test_flat_wall_bundle_theta(flat_pair, eps):
    c = 0.5
    b = build_bundle(*flat_pair, eps)
    # section flux of the expansion equals phi exactly when theta = -6 eps c^2
    assert b.theta == pytest.approx(-6 * eps * c * c, abs=1e-8)
    assert b.alpha_l == pytest.approx(c, abs=1e-8) and b.alpha_u == pytest.approx(c, abs=1e-8)
    app = assemble_u_app(b)
    assert app.section_flux(0.37 * eps) == pytest.approx(1.0, abs=1e-8)
    assert wall_residual(app) <= 1e-8


def test_flat_lift_is_zero(flat_bl):
    v = lift_v(flat_bl, 0.2)
    xy = np.column_stack([np.linspace(-0.1, 0.1, 9), np.linspace(0, 1, 9)])
    assert np.max(np.abs(v(xy))) <= 1e-8
    with pytest.raises(ConfigurationError):
        lift_v(flat_bl, 0.2, side="upper")


@pytest.fixture(scope="module")
def periodic_bundle(periodic_bls):
    return build_bundle(*periodic_bls, 0.25)


def test_periodic_bundle_flux_and_theta(periodic_bundle):
    b = periodic_bundle
    assert b.diagnostics["theta_spread"] <= 1e-6
    app = assemble_u_app(b)
    for x1 in (-0.1, 0.013, 0.09):
        assert app.section_flux(x1) == pytest.approx(b.phi, abs=1e-6)
    assert wall_residual(app) <= 1e-8
    assert not b.diagnostics["cap_below_inverse_eps"]


def test_lift_cancels_layer_on_opposite_interface(periodic_bundle):
    b = periodic_bundle
    e = b.eps
    x1 = np.linspace(-0.12, 0.12, 7)
    top = np.column_stack([x1, np.ones_like(x1)])
    U = CellSampler(b.bl_l).velocity(np.column_stack([x1 / e, np.full_like(x1, 1 / e)]))
    total = b.v_l(top) + (U - b.u_inf_l)
    assert np.max(np.abs(total)) <= 1e-10 + b.bl_l.plateau_residual
    # vanishes on its own wall and is divergence-free
    assert np.max(np.abs(b.v_l(np.column_stack([x1, np.zeros_like(x1)])))) <= 1e-14
    g = b.v_l.grad(np.column_stack([x1, np.full_like(x1, 0.4)]))
    assert np.max(np.abs(g[:, 0, 0] + g[:, 1, 1])) <= 1e-12


def test_bundle_rejects_bad_inputs(periodic_bls):
    lo, up = periodic_bls
    with pytest.raises(ConfigurationError):
        build_bundle(up, lo, 0.25)
    with pytest.raises(ConfigurationError):
        build_bundle(lo, up, 1.5)
