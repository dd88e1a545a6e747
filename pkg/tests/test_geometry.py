import numpy as np
import pytest

from roughwall.errors import ConfigurationError, ResolutionError
from roughwall.fem import P2Space, line_quadrature
from roughwall.geometry import (ColumnIntegrator, WindowNorm, build_channel_mesh, build_halfstrip_mesh,
                                dump_mesh, ladder_heights, mirrored, windowed_norm)
from roughwall.roughness import RoughnessSpec, periodic_pair, sample_boundary


def _flat(depth):
    return sample_boundary(RoughnessSpec(kind="flat-offset", amplitude=depth), 0)


def test_flat_zero_depth_channel_is_unit_strip():
    m = build_channel_mesh(_flat(0.0), 0.1, 0.2, 0.025)
    assert m.points[:, 1].min() == 0.0 and m.points[:, 1].max() == 1.0
    assert np.isclose(m.xc[-1] - m.xc[0], 0.4)


def test_flat_offset_channel_extent():
    m = build_channel_mesh(_flat(0.3), 0.1, 0.1, 0.025)
    assert m.points[:, 1].min() == pytest.approx(-0.03, abs=1e-15)
    assert m.points[:, 1].max() == pytest.approx(1.03, abs=1e-15)


def test_wall_nodes_on_analytic_curve(periodic_spec):
    eps = 0.1
    b = periodic_pair(periodic_spec, 0.17)
    m = build_channel_mesh(b, eps, 0.05, 0.02)
    lo = m.wall_nodes("rough-lower")
    hi = m.wall_nodes("rough-upper")
    y = lo[:, 0] / eps
    F = 0.5 + 0.2 * np.sin(2 * np.pi * (y + 0.17))
    assert np.max(np.abs(lo[:, 1] + eps * F)) < 1e-10
    assert np.max(np.abs(hi[:, 1] - 1 - eps * F)) < 1e-10
    assert np.count_nonzero(m.wall) == 2 * m.nc


def test_interfaces_resolved_exactly(periodic_spec):
    m = build_channel_mesh(periodic_pair(periodic_spec, 0.4), 0.1, 0.05, 0.0125)
    assert np.all(m.Y[:, m.tags["sigma0"]] == 0.0)
    assert np.all(m.Y[:, m.tags["sigma1"]] == 1.0)
    for h in (0.0, 1.0 - 1e-15):
        _, _, w, _ = line_quadrature(m, "horizontal", h)
        assert w.sum() == pytest.approx(0.1, rel=1e-13)


def test_periodic_identification(periodic_spec):
    m = build_channel_mesh(periodic_pair(periodic_spec, 0.2), 0.1, 0.05, 0.0125)
    assert np.array_equal(m.Y[0], m.Y[-1])
    assert m.xc[-1] - m.xc[0] == pytest.approx(m.period, rel=1e-14)


def test_quality_floor(periodic_spec):
    m = build_channel_mesh(periodic_pair(periodic_spec, 0.2), 0.1, 0.05, 0.0125)
    assert m.macro_quality > 0.01
    with pytest.raises(ConfigurationError):
        build_channel_mesh(periodic_pair(periodic_spec, 0.2), 0.1, 0.05, 0.0125, quality_floor=0.99)


def test_resolution_refused_with_required_h(periodic_spec):
    with pytest.raises(ResolutionError) as exc:
        build_channel_mesh(periodic_pair(periodic_spec, 0.0), 0.1, 0.05, 0.05)
    assert exc.value.required_h == pytest.approx(0.025)


def test_periodicity_mismatch(periodic_spec):
    with pytest.raises(ConfigurationError):
        build_channel_mesh(periodic_pair(periodic_spec, 0.0), 0.1, 0.033, 0.0125)


def test_halfstrip_flat_rectangle():
    m = build_halfstrip_mesh(_flat(0.5), "lower", 1.0, 10.0, 0.125)
    assert m.points[:, 1].min() == -0.5 and m.points[:, 1].max() == 10.0
    assert m.row_height("sigma0") == 0.0
    assert m.row_height("cap") == 10.0


def test_halfstrip_sigma0_node_count(periodic_spec):
    m = build_halfstrip_mesh(periodic_pair(periodic_spec, 0.0), "lower", 8.0, 8.0, 0.05)
    # column abscissae on sigma0, counting both periodic ends
    assert m.xc.size == int(2 * 8.0 / 0.05) + 1


def test_halfstrip_degenerate_cap():
    with pytest.raises(ConfigurationError):
        build_halfstrip_mesh(_flat(0.5), "lower", 1.0, 0.4, 0.125)
    with pytest.raises(ConfigurationError):
        build_halfstrip_mesh(_flat(0.5), "sideways", 1.0, 4.0, 0.125)


def test_halfstrip_contains_ladder_rows(periodic_spec):
    m = build_halfstrip_mesh(periodic_pair(periodic_spec, 0.0), "lower", 0.5, 8.0, 0.125)
    _, hs = ladder_heights(8.0)
    rows = set(np.round(m.Y[0], 12))
    for h in hs[hs < 8.0]:
        assert round(h, 12) in rows


def test_mirrored_mesh_reflects():
    m = build_halfstrip_mesh(_flat(0.5), "lower", 1.0, 2.0, 0.25)
    r = mirrored(m)
    assert np.allclose(r.points[:, 1], -m.points[:, 1])
    assert np.all(r.areas > 0)


def test_column_integrator_and_window_norms():
    ci = ColumnIntegrator(np.linspace(-1, 1, 11), np.full(10, 0.2))      # f = 1 on width 2
    assert windowed_norm(ci, WindowNorm("b2-sup", (1.0, 2.0, 4.0))) == pytest.approx(2.0)
    zero = ColumnIntegrator(np.linspace(-1, 1, 5), np.zeros(4))
    for kind, w in (("b2-sup", (1.0, 2.0)), ("l2-uloc", (0.0, 0.5)), ("plain-l2", (1.0,))):
        assert windowed_norm(zero, WindowNorm(kind, w)) == 0.0
    # indicator of a single unit window inside a period of 8
    bump = ColumnIntegrator(np.arange(-4.0, 4.5, 0.5), [0] * 8 + [0.5, 0.5] + [0] * 6)
    starts = tuple(np.arange(-4.0, 4.0, 0.5))
    assert windowed_norm(bump, WindowNorm("l2-uloc", starts)) == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        WindowNorm("b2-sup", ())
    with pytest.raises(ConfigurationError):
        WindowNorm("sup-norm", (1.0,))


def test_quadrature_of_polynomial_over_channel():
    m = build_channel_mesh(_flat(0.2), 0.1, 0.5, 0.025)
    V = P2Space(m)
    xy, wa = V.quad_points()
    x, y = xy[..., 0], xy[..., 1]
    val = float(np.sum(wa * (x ** 2 * y ** 3 + 1)))
    # window [-0.5, 0.5] x [-0.02, 1.02]
    a, b = -0.02, 1.02
    exact = (1.0 / 12) * (b ** 4 - a ** 4) / 4 + (b - a)
    assert val == pytest.approx(exact, rel=1e-8)


def test_dump_mesh_format(tmp_path):
    m = build_halfstrip_mesh(_flat(0.5), "lower", 1.0, 2.0, 0.25)
    dump_mesh(m, tmp_path / "m.txt")
    lines = (tmp_path / "m.txt").read_text().splitlines()
    assert lines[1] == f"nodes {m.n_vertices}"
    assert lines[2 + m.n_vertices] == f"triangles {m.n_triangles}"
    assert any(l.startswith("row sigma0 ") for l in lines)
