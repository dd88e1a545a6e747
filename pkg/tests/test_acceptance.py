"""Acceptance criteria 1 to 7; each test writes one PASS/FAIL line to the terminal."""

import csv
import json

import numpy as np
import pytest

from roughwall.boundary_layer import BLSettings, ensemble_alpha, slip_coefficient, solve_bl
from roughwall.cli import dispatch
from roughwall.geometry import build_channel_mesh
from roughwall.potential import cross_validate, kernel_row_mass
from roughwall.roughness import RoughnessSpec, periodic_pair, sample_boundary
from roughwall.stokes import PhysicalParams, solve_navier_stokes, solve_stokes

LADDER = "0.1, 0.05, 0.025, 0.0125"
PERIODIC = ("roughness_kind = shifted-periodic\nroughness_modes = 1\nroughness_amplitude = 0.2\n"
            f"eps = {LADDER}\nseeds = 1\nR_over_eps = 0.5\ntarget_h_over_eps = 0.125\n")
FOURIER = ("roughness_kind = truncated-fourier\nroughness_modes = 8\nroughness_amplitude = 0.2\n"
           f"eps = {LADDER}\nseeds = 1..4\nR_over_eps = 4\ntarget_h_over_eps = 0.25\n")


def _report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nacceptance criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _flat(depth):
    return sample_boundary(RoughnessSpec(kind="flat-offset", amplitude=depth), 0)


def _study(root, name, kind, text):
    cfg = root / f"{name}.cfg"
    cfg.write_text(text)
    out = root / name
    code = dispatch(["study", kind, "--config", str(cfg), "--out", str(out)])
    return code, out, json.loads((out / "summary.json").read_text())


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def periodic_navier(runs):
    return _study(runs, "periodic_navier", "navier", PERIODIC)


@pytest.fixture(scope="module")
def periodic_dirichlet(runs):
    return _study(runs, "periodic_dirichlet", "dirichlet", PERIODIC)


@pytest.fixture(scope="module")
def fourier_navier(runs):
    return _study(runs, "fourier_navier", "navier", FOURIER)


def test_criterion_1_exact_baselines(capsys, flat_bl):
    phi = 1.0
    f = solve_stokes(build_channel_mesh(_flat(0.0), 0.1, 0.25, 0.025), PhysicalParams(flux=phi))
    xy = f.space.node_xy
    e_u = max(np.max(np.abs(f.u[0] - 6 * phi * xy[:, 1] * (1 - xy[:, 1]))), np.max(np.abs(f.u[1])))
    e_lam = abs(f.lam + 12 * phi)
    y = flat_bl.field.space.node_xy[:, 1]
    ref = np.where(y < 0, 6 * phi * (y + 0.5), 3 * phi)
    e_bl = max(np.max(np.abs(flat_bl.field.u[0] - ref)), np.max(np.abs(flat_bl.field.u[1])))
    e_alpha = abs(slip_coefficient(flat_bl) - 0.5)
    worst = max(e_u, e_lam, e_bl, e_alpha)
    _report(capsys, 1, worst <= 1e-8,
            f"poiseuille {e_u:.1e}, pressure gradient {e_lam:.1e}, shear {e_bl:.1e}, alpha {e_alpha:.1e} (<= 1e-8)")


def test_criterion_2_structural_invariants(capsys, periodic_bls, fourier_spec):
    fields = []
    for eps in (0.1, 0.05):
        m = build_channel_mesh(periodic_pair(RoughnessSpec(kind="shifted-periodic", mode_count=1, amplitude=0.2),
                                             0.3), eps, 0.5 * eps, 0.125 * eps)
        fields.append(solve_navier_stokes(m, PhysicalParams(flux=0.1, epsilon=eps)))
    b = sample_boundary(fourier_spec, 2)
    m = build_channel_mesh(b, 0.1, 0.4, 0.025)
    fields.append(solve_navier_stokes(m, PhysicalParams(flux=0.1, epsilon=0.1)))
    bls = list(periodic_bls) + [solve_bl(b, "lower", PhysicalParams(flux=0.1),
                                         BLSettings(R_bl=4.0, L=8.0, target_h=0.25))]
    div = max(f.residuals["divergence"] for f in fields + [s.field for s in bls])
    flux = max(f.residuals["flux"] for f in fields)
    energy = max(f.residuals["energy"] for f in fields)
    bl_energy = max(s.diagnostics["energy_identity"] for s in bls)
    ok = div <= 1e-9 and flux <= 1e-10 and energy <= 1e-8 and bl_energy <= 1e-8
    _report(capsys, 2, ok, f"divergence {div:.1e} (<= 1e-9), flux {flux:.1e} (<= 1e-10), "
                           f"energy {energy:.1e} (<= 1e-8), cell energy {bl_energy:.1e} (<= 1e-8)")


def test_criterion_3_slip_coefficient_properties(capsys, periodic_spec, fourier_spec):
    s = BLSettings(R_bl=4.0, L=8.0, target_h=0.25)
    b = sample_boundary(fourier_spec, 3)
    a1 = solve_bl(b, "lower", PhysicalParams(flux=0.1), s)
    a2 = solve_bl(b, "lower", PhysicalParams(flux=0.2), s)
    lin = abs(slip_coefficient(a2) / slip_coefficient(a1) - 1)
    vert = max(abs(a.u_infinity[1]) / abs(a.u_infinity[0]) for a in (a1, a2))
    ens = ensemble_alpha(periodic_spec, "both", PhysicalParams(flux=0.1), [1, 2, 3, 4],
                         BLSettings(R_bl=0.5, L=8.0, target_h=0.125))
    spread = max(ens.spread("lower"), ens.spread("upper"))
    plateau = float(np.max(np.concatenate([ens.plateau_l, ens.plateau_u]))) / (6 * 0.1)
    ok = lin <= 1e-10 and vert <= s.plateau_tol and spread <= 2 * plateau
    _report(capsys, 3, ok, f"linearity {lin:.1e} (<= 1e-10), |U2|/|U1| {vert:.1e} (<= {s.plateau_tol:g}), "
                           f"periodic spread {spread:.1e} (<= {2 * plateau:.1e})")


def test_criterion_4_double_layer_cross_check(capsys, periodic_bls, flat_bl):
    mass = max(float(np.max(np.abs(kernel_row_mass(h) - np.eye(2)))) for h in (0.5, 1.0, 5.0, 10.0))
    worst, allowed = 0.0, 1.0
    for sol in (*periodic_bls, flat_bl):
        rel, det = cross_validate(sol)
        scale = float(np.max(np.abs(det["volumetric"])))
        lim = max(0.02, (float(det["budget"].max()) + sol.plateau_residual) / scale)
        if rel / lim > worst / allowed:
            worst, allowed = rel, lim
    ok = mass <= 1e-8 and worst <= allowed
    _report(capsys, 4, ok, f"row mass {mass:.1e} (<= 1e-8), reconstruction {worst:.2e} (<= {allowed:.2e})")


def test_criterion_5_dirichlet_rates(capsys, periodic_dirichlet):
    code, _, s = periodic_dirichlet
    bands = {"e_D": (0.9, 1.5), "e_trace": (0.9, 1.5), "e_D_grad": (0.4, 0.8)}
    slopes = {k: s["slopes"][k].get("slope") for k in bands}
    ok = code == 0 and all(v is not None and lo <= v <= hi for (k, (lo, hi)), v in zip(bands.items(), slopes.values()))
    detail = ", ".join(f"{k} {'-' if v is None else f'{v:.3f}'} in [{bands[k][0]}, {bands[k][1]}]"
                       for k, v in slopes.items())
    _report(capsys, 5, ok, detail)


def test_criterion_6_navier_improvement(capsys, periodic_navier, fourier_navier):
    code_p, dir_p, s = periodic_navier
    rows = list(csv.DictReader(open(dir_p / "cells.csv", newline="")))
    viol = [(r["epsilon"], r["seed"]) for r in rows
            if float(r["epsilon"]) <= 0.05 and not float(r["e_N"]) < float(r["e_D"])]
    slope = s["slopes"]["e_N"].get("slope")
    code_f, _, f = fourier_navier
    ratio = f["checks"]["ratio_e_N_over_e_D"]
    falling = all(b < a for a, b in zip(ratio, ratio[1:]))
    ok = code_p == 0 and code_f == 0 and not viol and slope is not None and slope >= 1.7 and falling
    _report(capsys, 6, ok, f"ordering violations {len(viol)}, periodic e_N slope "
                           f"{'-' if slope is None else f'{slope:.3f}'} (>= 1.7), fourier mean e_N/e_D "
                           + " > ".join(f"{r:.4f}" for r in ratio))


def test_criterion_7_reproducibility(capsys, runs, periodic_navier):
    _, first, _ = periodic_navier
    again = runs / "rerun"
    code = dispatch(["study", "navier", "--manifest", str(first / "manifest.json"), "--out", str(again)])
    a = list(csv.DictReader(open(first / "cells.csv", newline="")))
    b = list(csv.DictReader(open(again / "cells.csv", newline="")))
    worst = 0.0
    same = len(a) == len(b)
    for ra, rb in zip(a, b):
        for k in ra:
            if k == "status" or ra[k] == "" or rb[k] == "":
                same &= ra[k] == rb[k]
            else:
                worst = max(worst, abs(float(ra[k]) - float(rb[k])))
    ok = code == 0 and same and worst <= 1e-12
    _report(capsys, 7, ok, f"{len(b)} cells, max entry difference {worst:.1e} (<= 1e-12)")
