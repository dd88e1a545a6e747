"""Monte-Carlo eps-sweeps of the wall-law errors, rate fits and persistence.

Error norms are windowed quadratic norms over the periodic computational
window [-R, R] (b2-sup with the window half-width R): e = sqrt((1/R) int |f|^2).
Each (eps, seed) cell is independent; studies are grouped by seed so the
cell problems of a realization are solved once and reused for every eps.
"""

import csv
import json
import logging
import math
import platform
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .boundary_layer import BLSettings, ensemble_alpha, map_jobs, solve_bl, worker_count
from .config import get_float, get_float_list, get_int, load_kv, parse_seeds
from .errors import ConfigurationError, ResolutionError, RoughWallError
from .fem import line_quadrature
from .geometry import build_channel_mesh
from .roughness import RoughnessSpec, sample_boundary
from .stokes import PhysicalParams, solve_navier_stokes
from .walllaw import assemble_u_app, build_bundle, poiseuille

log = logging.getLogger(__name__)

CELL_COLUMNS = ("epsilon", "seed", "e_D", "e_D_grad", "e_trace", "e_app_grad", "e_app_l2",
                "e_N", "budget", "status")
ERROR_COLUMNS = ("e_D", "e_D_grad", "e_trace", "e_app_grad", "e_app_l2", "e_N")
STUDIES = ("dirichlet", "navier", "ergodicity")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class StudyConfig:
    roughness: RoughnessSpec
    eps: list
    seeds: list
    nu: float = 1.0
    phi: float = 0.1
    R_over_eps: float = 0.5
    h_over_eps: float = 0.125
    bl_L: float = 8.0
    plateau_tol: float = 1e-3
    norm: str = "b2-sup"
    disc_check: bool = True
    R_bl_ladder: list = field(default_factory=lambda: [4.0, 16.0])
    delta: float = 0.0
    workers: int = 1
    roughness_path: str = None

    def __post_init__(self):
        self.eps = [float(e) for e in self.eps]
        self.seeds = [int(s) for s in self.seeds]
        if not self.eps:
            raise ConfigurationError("eps list is empty")
        if any(not 0 < e < 1 for e in self.eps):
            raise ConfigurationError("every eps must lie in (0, 1)")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ConfigurationError("eps list must be strictly decreasing")
        if not 0 < self.h_over_eps <= 0.25:
            raise ResolutionError(f"h_over_eps = {self.h_over_eps} must lie in (0, 1/4]", required_h=0.25)
        if not self.R_over_eps > 0 or not self.phi > 0 or not self.nu > 0:
            raise ConfigurationError("R_over_eps, flux_phi and nu must be positive")
        if self.norm != "b2-sup":
            raise ConfigurationError(f"unsupported study norm {self.norm!r} (only b2-sup)")
        if not self.seeds:
            raise ConfigurationError("seed list is empty")

    @property
    def cap_height(self):
        """Cell cap height; at least 1/eps_min so the lifts use the true cell field."""
        return max(self.bl_L, 1.0 / min(self.eps))

    def bl_settings(self):
        return BLSettings(R_bl=self.R_over_eps, L=self.cap_height, target_h=self.h_over_eps,
                          plateau_tol=self.plateau_tol)

    def params(self, eps=None):
        return PhysicalParams(nu=self.nu, flux=self.phi, epsilon=eps)

    def to_kv(self):
        """Flat key-value echo that reproduces the configuration exactly."""
        out = {"roughness_kind": self.roughness.kind, "roughness_modes": self.roughness.mode_count,
               "roughness_amplitude": self.roughness.amplitude, "roughness_delta": self.roughness.delta,
               "roughness_K": self.roughness.K, "roughness_period": self.roughness.period,
               "eps": list(self.eps), "seeds": ",".join(str(s) for s in self.seeds),
               "nu": self.nu, "flux_phi": self.phi, "R_over_eps": self.R_over_eps,
               "target_h_over_eps": self.h_over_eps, "bl_cap_L": self.bl_L,
               "plateau_tol": self.plateau_tol, "norm": self.norm,
               "disc_check": "yes" if self.disc_check else "no",
               "R_bl_ladder": list(self.R_bl_ladder), "delta": self.delta, "workers": self.workers}
        return out


def _bool(cfg, key, default):
    if key not in cfg:
        return default
    v = str(cfg[key]).strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ConfigurationError(f"key {key!r}: expected yes/no, got {cfg[key]!r}")


def config_from_mapping(cfg, base_dir=None):
    if "roughness" in cfg:
        path = Path(cfg["roughness"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        spec = RoughnessSpec.from_file(path)
        rpath = str(path)
    else:
        sub = {k[len("roughness_"):]: v for k, v in cfg.items() if k.startswith("roughness_")}
        spec = RoughnessSpec.from_mapping(sub)
        rpath = None
    known = {"roughness", "eps", "seeds", "nu", "flux_phi", "R_over_eps", "target_h_over_eps",
             "bl_cap_L", "plateau_tol", "norm", "disc_check", "R_bl_ladder", "delta", "workers"}
    unknown = [k for k in cfg if k not in known and not k.startswith("roughness_")]
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    return StudyConfig(
        roughness=spec,
        eps=get_float_list(cfg, "eps", [0.1, 0.05, 0.025, 0.0125]),
        seeds=parse_seeds(cfg.get("seeds", "1")),
        nu=get_float(cfg, "nu", 1.0),
        phi=get_float(cfg, "flux_phi", 0.1),
        R_over_eps=get_float(cfg, "R_over_eps", 0.5),
        h_over_eps=get_float(cfg, "target_h_over_eps", 0.125),
        bl_L=get_float(cfg, "bl_cap_L", 8.0),
        plateau_tol=get_float(cfg, "plateau_tol", 1e-3),
        norm=str(cfg.get("norm", "b2-sup")).strip(),
        disc_check=_bool(cfg, "disc_check", True),
        R_bl_ladder=get_float_list(cfg, "R_bl_ladder", [4.0, 16.0]),
        delta=get_float(cfg, "delta", 0.0),
        workers=get_int(cfg, "workers", worker_count()),
        roughness_path=rpath,
    )


def load_config(path):
    cfg = load_kv(path)
    return config_from_mapping(cfg, base_dir=Path(path).parent), cfg


# ---------------------------------------------------------------------------
# error evaluation
# ---------------------------------------------------------------------------

def _window_value(density_w, R):
    """b2-sup value (1/R) int over the window; the window is exactly one period of width 2R."""
    return float(np.sum(density_w)) / R


def _core_cells(mesh):
    cy = mesh.tri_xy[:, :, 1].mean(axis=1)
    return (cy > 0) & (cy < 1)


def dirichlet_errors(field_, eps, phi, R):
    """e_D over the core, e_D_grad over the whole rough channel, e_trace on both interfaces."""
    V = field_.space
    mesh = field_.mesh
    xy, wa = V.quad_points()
    u0 = poiseuille(phi)
    core = _core_cells(mesh)
    u = np.stack([V.values_at_quad(field_.u[0]), V.values_at_quad(field_.u[1])], axis=-1)
    g = np.stack([V.grads_at_quad(field_.u[0]), V.grads_at_quad(field_.u[1])], axis=-2)
    ref = u0(xy.reshape(-1, 2)).reshape(u.shape)
    gref = u0.grad(xy.reshape(-1, 2)).reshape(g.shape) * core[:, None, None, None]
    d2 = np.sum((u - ref) ** 2, axis=-1)
    g2 = np.sum((g - gref) ** 2, axis=(-1, -2))
    e_D = math.sqrt(_window_value((wa * d2)[core], R))
    e_G = math.sqrt(_window_value(wa * g2, R))
    tr = 0.0
    for h in (0.0, 1.0):
        tri, bary, w, _ = line_quadrature(mesh, "horizontal", h * (1 - 1e-15) if h else 0.0)
        uv = V.evaluate(field_.u, tri, bary)
        tr += float(w @ np.sum(uv ** 2, axis=0))
    e_T = math.sqrt(tr / R)
    return {"e_D": e_D, "e_D_grad": e_G, "e_trace": e_T}


def navier_errors(field_, bundle, R, with_app=True):
    """e_N against the Navier-slip profile on the core, e_app against the corrector expansion."""
    V = field_.space
    mesh = field_.mesh
    xy, wa = V.quad_points()
    pts = xy.reshape(-1, 2)
    core = _core_cells(mesh)
    u = np.stack([V.values_at_quad(field_.u[0]), V.values_at_quad(field_.u[1])], axis=-1)
    g = np.stack([V.grads_at_quad(field_.u[0]), V.grads_at_quad(field_.u[1])], axis=-2)
    v = bundle.navier(pts).reshape(u.shape)
    e_N = math.sqrt(_window_value((wa * np.sum((u - v) ** 2, axis=-1))[core], R))
    if not with_app:
        return {"e_N": e_N}
    app = assemble_u_app(bundle)
    ua = app(pts).reshape(u.shape)
    ga = app.grad(pts).reshape(g.shape)
    e_l2 = math.sqrt(_window_value(wa * np.sum((u - ua) ** 2, axis=-1), R))
    e_gr = math.sqrt(_window_value(wa * np.sum((g - ga) ** 2, axis=(-1, -2)), R))
    return {"e_N": e_N, "e_app_l2": e_l2, "e_app_grad": e_gr}


def _budget(field_, bundle, eps, phi):
    """Absolute error budget: solver residuals plus cell plateau residuals plus quadrature."""
    r = field_.residuals
    b = r["divergence"] + r["momentum"] * 6 * phi + r.get("flux", 0.0) + 1e-12
    if bundle is not None:
        b += eps * bundle.diagnostics["plateau_residual"]
    return float(b)


def _solve_channel(cfg, b, eps, h):
    mesh = build_channel_mesh(b, eps, cfg.R_over_eps * eps, h)
    return solve_navier_stokes(mesh, cfg.params(eps))


# assumed convergence orders for turning coarse/fine differences into estimates
_ORDER = {"e_D": 2, "e_trace": 2, "e_N": 2, "e_app_l2": 2, "e_D_grad": 1, "e_app_grad": 1}


def _errors(cfg, b, eps, h, bls):
    R = cfg.R_over_eps * eps
    field_ = _solve_channel(cfg, b, eps, h)
    row = dirichlet_errors(field_, eps, cfg.phi, R)
    bundle = None
    if bls is not None:
        bundle = build_bundle(bls[0], bls[1], eps)
        row.update(navier_errors(field_, bundle, R))
    return field_, bundle, row


def evaluate_cell(cfg, b, eps, bls=None, bls_coarse=None):
    """All error columns for one (eps, realization); bls = (lower, upper) cell solutions.

    With ``cfg.disc_check`` the cell is repeated at twice the mesh size (cell
    problems too, passed as ``bls_coarse``) and |e(h) - e(2h)| / (2^p - 1)
    is stored as the discretization estimate of each column.
    """
    h = cfg.h_over_eps * eps
    field_, bundle, row = _errors(cfg, b, eps, h, bls)
    row["budget"] = _budget(field_, bundle, eps, cfg.phi)
    extra = {"residuals": field_.residuals, "picard": list(field_.history),
             "warnings": list(field_.warnings), "n_velocity_dofs": 2 * field_.space.n}
    if bundle is not None:
        extra.update({"alpha_l": bundle.alpha_l, "alpha_u": bundle.alpha_u, "theta": bundle.theta,
                      "theta_spread": bundle.diagnostics["theta_spread"]})
    extra["discretization"] = None
    if cfg.disc_check and 2 * h <= eps / 4 * (1 + 1e-9) and (bls is None or bls_coarse is not None):
        _, _, c = _errors(cfg, b, eps, 2 * h, bls_coarse)
        extra["discretization"] = {k: abs(row[k] - c[k]) / (2 ** _ORDER[k] - 1) for k in c}
    return row, extra


def _seed_cells(args):
    cfg, seed, with_bl = args
    out = []
    try:
        b = sample_boundary(cfg.roughness, seed)
        bls = bls_c = None
        if with_bl:
            s = cfg.bl_settings()
            bls = (solve_bl(b, "lower", cfg.params(), s), solve_bl(b, "upper", cfg.params(), s))
            if cfg.disc_check and 2 * cfg.h_over_eps <= 0.25 * (1 + 1e-9):
                sc = replace(s, target_h=2 * s.target_h, cap_check=False)
                bls_c = (solve_bl(b, "lower", cfg.params(), sc), solve_bl(b, "upper", cfg.params(), sc))
    except RoughWallError as exc:
        msg = f"{type(exc).__name__}: {exc}"
        return [({"epsilon": e, "seed": seed, "status": f"failed: {msg}"}, {}) for e in cfg.eps]
    for e in cfg.eps:
        try:
            row, extra = evaluate_cell(cfg, b, e, bls, bls_c)
            row.update({"epsilon": e, "seed": seed, "status": "ok"})
        except RoughWallError as exc:
            row, extra = {"epsilon": e, "seed": seed,
                          "status": f"failed: {type(exc).__name__}: {exc}"}, {}
        out.append((row, extra))
    return out


# ---------------------------------------------------------------------------
# rates and aggregation
# ---------------------------------------------------------------------------

@dataclass
class RateFit:
    slope: float
    intercept: float
    residual: float
    n: int
    excluded: list = field(default_factory=list)


def fit_rate(eps, errors, exclude=None):
    """Least squares of log(error) against log(eps); nonpositive errors are excluded."""
    eps = np.asarray(eps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = np.isfinite(errors) & (errors > 0) & np.isfinite(eps) & (eps > 0)
    notes = [f"eps={e:g}: nonpositive or missing error" for e, k in zip(eps, keep) if not k]
    if exclude is not None:
        ex = np.asarray(exclude, dtype=bool)
        notes += [f"eps={e:g}: error budget or discretization estimate above 10%"
                  for e, k, x in zip(eps, keep, ex) if k and x]
        keep &= ~ex
    if keep.sum() < 3:
        raise ConfigurationError(f"rate fit needs at least 3 usable points, got {int(keep.sum())}")
    x, y = np.log(eps[keep]), np.log(errors[keep])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return RateFit(float(coef[0]), float(coef[1]), res, int(keep.sum()), notes)


@dataclass
class StudyResult:
    kind: str
    config: StudyConfig
    rows: list
    extras: list
    means: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    valid: bool = True
    metadata: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    def ok_rows(self):
        return [r for r in self.rows if r.get("status") == "ok"]


def _aggregate(res, columns):
    cfg = res.config
    rows = res.ok_rows()
    n_fail = len(res.rows) - len(rows)
    res.valid = n_fail <= 0.25 * max(len(res.rows), 1)
    for col in columns:
        m, s = [], []
        for e in cfg.eps:
            vals = [r[col] for r in rows if r["epsilon"] == e and col in r]
            vals = np.array(vals, dtype=float)
            m.append(math.fsum(vals) / vals.size if vals.size else float("nan"))
            s.append(float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else float("nan"))
        res.means[col] = m
        res.stderr[col] = s
        # exclusion: budget or discretization estimate above 10% of the error
        excl = []
        for k, e in enumerate(cfg.eps):
            bad = False
            for r, x in zip(res.rows, res.extras):
                if r.get("status") != "ok" or r["epsilon"] != e:
                    continue
                if r["budget"] > 0.1 * r[col]:
                    bad = True
                d = x.get("discretization")
                if d and col in d and d[col] > 0.1 * r[col]:
                    bad = True
            excl.append(bad)
        try:
            fit = fit_rate(cfg.eps, m, excl)
            res.slopes[col] = asdict(fit)
        except ConfigurationError as exc:
            res.slopes[col] = {"slope": None, "error": str(exc), "excluded": excl}
    res.metadata = {"version": __version__, "python": platform.python_version(),
                    "numpy": np.__version__, "scipy": scipy.__version__,
                    "seeds": list(cfg.seeds), "eps": list(cfg.eps), "norm": "b2-sup(R)",
                    "failures": n_fail, "cells": len(res.rows)}


def _run_cells(cfg, with_bl, workers=None):
    workers = cfg.workers if workers is None else workers
    chunks = map_jobs(_seed_cells, [(cfg, s, with_bl) for s in cfg.seeds], workers)
    rows, extras = [], []
    for chunk in chunks:
        for row, extra in chunk:
            for c in CELL_COLUMNS:
                row.setdefault(c, float("nan"))
            rows.append(row)
            extras.append(extra)
    order = sorted(range(len(rows)), key=lambda k: (-rows[k]["epsilon"], rows[k]["seed"]))
    return [rows[k] for k in order], [extras[k] for k in order]


def run_dirichlet_study(cfg, workers=None):
    rows, extras = _run_cells(cfg, False, workers)
    res = StudyResult("dirichlet", cfg, rows, extras)
    _aggregate(res, ("e_D", "e_D_grad", "e_trace"))
    return res


def run_navier_study(cfg, workers=None):
    rows, extras = _run_cells(cfg, True, workers)
    res = StudyResult("navier", cfg, rows, extras)
    _aggregate(res, ERROR_COLUMNS)
    violations = [(r["epsilon"], r["seed"]) for r in res.ok_rows()
                  if r["epsilon"] <= 0.05 + 1e-12 and not r["e_N"] < r["e_D"]]
    ratio = [n / d if d else float("nan") for n, d in zip(res.means["e_N"], res.means["e_D"])]
    res.checks = {
        "ordering_e_N_below_e_D": not violations, "ordering_violations": violations,
        "ratio_e_N_over_e_D": ratio,
        "ratio_strictly_decreasing": bool(all(b < a for a, b in zip(ratio, ratio[1:]))),
    }
    if cfg.delta > 0:
        res.checks["tchebychev"] = _tchebychev(res)
    return res


def _tchebychev(res):
    """Fraction of seeds with e_N^2 > delta eps^2 at each eps; should decrease as eps -> 0."""
    cfg = res.config
    frac = []
    for e in cfg.eps:
        vals = [r["e_N"] for r in res.ok_rows() if r["epsilon"] == e]
        frac.append(float(np.mean([v * v > cfg.delta * e * e for v in vals])) if vals else float("nan"))
    return {"delta": cfg.delta, "fraction": frac,
            "nonincreasing": bool(all(b <= a for a, b in zip(frac, frac[1:])))}


def ergodicity_study(cfg, workers=None):
    """Across-seed spread of the slip coefficients on a ladder of cell widths."""
    table = []
    for R_bl in cfg.R_bl_ladder:
        s = replace(cfg.bl_settings(), R_bl=float(R_bl), L=cfg.bl_L)
        ens = ensemble_alpha(cfg.roughness, "both", cfg.params(), cfg.seeds, s,
                             cfg.workers if workers is None else workers)
        plateau = float(np.nanmax(np.concatenate([ens.plateau_l, ens.plateau_u])))
        table.append({"R_bl": float(R_bl), "std_l": ens.std("lower"), "std_u": ens.std("upper"),
                      "spread_l": ens.spread("lower"), "spread_u": ens.spread("upper"),
                      "mean_l": ens.mean_l, "mean_u": ens.mean_u, "max_plateau_residual": plateau,
                      "failures": {str(k): v for k, v in ens.failures.items()}})
    res = StudyResult("ergodicity", cfg, [], [])
    res.tables["alpha_spread"] = table
    std = [max(t["std_l"], t["std_u"]) for t in table]
    res.checks = {"spread_nonincreasing": bool(all(b <= a * (1 + 1e-9) + 1e-14 for a, b in zip(std, std[1:]))),
                  "std": std}
    res.valid = all(not t["failures"] for t in table)
    res.metadata = {"version": __version__, "seeds": list(cfg.seeds), "R_bl_ladder": list(cfg.R_bl_ladder)}
    return res


RUNNERS = {"dirichlet": run_dirichlet_study, "navier": run_navier_study, "ergodicity": ergodicity_study}


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _fmt(v):
    if isinstance(v, float):
        return "" if not math.isfinite(v) else repr(v)
    return str(v)


def write_study(res, out):
    """cells.csv, cells/*.json, summary.json and plotdata/*.csv under ``out``; returns the file list."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if res.kind != "ergodicity":
        path = out / "cells.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CELL_COLUMNS)
            for r in res.rows:
                w.writerow([_fmt(r.get(c, float("nan"))) for c in CELL_COLUMNS])
        files.append(path)
        cdir = out / "cells"
        cdir.mkdir(exist_ok=True)
        for r, x in zip(res.rows, res.extras):
            p = cdir / f"eps{r['epsilon']:.6g}_seed{r['seed']}.json"
            p.write_text(json.dumps(_jsonable({"row": r, "extra": x}), indent=1, sort_keys=True))
            files.append(p)
        pdir = out / "plotdata"
        pdir.mkdir(exist_ok=True)
        for col, means in res.means.items():
            p = pdir / f"{col}.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["epsilon", "mean", "stderr", "log_epsilon", "log_mean"])
                for e, m, s in zip(res.config.eps, means, res.stderr[col]):
                    lm = math.log(m) if m > 0 else float("nan")
                    w.writerow([_fmt(e), _fmt(m), _fmt(s), _fmt(math.log(e)), _fmt(lm)])
            files.append(p)
    else:
        pdir = out / "plotdata"
        pdir.mkdir(exist_ok=True)
        p = pdir / "alpha_spread.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["R_bl", "std_l", "std_u", "spread_l", "spread_u", "max_plateau_residual"])
            for t in res.tables["alpha_spread"]:
                w.writerow([_fmt(t[k]) for k in ("R_bl", "std_l", "std_u", "spread_l", "spread_u",
                                                 "max_plateau_residual")])
        files.append(p)
    summary = {"kind": res.kind, "valid": res.valid, "means": res.means, "stderr": res.stderr,
               "slopes": res.slopes, "checks": res.checks, "tables": res.tables,
               "metadata": res.metadata, "config": res.config.to_kv()}
    p = out / "summary.json"
    p.write_text(json.dumps(_jsonable(summary), indent=1, sort_keys=True))
    files.append(p)
    return files


def read_cells(path):
    """cells.csv back into a list of dicts (floats where possible)."""
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            row = {}
            for k, v in r.items():
                if k == "status":
                    row[k] = v
                elif k == "seed":
                    row[k] = int(v)
                else:
                    row[k] = float(v) if v != "" else float("nan")
            rows.append(row)
    return rows
