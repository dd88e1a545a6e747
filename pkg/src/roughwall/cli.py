"""Command-line entry point.

Exit codes: 0 success, 1 numerical failure, 2 configuration or usage error.
Every command that writes files confines them to its ``--out`` target and
records them in a run manifest that is written before compute starts and
finalized at exit.  Logs go to stderr as JSON lines (and to ``log.jsonl``
inside output directories).
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .boundary_layer import WORKERS_ENV, BLSettings, ensemble_alpha, solve_bl, worker_count
from .config import dump_kv, parse_kv, parse_seeds
from .errors import ConfigurationError, RoughWallError
from .geometry import build_channel_mesh, dump_mesh
from .harness import RUNNERS, config_from_mapping, load_config, write_study
from .potential import Trace, reconstruct, trace_from_bl
from .roughness import BoundaryPair, RoughnessSpec, sample_boundary
from .runlog import RunManifest, add_file_log, jsonable, remove_handler, setup_logging
from .stokes import PhysicalParams, solve_navier_stokes, solve_stokes
from .walllaw import assemble_u_app, build_bundle, navier_slip_solution, wall_residual

log = logging.getLogger("roughwall.cli")

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so dispatch owns the exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------

def _write_json(path, obj):
    Path(path).write_text(json.dumps(jsonable(obj), indent=1, sort_keys=True))
    return Path(path)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return Path(path)


def _read_csv(path, columns):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise ConfigurationError(f"{path}: missing columns {missing}")
        try:
            rows = [[float(r[c]) for c in columns] for r in reader]
        except ValueError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
    if not rows:
        raise ConfigurationError(f"{path}: no data rows")
    return np.array(rows)


def dump_field(field_, path, sign=1.0):
    """Node-value text dump: P2 velocity nodes, then per-triangle vertex pressures."""
    V = field_.space
    xy = V.node_xy
    with open(path, "w") as fh:
        fh.write(f"# roughwall field kind={field_.kind} lambda={field_.lam!r}\n")
        fh.write(f"velocity {V.n}\n")
        for k in range(V.n):
            fh.write(f"{k} {xy[k, 0]:.17g} {sign * xy[k, 1]:.17g} "
                     f"{field_.u[0, k]:.17g} {sign * field_.u[1, k]:.17g}\n")
        p = field_.p.reshape(-1, 3)
        fh.write(f"pressure {p.shape[0]}\n")
        for k, (a, b, c) in enumerate(p):
            fh.write(f"{k} {a:.17g} {b:.17g} {c:.17g}\n")
    return Path(path)


def _inside(out, name):
    """Resolve an auxiliary file name inside the output directory."""
    p = Path(name)
    if not p.is_absolute():
        p = Path(out) / p
    try:
        p.resolve().relative_to(Path(out).resolve())
    except ValueError:
        raise ConfigurationError(f"{name} lies outside the output directory {out}") from None
    return p


def _boundary(args):
    if getattr(args, "rough", None):
        path = Path(args.rough)
        if not path.is_file():
            raise ConfigurationError(f"roughness file not found: {path}")
        try:
            return BoundaryPair.from_json(path)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigurationError(f"{path}: not a roughness realization ({exc})") from None
    if getattr(args, "spec", None):
        return sample_boundary(RoughnessSpec.from_file(args.spec), args.seed)
    raise ConfigurationError("give either --rough <json> or --spec <file> with --seed")


def _bl_settings(args):
    return BLSettings(R_bl=args.R_bl, L=args.L, target_h=args.h, plateau_tol=args.plateau_tol)


def _bl_record(sol):
    d = sol.to_dict()
    return {"alpha": d["alpha"], "u_infty": d["u_infinity"], "plateau_residual": d["plateau_residual"],
            "cap_delta": d["cap_delta"], "plateau_height": d["plateau_height"], "side": sol.side,
            "diagnostics": d["diagnostics"], "residuals": d["residuals"], "settings": d["settings"]}


# ---------------------------------------------------------------------------
# commands; each returns (exit code, list of written files)
# ---------------------------------------------------------------------------

def cmd_sample_roughness(args, run):
    spec = RoughnessSpec.from_file(args.spec)
    run.config.update({"spec": spec.to_dict(), "seed": args.seed})
    run.seeds = [args.seed]
    with run.step("sample"):
        b = sample_boundary(spec, args.seed)
        b.to_json(args.out)
    return EXIT_OK, [Path(args.out)]


def cmd_solve_channel(args, run):
    out = Path(args.out)
    b = _boundary(args)
    run.seeds = [b.seed]
    files = []
    with run.step("mesh"):
        mesh = build_channel_mesh(b, args.eps, args.R, args.h)
        if args.dump_mesh:
            files.append(_inside(out, args.dump_mesh))
            dump_mesh(mesh, files[-1])
    params = PhysicalParams(nu=args.nu, flux=args.flux, epsilon=args.eps, phi0=args.phi0)
    with run.step("solve"):
        solver = solve_stokes if args.stokes_only else solve_navier_stokes
        field_ = solver(mesh, params)
    log.info("channel solved", extra={"lambda": field_.lam, "iterations": field_.iterations})
    files.append(dump_field(field_, out / "field.txt"))
    rep = field_.report()
    rep.update({"epsilon": args.eps, "flux": args.flux, "nu": args.nu, "R": args.R, "target_h": args.h,
                "n_triangles": mesh.n_triangles})
    files.append(_write_json(out / "residuals.json", rep))
    return EXIT_OK, files


def cmd_solve_bl(args, run):
    out = Path(args.out)
    b = _boundary(args)
    run.seeds = [b.seed]
    params = PhysicalParams(nu=args.nu, flux=args.flux)
    settings = _bl_settings(args)
    sides = ("lower", "upper") if args.side == "both" else (args.side,)
    files = []
    for side in sides:
        with run.step(f"solve-{side}"):
            sol = solve_bl(b, side, params, settings)
        if args.dump_mesh:
            name = Path(args.dump_mesh)
            files.append(_inside(out, name.with_name(f"{side}_{name.name}")))
            dump_mesh(sol.mesh, files[-1])
        files.append(_write_json(out / f"bl_{side}.json", _bl_record(sol)))
        tr = trace_from_bl(sol)        # lower orientation, ready for reconstruct
        files.append(_write_csv(out / f"trace_{side}.csv", ["y1", "u1", "u2"],
                                [(x, u[0], u[1]) for x, u in zip(tr.x, tr.u)]))
        files.append(_write_csv(out / f"profile_{side}.csv", ["height", "mean_u1", "mean_u2"],
                                [(h, a[0], a[1]) for h, a in zip(sol.heights, sol.profiles)]))
        files.append(dump_field(sol.field, out / f"field_{side}.txt", sign=sol.sign))
        log.info("cell solved", extra={"side": side, "alpha": _bl_record(sol)["alpha"],
                                       "plateau_residual": sol.plateau_residual})
    return EXIT_OK, files


def cmd_alpha(args, run):
    out = Path(args.out)
    spec = RoughnessSpec.from_file(args.spec)
    seeds = parse_seeds(args.seeds)
    run.seeds = seeds
    run.config["spec"] = spec.to_dict()
    params = PhysicalParams(nu=args.nu, flux=args.flux)
    with run.step("ensemble"):
        ens = ensemble_alpha(spec, args.side, params, seeds, _bl_settings(args), args.workers)
    files = []
    rows = []
    for k, (s, rec) in enumerate(zip(seeds, ens.records)):
        status = ens.failures.get(s, "ok")
        files.append(_write_json(out / f"seed_{s}.json", dict(rec, status=status)))
        rows.append((s, ens.alpha_l[k], ens.alpha_u[k], ens.plateau_l[k], ens.plateau_u[k],
                     ens.cap_l[k], ens.cap_u[k], status))
    files.append(_write_csv(out / "ensemble.csv", ["seed", "alpha_l", "alpha_u", "plateau_residual_l",
                                                   "plateau_residual_u", "cap_delta_l", "cap_delta_u",
                                                   "status"], rows))
    summ = ens.summary()
    summ.update({"spread_l": ens.spread("lower"), "spread_u": ens.spread("upper")})
    files.append(_write_json(out / "summary.json", summ))
    code = EXIT_NUMERICAL if len(ens.failures) == len(seeds) else EXIT_OK
    return code, files


def cmd_reconstruct(args, run):
    tr = _read_csv(args.trace, ["y1", "u1", "u2"])
    tg = _read_csv(args.targets, ["y1", "y2"])
    with run.step("reconstruct"):
        rec = reconstruct(Trace(tr[:, 0], tr[:, 1:]), tg, tol=args.tol, method=args.method)
    for w in rec.warnings:
        log.warning(w)
    rows = [(y[0], y[1], v[0], v[1], b[0], b[1]) for y, v, b in zip(rec.targets, rec.values, rec.budget)]
    _write_csv(args.out, ["y1", "y2", "u1", "u2", "budget_u1", "budget_u2"], rows)
    return EXIT_OK, [Path(args.out)]


def cmd_assemble_app(args, run):
    out = Path(args.out)
    b = _boundary(args)
    run.seeds = [b.seed]
    params = PhysicalParams(nu=args.nu, flux=args.flux)
    settings = _bl_settings(args)
    files = []
    with run.step("cells"):
        bls = [solve_bl(b, side, params, settings) for side in ("lower", "upper")]
    if args.dump_mesh:
        files.append(_inside(out, args.dump_mesh))
        dump_mesh(bls[0].mesh, files[-1])
    with run.step("bundle"):
        bundle = build_bundle(bls[0], bls[1], args.eps)
        app = assemble_u_app(bundle)
        x = [e * args.eps for e in bls[0].mesh.x0 + bls[0].mesh.period * (np.arange(4) + 0.3) / 4]
        fluxes = [app.section_flux(xi) for xi in x]
    rec = bundle.to_dict()
    rec["checks"] = {"section_fluxes": [[a, f] for a, f in zip(x, fluxes)],
                     "wall_residual": wall_residual(app)}
    files.append(_write_json(out / "bundle.json", rec))
    return EXIT_OK, files


def cmd_navier_solution(args, run):
    sol = navier_slip_solution(args.alpha_l, args.alpha_u, args.eps, args.flux)
    rec = sol.to_dict()
    rec["pressure_gradient"] = sol.pressure_gradient(args.nu)
    if args.out is None:
        print(json.dumps(jsonable(rec), indent=1, sort_keys=True))
        return EXIT_OK, []
    _write_json(args.out, rec)
    return EXIT_OK, [Path(args.out)]


def _study_config(args):
    if args.manifest:
        path = Path(args.manifest)
        if not path.is_file():
            raise ConfigurationError(f"manifest not found: {path}")
        m = RunManifest.read(path)
        if "study" not in m.config:
            raise ConfigurationError(f"{path}: manifest does not describe a study run")
        raw = parse_kv(dump_kv(m.config["study"]), source=str(path))
        return config_from_mapping(raw), m.config.get("kind")
    cfg, _ = load_config(args.config)
    return cfg, None


def cmd_study(args, run):
    out = Path(args.out)
    cfg, kind = _study_config(args)
    if kind is not None and kind != args.kind:
        raise ConfigurationError(f"manifest describes a {kind} study, not {args.kind}")
    if args.workers is not None:
        cfg.workers = args.workers
    run.config.update({"kind": args.kind, "study": cfg.to_kv()})
    run.seeds = list(cfg.seeds)
    resolved = out / "config.resolved.cfg"
    resolved.write_text(dump_kv(cfg.to_kv()))
    run.write()
    with run.step(f"study-{args.kind}"):
        res = RUNNERS[args.kind](cfg)
    files = [resolved] + write_study(res, out)
    for name, value in res.checks.items():
        if isinstance(value, bool) and not value:
            log.warning("study check failed", extra={"check": name})
    failed = [r for r in res.rows if r.get("status") != "ok"]
    for r in failed:
        log.error("cell failed", extra={"epsilon": r["epsilon"], "seed": r["seed"], "status": r["status"]})
    if not res.valid:
        log.error("study invalid: too many failed cells or seeds")
        return EXIT_NUMERICAL, files
    return EXIT_OK, files


def _fmt_num(v):
    return "-" if v is None else f"{v:.4g}" if isinstance(v, float) else str(v)


def cmd_report(args, run):
    src = Path(args.run) / "summary.json"
    if not src.is_file():
        raise ConfigurationError(f"no summary.json in {args.run}")
    s = json.loads(src.read_text())
    lines = [f"study: {s['kind']}  valid: {s['valid']}"]
    eps = s["metadata"].get("eps", [])
    if s.get("means"):
        cols = list(s["means"])
        lines.append("epsilon    " + " ".join(f"{c:>11}" for c in cols))
        for k, e in enumerate(eps):
            lines.append(f"{e:<10.4g} " + " ".join(f"{_fmt_num(s['means'][c][k]):>11}" for c in cols))
        lines.append("slopes     " + " ".join(f"{_fmt_num(s['slopes'][c].get('slope')):>11}" for c in cols))
    for t in s.get("tables", {}).get("alpha_spread", []):
        lines.append(f"R_bl={t['R_bl']:g} std_l={_fmt_num(t['std_l'])} std_u={_fmt_num(t['std_u'])} "
                     f"mean_l={_fmt_num(t['mean_l'])} mean_u={_fmt_num(t['mean_u'])}")
    for name, value in s.get("checks", {}).items():
        lines.append(f"check {name}: {value}")
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
        return EXIT_OK, []
    Path(args.out).write_text(text)
    return EXIT_OK, [Path(args.out)]


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _positive(v):
    try:
        x = float(v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {v!r}") from None
    if not x > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {v!r}")
    return x


def _add_rough(p, seed=True):
    p.add_argument("--rough", help="roughness realization JSON (from sample-roughness)")
    p.add_argument("--spec", help="roughness spec file (sampled with --seed)")
    if seed:
        p.add_argument("--seed", type=int, default=0)


def _add_bl(p):
    p.add_argument("--R-bl", dest="R_bl", type=_positive, default=8.0, help="cell half-width")
    p.add_argument("--L", type=_positive, default=8.0, help="cell cap height")
    p.add_argument("--h", type=_positive, default=0.125, help="target mesh size (cell units)")
    p.add_argument("--plateau-tol", type=_positive, default=1e-3)
    p.add_argument("--flux", type=_positive, default=0.1, help="channel flux phi")
    p.add_argument("--nu", type=_positive, default=1.0)


def build_parser():
    p = _Parser(prog="roughwall", description="Viscous flow over random rough walls.")
    p.add_argument("--version", action="version", version=f"roughwall {__version__}")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("sample-roughness", help="draw one roughness realization")
    s.add_argument("--spec", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True, help="output JSON path")

    s = sub.add_parser("solve-channel", help="Navier-Stokes (or Stokes) solve in the rough channel")
    _add_rough(s)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--flux", type=_positive, required=True)
    s.add_argument("--nu", type=_positive, default=1.0)
    s.add_argument("--R", type=_positive, required=True, help="window half-width")
    s.add_argument("--h", type=_positive, required=True, help="target mesh size")
    s.add_argument("--phi0", type=_positive, default=0.5, help="small-data flux threshold")
    s.add_argument("--stokes-only", action="store_true")
    s.add_argument("--dump-mesh")
    s.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("solve-bl", help="boundary-layer cell problem(s) of one realization")
    _add_rough(s)
    s.add_argument("--side", choices=["lower", "upper", "both"], default="both")
    _add_bl(s)
    s.add_argument("--dump-mesh")
    s.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("alpha", help="slip coefficients over a seed range")
    s.add_argument("--spec", required=True)
    s.add_argument("--seeds", required=True, help="a..b or a comma list")
    s.add_argument("--side", choices=["lower", "upper", "both"], default="both")
    _add_bl(s)
    s.add_argument("--workers", type=int, default=None, help=f"overrides {WORKERS_ENV}")
    s.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("reconstruct", help="double-layer reconstruction from a trace")
    s.add_argument("--trace", required=True, help="CSV with columns y1,u1,u2 on a uniform grid")
    s.add_argument("--targets", required=True, help="CSV with columns y1,y2")
    s.add_argument("--tol", type=_positive, default=1e-8)
    s.add_argument("--method", choices=["periodic", "truncated"], default="periodic")
    s.add_argument("--out", required=True, help="output CSV path")

    s = sub.add_parser("assemble-app", help="corrector expansion coefficients for one realization")
    _add_rough(s)
    s.add_argument("--eps", type=float, required=True)
    _add_bl(s)
    s.add_argument("--dump-mesh")
    s.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("navier-solution", help="closed-form Navier-slip channel profile")
    s.add_argument("--alpha-l", type=float, required=True)
    s.add_argument("--alpha-u", type=float, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--flux", type=float, required=True)
    s.add_argument("--nu", type=_positive, default=1.0)
    s.add_argument("--out", help="output JSON path (stdout when omitted)")

    s = sub.add_parser("study", help="eps-sweep error study")
    s.add_argument("kind", choices=sorted(RUNNERS))
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--config", help="flat key-value study config")
    g.add_argument("--manifest", help="re-run from a previous run manifest")
    s.add_argument("--workers", type=int, default=None, help=f"overrides {WORKERS_ENV}")
    s.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("report", help="print the summary of a study directory")
    s.add_argument("--run", required=True, help="study output directory")
    s.add_argument("--out", help="write the report here instead of stdout")
    return p


COMMANDS = {"sample-roughness": cmd_sample_roughness, "solve-channel": cmd_solve_channel,
            "solve-bl": cmd_solve_bl, "alpha": cmd_alpha, "reconstruct": cmd_reconstruct,
            "assemble-app": cmd_assemble_app, "navier-solution": cmd_navier_solution,
            "study": cmd_study, "report": cmd_report}

# commands whose --out is a directory (the others write a single file)
_DIR_OUT = {"solve-channel", "solve-bl", "alpha", "assemble-app", "study"}


def _resolved_args(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("log_level",)}


def dispatch(argv=None):
    """Run one command; returns the exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(str(exc) + "\n")
        return EXIT_CONFIG
    except SystemExit as exc:          # --help / --version
        return int(exc.code or 0)
    setup_logging(args.log_level)
    try:
        workers_env = worker_count()
    except ConfigurationError as exc:
        log.error(str(exc), extra={"error": type(exc).__name__})
        return EXIT_CONFIG
    out = getattr(args, "out", None)
    run = RunManifest(command=args.command, argv=argv, config={"args": _resolved_args(args)})
    run.config["workers_env"] = workers_env
    fh = None
    root = None
    if out is not None:
        out = Path(out)
        if args.command in _DIR_OUT:
            out.mkdir(parents=True, exist_ok=True)
            root = out
            run.path = out / "manifest.json"
            fh = add_file_log(out / "log.jsonl")
        else:
            out.parent.mkdir(parents=True, exist_ok=True)
            root = out.parent
            run.path = out.with_name(out.name + ".manifest.json")
        run.write()
    files = []
    try:
        code, files = COMMANDS[args.command](args, run)
    except ConfigurationError as exc:
        log.error(str(exc), extra={"error": type(exc).__name__})
        code = EXIT_CONFIG
    except RoughWallError as exc:
        log.error(str(exc), extra={"error": type(exc).__name__})
        code = EXIT_NUMERICAL
    except OSError as exc:
        log.error(str(exc), extra={"error": type(exc).__name__})
        code = EXIT_CONFIG
    if run.path is not None:
        extra = [fh.baseFilename] if fh is not None else []
        if fh is not None:
            remove_handler(fh)
        run.finalize(code, list(files) + extra, root)
    log.info("done", extra={"command": args.command, "exit_code": code})
    return code


def main(argv=None):
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
