"""Command-line entry point.

Exit status: 0 success, 1 usage or input error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from .analysis import biaxiality_field, boundary_layer_width, find_vortices, gamma_study, stability_report
from .energy2d import F0Problem, PField, QField2D, reduced_energy
from .energy3d import NonCoerciveError, QField3D, minimize_eps, z_variation
from .io import ConfigError, FieldFormatError, RunConfig, load_config, read_field, write_field, write_table
from .mesh import extrude
from .minimizer import initial_pfield, minimize_f0_full, minimize_reduced
from .optim import NumericalFailure
from .surface import NoWitnessFound, Regime, SurfaceCoefficients, classify_regime, eval_bare, verify_unbounded
from .tensor import EZ

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    def __init__(self, message: str, usage_shown: bool = False):
        super().__init__(message)
        self.usage_shown = usage_shown


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}", usage_shown=True)


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dumps(obj))


def _load(path) -> RunConfig:
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cfg = load_config(path)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return cfg


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _history(path, history):
    write_table(path, ["iteration", "energy", "grad_norm"], [(str(i), e, g) for i, e, g in history])


# ---------------------------------------------------------------------------
# subcommands


def cmd_classify(args) -> int:
    c = SurfaceCoefficients(args.c1, args.c2, args.c3, args.c4)
    rep = classify_regime(c)
    out = rep.to_dict()
    if rep.variant is Regime.UNBOUNDED:
        try:
            w = verify_unbounded(c)
            out["witness"] = {"q": w.array.tolist(), "energy": eval_bare(w, EZ, c)}
        except NoWitnessFound as exc:
            out["witness"] = {"error": str(exc)}
    sys.stdout.write(_dumps(out))
    return EXIT_OK


def cmd_minimize2d(args) -> int:
    cfg = _load(args.config)
    out = _outdir(args.out)
    mesh = cfg.mesh()
    bd = cfg.boundary(mesh)
    solver = cfg.solver()
    mp = cfg.model()
    ec = cfg.elastic()
    report = {"config": cfg.values, "mesh": {"shape": mesh.shape, "nx": mesh.nx, "ny": mesh.ny}}
    if mp.anchoring.alpha0 > 0:
        spec = cfg.potential()
        field, rep = minimize_reduced(mesh, bd, spec, solver)
        write_field(os.path.join(out, "field.csv"), field)
        _history(os.path.join(out, "history.csv"), rep.history)
        report["solver"] = "reduced"
        report["potential"] = {"Ctilde": spec.Ctilde, "delta": spec.delta, "Dtilde": spec.Dtilde}
        report["result"] = rep.to_dict()
        report["reduced_energy"] = reduced_energy(field, spec)
        report["sup_p"] = float(field.magnitude.max())
        report["f0"] = F0Problem(mesh, ec, mp).breakdown(field.q()).to_dict()
    else:
        qf, br, rep = minimize_f0_full(mesh, bd, ec, mp, solver)
        field = qf.to_pfield(bd.beta, free_b=True)
        write_field(os.path.join(out, "field.csv"), field)
        _history(os.path.join(out, "history.csv"), rep.history)
        report["solver"] = "f0"
        report["result"] = rep.to_dict()
        report["f0"] = br.to_dict()
        report["sup_p"] = float(field.magnitude.max())
        report["sup_b_minus_beta"] = float(np.abs(field.b_values - bd.beta).max())
    _write_json(os.path.join(out, "report.json"), report)
    print(f"{report['solver']}: {report['result']['status']} after {report['result']['iterations']} iterations")
    return EXIT_OK


def cmd_minimize3d(args) -> int:
    cfg = _load(args.config)
    out = _outdir(args.out)
    mesh = cfg.mesh()
    bd = cfg.boundary(mesh)
    solver = cfg.solver()
    ec = cfg.elastic()
    mesh3 = extrude(mesh, cfg["grid.nz"])
    p0 = initial_pfield(mesh, bd, solver.seed)
    start = QField3D.extend(mesh3, PField(mesh, p0, bd.beta).q())
    rows = []
    for k, eps in enumerate(cfg["epsilon.list"]):
        mp = cfg.model(eps)
        f, br, rep = minimize_eps(start, ec, mp, solver)
        name = f"field_eps{k}.csv"
        write_field(os.path.join(out, name), f)
        _history(os.path.join(out, f"history_eps{k}.csv"), rep.history)
        rows.append(
            {"epsilon": eps, "field": name, "energy": br.to_dict(), "z_variation": z_variation(f), "result": rep.to_dict()}
        )
        print(f"epsilon={eps}: {rep.status} after {rep.iterations} iterations, F={br.total:.12g}")
    _write_json(os.path.join(out, "report.json"), {"config": cfg.values, "runs": rows})
    return EXIT_OK


def cmd_gamma_study(args) -> int:
    cfg = _load(args.config)
    out = _outdir(args.out)
    mesh = cfg.mesh()
    study = gamma_study(
        cfg["epsilon.list"], mesh, cfg["grid.nz"], cfg.boundary(mesh), cfg.elastic(), cfg.model(), cfg.solver()
    )
    d = study.to_dict()
    write_table(
        os.path.join(out, "study.csv"),
        ["epsilon", "energy", "initial_energy", "z_variation", "l2_distance", "iterations", "status"],
        [(r.epsilon, r.energy, r.initial_energy, r.z_variation, r.l2_distance, str(r.iterations), r.status) for r in study.rows],
    )
    _write_json(os.path.join(out, "report.json"), {"config": cfg.values, "study": d})
    for k, v in sorted(d["trends"].items()):
        print(f"{k}: {v}")
    return EXIT_OK


def cmd_stability(args) -> int:
    cfg = _load(args.config)
    deltas = cfg["stability.deltas"]
    if not deltas:
        raise UsageError("stability needs stability.deltas in the config")
    mesh = cfg.mesh()
    rows = stability_report(mesh, cfg["model.A"], cfg["model.B"], cfg["model.beta"], deltas, cfg.solver())
    sys.stdout.write(_dumps({"rows": [r.to_dict() for r in rows], "all_agree": all(r.agrees for r in rows)}))
    return EXIT_OK


def cmd_analyze(args) -> int:
    if not os.path.isfile(args.field):
        raise UsageError(f"field file not found: {args.field}")
    f = read_field(args.field, beta=args.beta)
    if isinstance(f, QField3D):
        raise UsageError("analyze expects a planar field")
    if isinstance(f, QField2D):
        if args.beta is None:
            raise UsageError("--beta is required for q-component fields")
        f = f.to_pfield(args.beta)
    mag = f.magnitude
    plateau = args.plateau if args.plateau is not None else float(mag.max())
    vort = find_vortices(f, plateau if plateau > 0 else None)
    width = None
    if plateau > 0:
        try:
            width = boundary_layer_width(f, plateau)
        except ValueError:
            width = None
    xi = biaxiality_field(f)
    out = {
        "n_vortices": len(vort),
        "total_winding": sum(v.winding for v in vort),
        "vortices": [v.to_dict() for v in vort],
        "sup_p": float(mag.max()),
        "plateau": plateau,
        "layer_width": width,
        "xi_min": float(xi.min()),
        "xi_max": float(xi.max()),
    }
    sys.stdout.write(_dumps(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nemfilm", description="Thin-film Q-tensor model: classification, minimisation, diagnostics.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    c = sub.add_parser("classify", help="classify surface coefficients c1..c4")
    for k in ("c1", "c2", "c3", "c4"):
        c.add_argument(f"--{k}", type=float, required=True)
    c.set_defaults(func=cmd_classify)

    for name, fn, text in (
        ("minimize2d", cmd_minimize2d, "minimise the planar limit problem"),
        ("minimize3d", cmd_minimize3d, "minimise the film energy for each epsilon"),
        ("gamma-study", cmd_gamma_study, "run the epsilon ladder against the limit"),
    ):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True)
        s.add_argument("--out", required=True)
        s.set_defaults(func=fn)

    s = sub.add_parser("stability", help="stability sweep over stability.deltas")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_stability)

    a = sub.add_parser("analyze", help="vortices, layer width and biaxiality of a planar field")
    a.add_argument("--field", required=True)
    a.add_argument("--beta", type=float, default=None)
    a.add_argument("--plateau", type=float, default=None)
    a.set_defaults(func=cmd_analyze)
    return p


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        if not exc.usage_shown:
            parser.print_usage(sys.stderr)
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, FieldFormatError, NonCoerciveError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
