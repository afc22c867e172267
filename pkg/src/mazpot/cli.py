"""Command line front end.

Commands: gen, metric, capacity, solve, perron, mc, run-example, render.
Every command writes a JSON report into the output directory (--out, or
$MAZPOT_OUT, or the working directory).  Exit codes: 0 success, 1 an
embedded assertion failed (the report is still written), 2 usage error.

A flat key = value config file (--config) supplies defaults for the
command's options; options given on the command line win.  For
run-example the keys are pipeline settings, and --set key=value overrides
them after the file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

EXIT_OK, EXIT_ASSERT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _pair(s):
    try:
        x, y = (float(t) for t in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y got {s!r}") from None
    return (x, y)


def _box(s):
    try:
        v = [float(t) for t in s.split(",")]
    except ValueError:
        v = []
    if len(v) != 4:
        raise argparse.ArgumentTypeError(f"expected x0,x1,y0,y1 got {s!r}")
    return tuple(v)


def _h(s):
    """Spacing as a float or 2^-k written '2^-k'."""
    s = s.strip()
    if s.startswith("2^"):
        return 2.0 ** float(s[2:])
    return float(s)


def _kv(s):
    if "=" not in s:
        raise argparse.ArgumentTypeError(f"expected key=value got {s!r}")
    k, v = s.split("=", 1)
    return k.strip(), v.strip()


def make_function(expr):
    """f(x, y) from an arithmetic expression in x and y (numpy names allowed)."""
    import numpy as np

    names = {k: getattr(np, k) for k in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "where", "minimum", "maximum", "pi", "hypot", "arctan2")}
    try:
        code = compile(expr, "<data>", "eval")
    except SyntaxError as exc:
        raise UsageError(f"bad expression {expr!r}: {exc.msg}") from None
    bad = set(code.co_names) - set(names) - {"x", "y"}
    if bad:
        raise UsageError(f"unknown names in expression: {', '.join(sorted(bad))}")

    def fn(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return np.asarray(eval(code, {"__builtins__": {}}, dict(names, x=x, y=y)), float) * np.ones_like(x)

    return fn


# report plumbing


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_report(out, name, command, config, results, t0, checks=None):
    from . import __version__

    rep = {
        "command": command,
        "config": config,
        "results": results,
        "wall_time": round(time.time() - t0, 3),
        "version": __version__,
    }
    if checks is not None:
        rep["checks"] = checks
        rep["passed"] = all(c["pass"] for c in checks)
    path = os.path.join(out, name)
    with open(path, "w") as fh:
        json.dump(_jsonable(rep), fh, indent=2)
    return path


def _domain(args):
    from .domain import DomainRecipe, gen_domain

    params = dict(getattr(args, "param", None) or [])
    from .domain import parse_value

    return gen_domain(DomainRecipe(args.recipe, {k: parse_value(v) for k, v in params.items()}), args.h)


def _solver_opts(args):
    from .solver import SolverOptions

    return SolverOptions(tol=args.tol, max_iter=args.max_iter)


# commands


def cmd_gen(args, t0):
    dom = _domain(args)
    base = os.path.join(args.out, args.recipe)
    with open(base + ".json", "w") as fh:
        fh.write(dom.to_json())
    dom.to_pgm(base + ".pgm")
    res = {"shape": list(dom.spec.shape), "open_cells": int(len(dom.open_cells)), "anchors": int(len(dom.anchors)), "info": dom.info}
    write_report(args.out, "gen_report.json", "gen", vars_of(args), res, t0)
    return EXIT_OK


def cmd_metric(args, t0):
    import numpy as np

    from .metric import inner_distance, mazurkiewicz_distance

    dom = _domain(args)
    a = dom.open_cell_near(*args.a)
    b = dom.open_cell_near(*args.b)
    din = inner_distance(dom, a, b)
    dm = mazurkiewicz_distance(dom, a, b)
    e = float(np.hypot(*(dom.spec.center(a) - dom.spec.center(b))))
    res = {
        "a": dom.spec.center(a),
        "b": dom.spec.center(b),
        "euclid": e,
        "d_in": din,
        "d_M": {"lo": dm.lo, "hi": dm.hi, "probes": dm.probes},
        "tolerance": {"d_M": "interval [lo, hi] brackets the grid value", "provenance": "estimate"},
    }
    write_report(args.out, "metric.json", "metric", vars_of(args), res, t0)
    return EXIT_OK


def _target(dom, args):
    from .capacity import TargetSet, anchors_where, cells_where

    interior = None
    anchors = []
    for x0, x1, y0, y1 in args.box or []:
        c = cells_where(dom, lambda x, y: (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1))
        interior = c if interior is None else interior | c
    for x0, x1, y0, y1 in args.boundary_box or []:
        anchors += list(anchors_where(dom, lambda x, y: (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)))
    return TargetSet(interior, sorted(set(int(a) for a in anchors)))


def cmd_capacity(args, t0):
    from .capacity import CapacityOptions, TAGS, compare_capacities, estimate_capacity

    dom = _domain(args)
    E = _target(dom, args)
    opts = CapacityOptions(tol=args.tol, max_iter=args.max_iter)
    if args.variant == "chain":
        rep = compare_capacities(dom, E, args.p, opts)
        res = rep.to_dict()
        checks = [{"name": k, "value": v, "threshold": True, "relation": "==", "provenance": "estimate", "pass": bool(v)} for k, v in rep.checks.items()]
        write_report(args.out, "capacity.json", "capacity", vars_of(args), res, t0, checks)
        return EXIT_OK if rep.passed else EXIT_ASSERT
    if args.variant not in TAGS:
        raise UsageError(f"unknown variant {args.variant!r}; choose from {', '.join(TAGS)} or chain")
    est = estimate_capacity(dom, E, args.p, args.variant, opts)
    res = est.to_dict()
    res["tolerance"] = {"rel_decrement": args.tol, "provenance": "estimate"}
    if est.minimizer is not None:
        est.minimizer.to_csv(os.path.join(args.out, "capacity_minimizer.csv"))
    write_report(args.out, "capacity.json", "capacity", vars_of(args), res, t0)
    return EXIT_OK


def cmd_solve(args, t0):
    from .field import ScalarField
    from .solver import DirichletProblem, ObstacleProblem, solve_dirichlet, solve_obstacle

    dom = _domain(args)
    f = make_function(args.data)
    prob = DirichletProblem(dom, args.p, f, _solver_opts(args))
    if args.obstacle:
        psi = ScalarField.from_function(dom, make_function(args.obstacle))
        u, rep = solve_obstacle(ObstacleProblem(prob, psi))
    else:
        u, rep = solve_dirichlet(prob)
    u.to_csv(os.path.join(args.out, "solution.csv"))
    res = rep.to_dict()
    res["tolerance"] = {"rel_decrement": args.tol, "provenance": "estimate"}
    write_report(args.out, "solve.json", "solve", vars_of(args), res, t0)
    return EXIT_OK if rep.converged else EXIT_ASSERT


def cmd_perron(args, t0):
    from .metric import build_maz_boundary
    from .perron import MazBoundaryData, perron_solve

    dom = _domain(args)
    maz = build_maz_boundary(dom)
    data = MazBoundaryData.from_function(dom, maz, make_function(args.data), side=args.side)
    r = perron_solve(dom, maz, data, args.p, _solver_opts(args))
    r.solution.to_csv(os.path.join(args.out, "perron.csv"))
    with open(os.path.join(args.out, "maz_boundary.json"), "w") as fh:
        fh.write(maz.to_json(dom))
    res = r.to_dict()
    res["tolerance"] = {"rel_decrement": args.tol, "provenance": "estimate"}
    write_report(args.out, "perron.json", "perron", vars_of(args), res, t0)
    return EXIT_OK if r.report.converged else EXIT_ASSERT


def cmd_mc(args, t0):
    from .mc_oracle import WalkConfig, harmonic_measure_mc

    dom = _domain(args)
    f = make_function(args.data)
    cfg = WalkConfig(args.walks, args.seed)
    maz = None
    data = f
    if args.side:
        from .metric import build_maz_boundary
        from .perron import MazBoundaryData

        maz = build_maz_boundary(dom)
        data = MazBoundaryData.from_function(dom, maz, f, side=True)
    est = harmonic_measure_mc(dom, dom.open_cell_near(*args.start), data, cfg, maz)
    res = est.to_dict()
    res["tolerance"] = {"stderr": est.stderr, "provenance": "estimate"}
    write_report(args.out, "mc.json", "mc", vars_of(args), res, t0)
    return EXIT_OK


def cmd_run_example(args, t0):
    from . import pipelines
    from .domain import GridDomain, parse_value
    from .errors import UnknownExample
    from .field import ScalarField

    if args.name not in pipelines.EXAMPLES:
        raise UnknownExample(args.name)
    over = dict(args.file_config)
    for k, v in args.set or []:
        over[k] = parse_value(v)
    for k in ("seed", "tol", "max_iter"):
        if getattr(args, k) is not None:
            over[k] = getattr(args, k)
    try:
        s = pipelines.settings(args.name, over)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    report, checks = pipelines.EXAMPLES[args.name][0](s)
    arts = report.pop("_artifacts", {})
    for fname, obj in arts.items():
        path = os.path.join(args.out, fname)
        if isinstance(obj, ScalarField):
            obj.to_csv(path)
        elif isinstance(obj, GridDomain):
            obj.to_pgm(path)
    write_report(args.out, f"{args.name}.json", "run-example", {"name": args.name, "settings": s}, report, t0, checks)
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: {c['value']} {c['relation']} {c['threshold']} ({c['provenance']})")
    return EXIT_OK if all(c["pass"] for c in checks) else EXIT_ASSERT


def render_field(csv_path, out_path, palette="gray", vrange=None):
    """Render a field CSV as PGM (P5) or PNG; cells absent from the CSV are black."""
    import numpy as np

    from .domain import write_pgm
    from .errors import BadInput
    from .field import read_field_csv

    i, j, _, _, v = read_field_csv(csv_path)
    if np.any(i < 0) or np.any(j < 0):
        raise BadInput("negative cell indices in field CSV")
    nx, ny = int(i.max()) + 2, int(j.max()) + 2
    lo, hi = (float(v.min()), float(v.max())) if vrange is None else vrange
    span = hi - lo if hi > lo else 1.0
    t = np.clip((v - lo) / span, 0.0, 1.0)
    # open cells use 1..255 so that walls stay distinguishable
    level = np.zeros((ny, nx))
    mask = np.zeros((ny, nx), bool)
    level[ny - 1 - j, i] = t
    mask[ny - 1 - j, i] = True
    ext = os.path.splitext(out_path)[1].lower()
    if ext == ".pgm":
        if palette != "gray":
            raise BadInput("PGM output is grayscale only")
        img = np.where(mask, 1 + np.rint(254 * level), 0).astype(np.uint8)
        write_pgm(out_path, img)
    elif ext == ".png":
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        cmap = plt.get_cmap("gray" if palette == "gray" else "inferno")
        rgb = cmap(level)
        rgb[~mask] = (0, 0, 0, 1)
        plt.imsave(out_path, rgb)
    else:
        raise BadInput("output must end in .pgm or .png")
    return out_path


def cmd_render(args, t0):
    render_field(args.csv, args.output, args.palette, args.range)
    return EXIT_OK


# parser


def vars_of(args):
    skip = {"func", "file_config", "config"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory (default $MAZPOT_OUT or .)")
    common.add_argument("--config", default=None, help="flat key = value file of option defaults")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--max-iter", type=int, default=None)
    common.add_argument("--threads", type=int, default=None, help="cap on BLAS/OpenMP threads")

    dom = argparse.ArgumentParser(add_help=False)
    dom.add_argument("--recipe", default="square")
    dom.add_argument("--h", type=_h, default=2.0**-6, help="grid spacing, e.g. 0.01 or 2^-7")
    dom.add_argument("--param", type=_kv, action="append", help="recipe parameter key=value")

    ap = argparse.ArgumentParser(prog="mazpot", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common, dom], help="rasterize a domain recipe")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("metric", parents=[common, dom], help="inner and Mazurkiewicz distance of two points")
    p.add_argument("--a", type=_pair)
    p.add_argument("--b", type=_pair)
    p.set_defaults(func=cmd_metric)

    p = sub.add_parser("capacity", parents=[common, dom], help="capacity estimate of a target set")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--variant", default="BAR", help="a variant tag or 'chain' for all five")
    p.add_argument("--box", type=_box, action="append", help="interior cells in x0,x1,y0,y1")
    p.add_argument("--boundary-box", type=_box, action="append", help="boundary vertices in x0,x1,y0,y1")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("solve", parents=[common, dom], help="Dirichlet or obstacle problem")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--data", default="x", help="boundary data, an expression in x and y")
    p.add_argument("--obstacle", default=None, help="obstacle, an expression in x and y")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("perron", parents=[common, dom], help="Perron solution for data on the split boundary")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--data", default="x")
    p.add_argument("--side", action="store_true", help="evaluate data at the side representative, not the vertex")
    p.set_defaults(func=cmd_perron)

    p = sub.add_parser("mc", parents=[common, dom], help="random-walk estimate at a point (p = 2)")
    p.add_argument("--data", default="x")
    p.add_argument("--start", type=_pair)
    p.add_argument("--walks", type=int, default=100000)
    p.add_argument("--side", action="store_true")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("run-example", parents=[common], help="run a scripted example pipeline")
    p.add_argument("name")
    p.add_argument("--set", type=_kv, action="append", help="pipeline setting key=value")
    p.set_defaults(func=cmd_run_example)

    p = sub.add_parser("render", parents=[common], help="render a field CSV to PGM or PNG")
    p.add_argument("csv")
    p.add_argument("output")
    p.add_argument("--palette", choices=("gray", "heat"), default="gray")
    p.add_argument("--range", type=lambda s: tuple(float(t) for t in s.split(",")), default=None)
    p.set_defaults(func=cmd_render)
    return ap, sub


def _config_value(action, v):
    """Convert a parsed config value through the option's argparse action."""
    if isinstance(action, argparse._StoreTrueAction):
        if not isinstance(v, bool):
            raise UsageError(f"config key {action.dest} must be true or false")
        return v
    items = v if isinstance(v, list) else [v]
    text = ",".join(str(t) for t in items)
    conv = action.type or (lambda t: t)
    try:
        if isinstance(action, argparse._AppendAction):
            # several values are separated by ';'
            return [conv(t.strip()) for t in text.split(";")]
        return conv(text)
    except (argparse.ArgumentTypeError, ValueError) as exc:
        raise UsageError(f"bad config value for {action.dest}: {exc}") from None


def _apply_config(ap, sub, args, argv):
    """Fill options not given on the command line from the config file."""
    from .domain import parse_config

    args.file_config = {}
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            kv = parse_config(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    if args.command == "run-example":
        args.file_config = kv
        return args
    sp = sub.choices[args.command]
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    keys = {k.replace("-", "_"): v for k, v in kv.items()}
    bad = set(keys) - set(actions)
    if bad:
        raise UsageError(f"unknown config keys: {', '.join(sorted(bad))}")
    sp.set_defaults(**{k: _config_value(actions[k], v) for k, v in keys.items()})
    args = ap.parse_args(argv)
    args.file_config = kv
    return args


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    ap, sub = build_parser()
    args = ap.parse_args(argv)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    from .errors import MazpotError, UnknownExample

    try:
        args = _apply_config(ap, sub, args, argv)
        if args.out is None:
            args.out = os.environ.get("MAZPOT_OUT", ".")
        defaults = {"seed": 0, "tol": 1e-8, "max_iter": 500}
        if args.command != "run-example":
            for k, v in defaults.items():
                if getattr(args, k) is None:
                    setattr(args, k, v)
        need = {"metric": ("a", "b"), "mc": ("start",)}.get(args.command, ())
        missing = [k for k in need if getattr(args, k) is None]
        if missing:
            raise UsageError(f"missing required option(s): {', '.join('--' + k for k in missing)}")
        if args.command == "run-example":
            from . import pipelines

            if args.name not in pipelines.EXAMPLES:
                raise UnknownExample(args.name)
        os.makedirs(args.out, exist_ok=True)
        return args.func(args, time.time())
    except UnknownExample as exc:
        print(f"mazpot: unknown example {exc.args[0]!r}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, MazpotError) as exc:
        print(f"mazpot: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
