"""Command-line interface: fit, sweep, powerlaw, spectrum, boost, catalog."""

import argparse
import json
import sys

import numpy as np

from .bench import (
    fit_power_law,
    fmt_float,
    history_to_csv,
    relative_rmse,
    run_scaling_sweep,
    spectrum_report,
    spectrum_to_csv,
    sweep_to_csv,
    _fit_mlp,
    _fit_simplex,
    _fit_spline,
    _test_points,
)
from .net import mlp_from_json, mlp_to_json
from .optim import AdamConfig, BfgsConfig, BoostConfig, boost_train
from .targets import builtin_catalog, catalog_lookup, max_arity, sample_dataset


def _write(out, text):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", default=None, help="output path (default stdout)")
    sub.add_argument("--format", choices=("csv", "json"), default="csv")


def _parse_int_list(text):
    return [int(tok) for tok in text.split(",") if tok]


def cmd_catalog(args):
    rows = []
    for spec, domain in builtin_catalog():
        rows.append(
            {
                "name": spec.name,
                "dim": spec.dim,
                "max_arity": max_arity(spec),
                "lo": domain.lo.tolist(),
                "hi": domain.hi.tolist(),
            }
        )
    if args.format == "json":
        _write(args.out, json.dumps(rows, indent=2) + "\n")
    else:
        lines = ["name,dim,max_arity"]
        lines += [f"{r['name']},{r['dim']},{r['max_arity']}" for r in rows]
        _write(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_fit(args):
    spec, domain = catalog_lookup(args.target)
    adam_cfg = AdamConfig(lr=args.lr, steps=args.adam_steps)
    if args.method == "simplex":
        from .triangulation import delaunay_triangulate, triangulation_to_json

        train = sample_dataset(spec, domain, args.size, args.seed)
        tri = delaunay_triangulate(train.inputs, train.targets)
        model_json = triangulation_to_json(tri)
        predict, train_rmse, n_params = _fit_simplex(
            spec, domain, args.size, args.seed, None
        )
    elif args.method.startswith("spline-"):
        from .splines import grid_spline_to_json, spline_to_json

        order = int(args.method.split("-", 1)[1])
        predict, train_rmse, n_params = _fit_spline(
            spec, domain, args.size, args.seed, order
        )
        model_json = None  # filled below from the fitted object
        if spec.dim == 1:
            from .splines import spline_fit_1d
            from .targets import eval_target_batch

            xs = np.linspace(domain.lo[0], domain.hi[0], args.size)
            model_json = spline_to_json(
                spline_fit_1d(xs, eval_target_batch(spec, xs.reshape(-1, 1)), order)
            )
        else:
            from .splines import grid_spline_fit

            pts = max(4, round(args.size ** (1.0 / spec.dim)))
            model_json = grid_spline_to_json(grid_spline_fit(spec, domain, pts))
    elif args.method in ("relu-mlp", "tanh-mlp"):
        predict, train_rmse, n_params = _fit_mlp(
            spec,
            domain,
            args.size,
            args.seed,
            args.method.split("-", 1)[0],
            adam_cfg,
            width=args.width,
        )
        model_json = None
    else:
        print(f"unknown method {args.method!r}", file=sys.stderr)
        return 2
    test_x, test_y = _test_points(spec, domain, args.seed)
    preds, valid = predict(test_x)
    metrics = {
        "method": args.method,
        "target": args.target,
        "n_train": args.size,
        "n_params": n_params,
        "seed": args.seed,
        "train_rmse_rel": train_rmse,
        "test_rmse_rel": relative_rmse(preds[valid], test_y[valid]),
    }
    if args.out and model_json is not None:
        with open(args.out, "w") as fh:
            fh.write(model_json)
    print(json.dumps(metrics))
    return 0


def cmd_sweep(args):
    adam_cfg = AdamConfig(lr=args.lr, steps=args.adam_steps)
    result = run_scaling_sweep(
        args.method,
        args.target,
        _parse_int_list(args.sizes),
        _parse_int_list(args.seeds) if args.seeds else [args.seed],
        adam_cfg=adam_cfg,
    )
    if args.format == "json":
        rows = [vars(r) | {} for r in result.rows]
        rows = [
            {k: getattr(r, k) for k in (
                "method", "target", "n_train", "n_params", "seed",
                "train_rmse_rel", "test_rmse_rel", "wall_seconds")}
            for r in result.rows
        ]
        _write(args.out, json.dumps(rows) + "\n")
    else:
        _write(args.out, sweep_to_csv(result))
    return 0


def cmd_powerlaw(args):
    import csv

    pairs = []
    with open(args.infile) as fh:
        for row in csv.DictReader(fh):
            if args.method and row["method"] != args.method:
                continue
            if args.target and row["target"] != args.target:
                continue
            loss = float(row[args.column])
            n = int(row["n_train"])
            if np.isfinite(loss):
                pairs.append((n, loss))
    fit = fit_power_law(pairs, args.floor)
    print(
        json.dumps(
            {
                "alpha": fit.alpha,
                "log_intercept": fit.log_intercept,
                "r_squared": fit.r_squared,
                "floor_cutoff": fit.floor_cutoff,
                "points_used": len([p for p in pairs if p[1] > args.floor]),
            }
        )
    )
    return 0


def cmd_spectrum(args):
    with open(args.model) as fh:
        net = mlp_from_json(fh.read())
    spec, domain = catalog_lookup(args.target)
    data = sample_dataset(spec, domain, args.size, args.seed)
    rows = spectrum_report(net, data)
    _write(args.out, spectrum_to_csv(rows))
    return 0


def cmd_boost(args):
    spec, domain = catalog_lookup(args.target)
    data = sample_dataset(spec, domain, args.size, args.seed)
    w1, w2 = _parse_int_list(args.widths)
    cfg = BoostConfig(
        stage1_hidden=(w1,) * args.hidden_layers,
        stage2_hidden=(w2,) * args.hidden_layers,
        optimizer=args.optimizer,
        bfgs=BfgsConfig(max_iters=args.max_iters),
        adam=AdamConfig(lr=args.lr, steps=args.adam_steps),
        seed=args.seed,
    )
    assembled, diag = boost_train(data, cfg)
    history = list(diag["stage1_history"]) + list(diag.get("stage2_history", []))
    _write(args.out, history_to_csv(history))
    if args.model_out:
        with open(args.model_out, "w") as fh:
            fh.write(mlp_to_json(assembled))
    print(
        json.dumps(
            {
                "target": args.target,
                "c": diag["c"],
                "stage1_rmse_rel": diag["stage1_rmse_rel"],
                "final_rmse_rel": diag["final_rmse_rel"],
            }
        )
    )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="precisionfit",
        description="High-precision function approximation benchmark harness",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("catalog", help="list built-in targets")
    _add_common(sub)
    sub.set_defaults(fn=cmd_catalog)

    sub = subs.add_parser("fit", help="fit one method/target/size cell")
    _add_common(sub)
    sub.add_argument("--method", required=True)
    sub.add_argument("--target", required=True)
    sub.add_argument("--size", type=int, required=True)
    sub.add_argument("--width", type=int, default=None)
    sub.add_argument("--lr", type=float, default=1e-3)
    sub.add_argument("--adam-steps", type=int, default=20000)
    sub.set_defaults(fn=cmd_fit)

    sub = subs.add_parser("sweep", help="scaling sweep to CSV")
    _add_common(sub)
    sub.add_argument("--method", required=True)
    sub.add_argument("--target", required=True)
    sub.add_argument("--sizes", required=True, help="comma-separated sizes")
    sub.add_argument("--seeds", default=None, help="comma-separated seeds")
    sub.add_argument("--lr", type=float, default=1e-3)
    sub.add_argument("--adam-steps", type=int, default=20000)
    sub.set_defaults(fn=cmd_sweep)

    sub = subs.add_parser("powerlaw", help="fit a power law to a sweep CSV")
    _add_common(sub)
    sub.add_argument("--in", dest="infile", required=True)
    sub.add_argument("--floor", type=float, default=1e-13)
    sub.add_argument("--column", default="test_rmse_rel")
    sub.add_argument("--method", default=None)
    sub.add_argument("--target", default=None)
    sub.set_defaults(fn=cmd_powerlaw)

    sub = subs.add_parser("spectrum", help="Hessian spectrum of a model JSON")
    _add_common(sub)
    sub.add_argument("--model", required=True)
    sub.add_argument("--target", required=True)
    sub.add_argument("--size", type=int, default=1000)
    sub.set_defaults(fn=cmd_spectrum)

    sub = subs.add_parser("boost", help="two-stage residual training")
    _add_common(sub)
    sub.add_argument("--target", required=True)
    sub.add_argument("--size", type=int, default=512)
    sub.add_argument("--widths", default="20,20")
    sub.add_argument("--hidden-layers", type=int, default=2)
    sub.add_argument("--optimizer", choices=("bfgs", "adam"), default="bfgs")
    sub.add_argument("--max-iters", type=int, default=20000)
    sub.add_argument("--lr", type=float, default=1e-3)
    sub.add_argument("--adam-steps", type=int, default=20000)
    sub.add_argument("--model-out", default=None)
    sub.set_defaults(fn=cmd_boost)

    return parser


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())
