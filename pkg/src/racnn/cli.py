"""``racnn`` command line: bench, stats, train, eval, selfcheck.

Exit codes: 0 success, 1 check failure or runtime error, 2 usage error.
"""

import argparse
import csv
import json
import logging
import os
import sys

from . import _backend, bench, config, selfcheck
from .nn import (Graph, TrainConfig, build_one_swap, build_toy_pair, evaluate, layer_alpha_stats,
                 load_dataset, parse_synthetic, toy_specs, train)
from .nn.data import IdxFormatError
from .model_io import ModelFileError, load_model, save_model

log = logging.getLogger("racnn")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        _write_text(path, text + "\n")
    print(text)


def _write_text(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


# -- dataset arguments ---------------------------------------------------------

def _add_dataset_args(p):
    g = p.add_argument_group("dataset (one of)")
    g.add_argument("--synthetic", metavar="NAME", help="seeded synthetic set, e.g. 4class")
    g.add_argument("--idx-images", metavar="PATH", help="IDX ubyte image file (optionally .gz)")
    g.add_argument("--idx-labels", metavar="PATH", help="IDX ubyte label file (optionally .gz)")
    g.add_argument("--n-train", type=int, default=800, help="synthetic training images (default 800)")
    g.add_argument("--n-val", type=int, default=200, help="synthetic validation images (default 200)")


def _dataset(args):
    """Returns (dataset, description dict). The dataset seed is ``--seed``."""
    if args.synthetic and (args.idx_images or args.idx_labels):
        raise UsageError("give either --synthetic or --idx-images/--idx-labels, not both")
    if args.synthetic:
        try:
            spec = parse_synthetic(args.synthetic, seed=args.seed, n_train=args.n_train,
                                   n_val=args.n_val)
        except (ValueError, TypeError) as exc:
            raise UsageError(str(exc)) from exc
        desc = {"kind": "synthetic", "name": args.synthetic, "classes": spec.classes,
                "seed": spec.seed, "n_train": spec.n_train, "n_val": spec.n_val}
        try:
            return load_dataset(spec), desc
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    if args.idx_images and args.idx_labels:
        ds = load_dataset((args.idx_images, args.idx_labels), seed=args.seed)
        desc = {"kind": "idx", "images": os.path.basename(args.idx_images),
                "labels": os.path.basename(args.idx_labels), "seed": args.seed,
                "classes": ds.num_classes}
        return ds, desc
    raise UsageError("a dataset is required: --synthetic NAME or --idx-images PATH --idx-labels PATH")


# -- subcommands ---------------------------------------------------------------

def cmd_bench(args):
    if args.reps < 3:
        raise UsageError("--reps must be >= 3")
    if args.warmup < 3:
        raise UsageError("--warmup must be >= 3")
    if not 0.0 <= args.alpha_zero <= 1.0:
        raise UsageError("--alpha-zero must lie in [0, 1]")
    if min(args.h, args.c, args.d, args.f) < 1:
        raise UsageError("--h, --c, --d and --f must be positive")
    report = bench.run_bench(args.h, args.c, args.d, args.f, alpha_zero=args.alpha_zero,
                             reps=args.reps, warmup=args.warmup, threads=args.threads,
                             tau=args.tau, seed=args.seed)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=bench.BenchReport.CSV_FIELDS)
            writer.writeheader()
            writer.writerows(report.csv_rows())
    _emit(report.to_dict(), args.out)
    return EXIT_OK


def _layer_name(graph, i):
    return f"{i}.{graph.layers[i].kind}"


def alpha_stats_report(graph, x, *, tau=0.0, threshold=10.0, model=None):
    """The ``stats`` payload for ``graph`` over images ``x``."""
    report = {"model": model, "images": int(len(x)), "tau": tau, "threshold_percent": threshold,
              "layers": []}
    if not graph.racnn_layers():
        report["message"] = "nothing to report: the model has no racnn_conv layers"
        return report
    for i, st in layer_alpha_stats(graph, x, tau=tau).items():
        pct = {"alpha_zero": 100.0 * st.fraction_alpha_zero,
               "alpha_mid": 100.0 * st.fraction_alpha_mid,
               "alpha_one": 100.0 * st.fraction_alpha_one}
        report["layers"].append({
            "layer": _layer_name(graph, i),
            "index": i,
            "percent": pct,
            "skip_fraction": st.skipped_pixels / st.total_pixels,
            "active_pixels": st.active_pixels,
            "total_pixels": st.total_pixels,
            "revert_candidate": pct["alpha_zero"] < threshold,
        })
    return report


def cmd_stats(args):
    graph = load_model(args.model)
    ds, _ = _dataset(args)
    x = ds.x_val[: args.images] if args.images else ds.x_val
    _check_input_shape(graph, x)
    report = alpha_stats_report(graph, x.astype(config.default_dtype()), tau=args.tau,
                                threshold=args.threshold, model=os.path.basename(args.model))
    if "message" in report:
        print(report["message"], file=sys.stderr)
    _emit(report, args.out)
    return EXIT_OK


def _check_input_shape(graph, x):
    if tuple(x.shape[1:]) != graph.input_shape:
        raise UsageError(f"model expects inputs of shape {graph.input_shape}, "
                         f"dataset has {tuple(x.shape[1:])}")


def _with_suffix(path, tag):
    root, ext = os.path.splitext(path)
    return f"{root}-{tag}{ext or '.racn'}"


def train_runs(ds, *, seed, epochs, lr, arch="racnn", pair=False, alpha_bias=True,
               channels=(8, 16, 16), batch_size=32):
    """Train the requested graphs on ``ds``; returns ``{name: (graph, history)}``."""
    bias = 1.0 if alpha_bias else 0.0
    cfg = TrainConfig(learning_rate=lr, epochs=epochs, batch_size=batch_size, seed=seed,
                      frozen=() if alpha_bias else ("b_alpha",))
    shape, classes = ds.input_shape, ds.num_classes
    if pair:
        std, rac = build_toy_pair(shape, channels, classes, seed=seed, alpha_bias=bias)
        graphs = {"standard": std, "racnn": rac}
    elif arch == "standard":
        graphs = {"standard": Graph(toy_specs("std_conv3", channels, classes), shape, seed=seed)}
    elif arch == "swap":
        graphs = {"swap": build_one_swap(shape, channels, classes, seed=seed, alpha_bias=bias)}
    else:
        graphs = {"racnn": Graph(toy_specs("racnn_conv", channels, classes), shape, seed=seed,
                                 alpha_bias=bias)}
    return {name: (g, train(g, ds, cfg)) for name, g in graphs.items()}


def cmd_train(args):
    if args.epochs < 0:
        raise UsageError("--epochs must be >= 0")
    if args.lr < 0:
        raise UsageError("--lr must be >= 0")
    ds, desc = _dataset(args)
    runs = train_runs(ds, seed=args.seed, epochs=args.epochs, lr=args.lr, arch=args.arch,
                      pair=args.pair, alpha_bias=args.alpha_bias == "on",
                      batch_size=args.batch_size)
    result = {"seed": args.seed, "epochs": args.epochs, "learning_rate": args.lr,
              "alpha_bias": args.alpha_bias, "dataset": desc, "runs": {}}
    for name, (g, history) in runs.items():
        result["runs"][name] = {"history": history, "final_val_acc": history[-1]["val_acc"],
                                "num_params": g.num_params()}
    if args.pair:
        s = result["runs"]["standard"]["final_val_acc"]
        r = result["runs"]["racnn"]["final_val_acc"]
        diff = 100.0 * (r - s)
        result["parity"] = {"standard_val_acc": s, "racnn_val_acc": r, "diff_points": diff,
                            "within_3_points": abs(diff) <= 3.0}
    if args.out:
        names = list(runs)
        for name in names:
            path = args.out if len(names) == 1 or name == "racnn" else _with_suffix(args.out, name)
            save_model(runs[name][0], path)
            log.info("saved %s model to %s", name, path)
    if args.history:
        _write_text(args.history, json.dumps(result, indent=2, sort_keys=True) + "\n")
    _emit(result)
    return EXIT_OK


def cmd_eval(args):
    graph = load_model(args.model)
    ds, _ = _dataset(args)
    _check_input_shape(graph, ds.x_val)
    sparse = args.path == "sparse"
    acc = evaluate(graph, ds.x_val.astype(config.default_dtype()), ds.y_val,
                   sparse=sparse, tau=args.tau)
    _emit({"model": os.path.basename(args.model), "accuracy": acc, "images": int(len(ds.y_val)),
           "path": args.path, "tau": args.tau}, args.out)
    return EXIT_OK


def cmd_selfcheck(args):
    previous = set(selfcheck.FAULTS)
    selfcheck.FAULTS.update(args.inject_fault or [])
    try:
        results = selfcheck.run(fp64=args.fp64, seed=args.seed)
    finally:
        selfcheck.FAULTS.clear()
        selfcheck.FAULTS.update(previous)
    ok = all(r["ok"] for r in results)
    if args.json:
        _emit({"ok": ok, "suites": results}, args.out)
    else:
        for r in results:
            print(f"{'PASS' if r['ok'] else 'FAIL'}  {r['suite']:<17} {r['detail']}")
        failed = [r["suite"] for r in results if not r["ok"]]
        print("all suites passed" if ok else f"failed: {', '.join(failed)}")
    return EXIT_OK if ok else EXIT_FAIL


# -- parser --------------------------------------------------------------------

def _tau(text):
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError("tau must lie in [0, 1)")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=1, help="GEMM worker threads (default 1)")
    common.add_argument("--fp64", action="store_true", help="compute in float64")
    common.add_argument("--backend", choices=("native", "numpy"), help="kernel backend (default: best available)")
    common.add_argument("--json", action="store_true",
                        help="JSON on stdout (already the format for bench/stats/train/eval)")
    common.add_argument("--out", metavar="PATH", help="also write the JSON report here "
                        "(train: checkpoint path)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="racnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", parents=[common], help="time standard vs adaptive conv")
    p.add_argument("--h", type=int, default=128)
    p.add_argument("--c", type=int, default=128)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--f", type=int, default=64)
    p.add_argument("--alpha-zero", type=float, default=0.5, help="target fraction of alpha == 0 pixels")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--tau", type=_tau, default=0.0)
    p.add_argument("--csv", metavar="PATH", help="write one CSV row per variant")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stats", parents=[common], help="per-layer alpha histograms")
    p.add_argument("--model", required=True)
    _add_dataset_args(p)
    p.add_argument("--images", type=_positive_int, help="use only the first N validation images")
    p.add_argument("--tau", type=_tau, default=0.0)
    p.add_argument("--threshold", type=float, default=10.0,
                   help="flag layers with fewer alpha == 0 pixels than this percentage (default 10)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", parents=[common], help="train toy graphs")
    _add_dataset_args(p)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=_positive_int, default=32)
    p.add_argument("--arch", choices=("racnn", "standard", "swap"), default="racnn")
    p.add_argument("--pair", action="store_true", help="train standard and adaptive graphs and compare")
    p.add_argument("--alpha-bias", choices=("on", "off"), default="on",
                   help="trainable selector bias (off: bias fixed at 0)")
    p.add_argument("--history", metavar="PATH", help="write the history JSON here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="validation accuracy of a saved model")
    p.add_argument("--model", required=True)
    _add_dataset_args(p)
    p.add_argument("--path", choices=("dense", "sparse"), default="sparse")
    p.add_argument("--tau", type=_tau, default=0.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selfcheck", parents=[common], help="run the oracle-equivalence suites")
    p.add_argument("--inject-fault", action="append", choices=selfcheck.KNOWN_FAULTS,
                   help="deliberately break a suite's subject (tests the checker)")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.backend:
            if args.backend not in _backend.available():
                raise UsageError(f"backend {args.backend!r} is not built; available: {_backend.available()}")
            _backend.set_backend(args.backend)
        config.set_threads(args.threads)
        with config.precision("fp64" if args.fp64 else "fp32"):
            return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"racnn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IdxFormatError, ModelFileError, FileNotFoundError, OSError) as exc:
        print(f"racnn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
