"""Native (Cython) vs numpy fallback: per-kernel and whole-layer timings.

    python benchmarks/compare_backends.py [--h 128 --c 128 --d 64 --f 64 --reps 10]

Prints one JSON object: median milliseconds per kernel and backend, plus
the native/numpy ratio. Both backends must agree on the outputs first.
"""

import argparse
import json
import statistics
import sys
import time

import numpy as np
from threadpoolctl import threadpool_limits

from racnn import _backend
from racnn.adaptive import conv2d, embed_center, racnn_forward_dense, racnn_forward_sparse
from racnn.bench import make_case
from racnn.lowering import im2col, im2col_rows
from racnn.tensor import matmul


def median_ms(fn, reps, warmup=3):
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return 1e3 * statistics.median(samples)


def cases(h, c, d, f):
    x, p = make_case(h, c, d, f, 0.5)
    cols = im2col(x, 3)
    w3 = embed_center(p)
    active = np.flatnonzero(np.arange(h * c) % 2)
    return {
        "gemm": lambda: matmul(cols, w3),
        "im2col": lambda: im2col(x, 3),
        "gather_half": lambda: im2col_rows(x, active, 3, skip_center=True),
        "conv3x3": lambda: conv2d(x, w3, 3),
        "racnn_sparse": lambda: racnn_forward_sparse(x, p),
        "racnn_dense": lambda: racnn_forward_dense(x, p),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for dim, default in (("h", 128), ("c", 128), ("d", 64), ("f", 64)):
        ap.add_argument(f"--{dim}", type=int, default=default)
    ap.add_argument("--reps", type=int, default=10)
    args = ap.parse_args(argv)

    backends = _backend.available()
    if "native" not in backends:
        print("native extension not built; only the numpy fallback is available", file=sys.stderr)

    outputs, timings = {}, {}
    with threadpool_limits(limits=1):
        for b in backends:
            with _backend.use_backend(b):
                fns = cases(args.h, args.c, args.d, args.f)
                outputs[b] = fns["racnn_sparse"]()[0]
                timings[b] = {k: median_ms(fn, args.reps) for k, fn in fns.items()}

    report = {"dims": vars(args), "median_ms": timings}
    if len(backends) == 2:
        report["max_abs_diff"] = float(np.abs(outputs["native"] - outputs["numpy"]).max())
        report["native_over_numpy"] = {k: timings["native"][k] / timings["numpy"][k]
                                       for k in timings["native"]}
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
