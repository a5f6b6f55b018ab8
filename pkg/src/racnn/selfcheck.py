"""Oracle-equivalence suites run by ``racnn selfcheck``.

Each suite returns ``(ok, detail)``. Suites are small enough to finish in a
few seconds together; the test suite runs the same checks at larger scale.
"""

import logging
import time

import numpy as np

from . import config, gradcheck
from .adaptive import (RacnnParams, conv2d, embed_center, hard_forward, hard_merge, hard_split,
                       predict_time_factor, racnn_forward_dense, racnn_forward_sparse,
                       selector_bias_for_zero_fraction, standard_macs)
from .lowering import center_rows, col2im, im2col
from .nn.optim import TrainConfig, adam_step, init_moments
from .tensor import count_macs, make_rng, matmul, matmul_naive

log = logging.getLogger(__name__)

# Fault-injection hook for testing the checker itself. Names listed here
# deliberately break the matching suite's subject before it is checked.
FAULTS = set()
KNOWN_FAULTS = ("hollow",)


def _gemm(rng):
    worst = 0.0
    for m, k, n in [(1, 1, 1), (7, 13, 5), (70, 300, 9), (129, 65, 33)]:
        a = rng.uniform(-1, 1, (m, k))
        b = rng.uniform(-1, 1, (k, n))
        worst = max(worst, float(np.abs(matmul(a, b) - matmul_naive(a, b)).max()))
    return worst <= 1e-12, f"max |blocked - naive| = {worst:.2e} (fp64)"


def _im2col_adjoint(rng):
    worst = 0.0
    for k in (1, 3):
        x = rng.uniform(-1, 1, (2, 5, 6, 3))
        g = rng.uniform(-1, 1, (2 * 5 * 6, k * k * 3))
        lhs = float(np.sum(im2col(x, k) * g))
        rhs = float(np.sum(x * col2im(g, 5, 6, 3, k, n=2)))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1.0))
    return worst <= 1e-12, f"<im2col x, g> vs <x, col2im g>: rel diff {worst:.2e}"


def _split_merge(rng):
    for _ in range(5):
        rows = int(rng.integers(1, 60))
        rhat = rng.integers(0, 2, rows)
        i3 = rng.uniform(-1, 1, (rows, 4))
        i1 = rng.uniform(-1, 1, (rows, 2))
        i3h, i1h, plan = hard_split(i3, i1, rhat)
        # identity "convolution": merge the split inputs straight back
        back = hard_merge(i3h[:, :2], i1h, plan)
        want = np.where(rhat[:, None] == 1, i3[:, :2], i1)
        if not np.array_equal(back, want):
            return False, "merge(split(I)) != I"
    return True, "merge(split(I)) == I on 5 random radius vectors"


def _hard_path(rng):
    for _ in range(5):
        h, c, d, f = (int(v) for v in rng.integers(1, 7, 4))
        x = rng.integers(-3, 4, (h, c, d)).astype(np.float64)
        w3 = rng.integers(-3, 4, (9 * d, f)).astype(np.float64)
        w1 = rng.integers(-3, 4, (d, f)).astype(np.float64)
        rhat = rng.integers(0, 2, h * c)
        got = hard_forward(x, w3, w1, rhat)
        i3, i1 = im2col(x, 3), im2col(x, 1)
        want = np.stack([i3[p] @ w3 if rhat[p] else i1[p] @ w1 for p in range(h * c)])
        if not np.array_equal(got, want):
            return False, "hard split/merge differs from per-pixel dispatch"
    return True, "exact match with per-pixel dispatch on integer data"


def _layer(rng, h=9, c=7, d=5, f=6):
    dtype = config.default_dtype()
    x = rng.uniform(-1, 1, (h, c, d)).astype(dtype)
    return x, RacnnParams.random(rng, d, f, alpha_scale=1.0, dtype=dtype)


def _equivalence(rng):
    x, p = _layer(rng)
    p.w_alpha[:] = 0
    p.b_alpha = 1.0
    one = float(np.abs(racnn_forward_dense(x, p)[0] - conv2d(x, embed_center(p), 3)).max())
    p.b_alpha = 0.0
    zero = float(np.abs(racnn_forward_dense(x, p)[0] - conv2d(x, p.w1, 1)).max())
    return max(one, zero) <= 1e-5, f"alpha=1 vs 3x3: {one:.2e}, alpha=0 vs 1x1: {zero:.2e}"


def _sparse_dense(rng):
    x, p = _layer(rng)
    p.b_alpha = selector_bias_for_zero_fraction(x, p, 0.4)
    dense, _ = racnn_forward_dense(x, p)
    sparse, _, stats = racnn_forward_sparse(x, p, 0.0)
    diff = float(np.abs(dense - sparse).max())
    mixed = 0 < stats.active_pixels < stats.total_pixels
    return diff <= 1e-5 and mixed, (
        f"max |sparse - dense| = {diff:.2e}, {stats.skipped_pixels}/{stats.total_pixels} skipped")


def _hollow_invariant(rng):
    x, p = _layer(rng)
    params = {"w1": p.w1, "w3_hollow": p.w3_hollow, "w_alpha": p.w_alpha,
              "b_alpha": np.asarray(p.b_alpha, p.dtype)}
    grads = {k: rng.uniform(-1, 1, np.shape(v)).astype(p.dtype) for k, v in params.items()}
    params, _ = adam_step(params, grads, init_moments(params), 1, TrainConfig(learning_rate=1e-2))
    if "hollow" in FAULTS:
        params["w3_hollow"][center_rows(p.d)] += 0.25
    centre = float(np.abs(params["w3_hollow"][center_rows(p.d)]).max())
    p = RacnnParams(params["w1"], params["w3_hollow"], params["w_alpha"], 1.0)
    p.w_alpha[:] = 0
    diff = float(np.abs(racnn_forward_dense(x, p)[0] - conv2d(x, embed_center(p), 3)).max())
    return centre == 0.0 and diff <= 1e-5, (
        f"max |hollow centre| after an Adam step = {centre:.2e}, alpha=1 vs 3x3: {diff:.2e}")


def _gradients(rng, *, tol_layer, tol_net, seeds=3):
    with config.precision("fp64"):
        layer = max(max(gradcheck.check_racnn_layer(s).values()) for s in range(seeds))
        net = max(max(gradcheck.check_toy_net(s).values()) for s in range(seeds))
    return layer <= tol_layer and net <= tol_net, (
        f"max rel error layer {layer:.2e} (tol {tol_layer:g}), net {net:.2e} (tol {tol_net:g})")


def _cost_model(rng):
    exact = predict_time_factor(0.5) == 5 / 9
    h, c, d, f = 16, 16, 8, 16
    x, p = _layer(rng, h, c, d, f)
    p.b_alpha = selector_bias_for_zero_fraction(x, p, 0.5)
    with count_macs() as m:
        _, _, stats = racnn_forward_sparse(x, p)
    ratio = m.macs / standard_macs(h, c, d, f)
    predicted = predict_time_factor(stats.fraction_alpha_zero)
    err = abs(ratio - predicted) / predicted
    # the fused selector column adds d MACs per pixel on top of the model
    return exact and err <= 0.02, (
        f"factor(0.5) == 5/9: {exact}; counted {ratio:.4f} vs predicted {predicted:.4f}")


SUITES = {
    "gemm": _gemm,
    "im2col_adjoint": _im2col_adjoint,
    "split_merge": _split_merge,
    "hard_path": _hard_path,
    "equivalence": _equivalence,
    "sparse_dense": _sparse_dense,
    "hollow_invariant": _hollow_invariant,
    "gradients": None,
    "cost_model": _cost_model,
}


def run(*, fp64=False, seed=0, only=None):
    """Run every suite; returns a list of ``{"suite", "ok", "detail", "seconds"}``.

    ``fp64`` tightens the gradient tolerance from 1e-5 to 1e-6 (layer)
    and 1e-4 to 1e-5 (net).
    """
    tol_layer, tol_net = (1e-6, 1e-5) if fp64 else (1e-5, 1e-4)
    results = []
    for i, (name, fn) in enumerate(SUITES.items()):
        if only and name not in only:
            continue
        rng = make_rng([seed, i])
        t0 = time.perf_counter()
        try:
            if name == "gradients":
                ok, detail = _gradients(rng, tol_layer=tol_layer, tol_net=tol_net)
            elif fp64:
                with config.precision("fp64"):
                    ok, detail = fn(rng)
            else:
                ok, detail = fn(rng)
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append({"suite": name, "ok": bool(ok), "detail": detail,
                        "seconds": round(time.perf_counter() - t0, 3)})
        log.debug("%s %s", name, detail)
    return results
