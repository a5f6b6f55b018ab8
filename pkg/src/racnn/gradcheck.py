"""Central finite-difference checks for the adaptive layer and small graphs.

Everything here runs in float64: with a 1e-4 step, fp32 rounding alone
would swamp the tolerances.
"""

import numpy as np

from .adaptive import RacnnParams, racnn_backward, racnn_forward_dense
from .lowering import center_rows
from .nn.graph import Graph, forward, loss_and_grads
from .nn.layers import LayerSpec, softmax_xent
from .tensor import make_rng

STEP = 1e-4


def rel_error(analytic, numeric):
    """Max-norm relative error ``|a - n|_inf / max(|a|_inf, |n|_inf)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - n).max() / scale)


def numeric_grad(loss, arr, step=STEP, skip=None):
    """d loss / d arr by central differences, perturbing ``arr`` in place.

    ``skip`` is a boolean mask of entries to leave at zero (tied weights).
    """
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    mask = None if skip is None else np.asarray(skip).reshape(-1)
    for i in range(flat.size):
        if mask is not None and mask[i]:
            continue
        orig = flat[i]
        flat[i] = orig + step
        up = loss()
        flat[i] = orig - step
        down = loss()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * step)
    return grad


KINK_MARGIN = 1e-3


def _alpha_margin(raw):
    """Distance of the nearest selector output to a clip corner (0 or 1)."""
    raw = np.asarray(raw)
    return float(min(np.abs(raw).min(), np.abs(raw - 1.0).min()))


def random_layer_case(seed, h=5, c=5, d=3, f=4):
    """fp64 input and parameters with a mixed alpha map (some 0, some 1, some between).

    Draws are repeated until no selector output sits within ``KINK_MARGIN``
    of a clip corner, where central differences would straddle the kink.
    """
    rng = make_rng([seed, 2024])
    while True:
        x = rng.uniform(-1.0, 1.0, size=(h, c, d))
        params = RacnnParams.random(rng, d, f, alpha_bias=0.5, alpha_scale=1.0, dtype=np.float64)
        _, amap = racnn_forward_dense(x, params)
        if _alpha_margin(amap.raw) > KINK_MARGIN:
            return x, params


def check_racnn_layer(seed, h=5, c=5, d=3, f=4, step=STEP):
    """Analytic vs numeric gradients of 0.5*||out||^2 for one adaptive layer.

    Returns a dict of relative errors per tensor (w1, w3_hollow, w_alpha,
    b_alpha, x).
    """
    x, p = random_layer_case(seed, h, c, d, f)

    def loss():
        out, _ = racnn_forward_dense(x, p)
        return 0.5 * float(np.sum(out * out))

    out, _, cache = racnn_forward_dense(x, p, return_cache=True)
    grads, gx = racnn_backward(x, p, cache, out)

    hollow_skip = np.zeros(p.w3_hollow.shape, dtype=bool)
    hollow_skip[center_rows(d)] = True
    b = np.array([p.b_alpha])

    def loss_b():
        p.b_alpha = float(b[0])
        return loss()

    num_b = numeric_grad(loss_b, b, step)
    p.b_alpha = float(b[0])
    return {
        "w1": rel_error(grads.w1, numeric_grad(loss, p.w1, step)),
        "w3_hollow": rel_error(grads.w3_hollow, numeric_grad(loss, p.w3_hollow, step, hollow_skip)),
        "w_alpha": rel_error(grads.w_alpha, numeric_grad(loss, p.w_alpha, step)),
        "b_alpha": rel_error(np.array([grads.b_alpha]), num_b),
        "x": rel_error(gx, numeric_grad(loss, x, step)),
    }


def toy_net(seed, h=5, c=5, d=3, f=4, classes=3):
    """Two weight layers: adaptive conv -> relu -> flatten -> dense."""
    specs = [LayerSpec("racnn_conv", f=f), LayerSpec("relu"), LayerSpec("flatten"),
             LayerSpec("dense", units=classes)]
    g = Graph(specs, (h, c, d), seed=seed, alpha_bias=0.5, dtype=np.float64)
    rng = make_rng([seed, 7])
    layer = g.layers[0]
    layer.p.w_alpha = rng.uniform(-1.0, 1.0, size=d)
    g.layers[3].b = rng.uniform(-0.1, 0.1, size=classes)
    g.touch()
    return g


def _toy_case(seed, batch):
    rng = make_rng([seed, 8])
    while True:
        g = toy_net(int(rng.integers(0, 2**31)))
        x = rng.uniform(-1.0, 1.0, size=(batch,) + g.input_shape)
        y = rng.integers(0, g.num_classes, size=batch)
        _, caches = forward(g, x)
        conv_out = g.layers[0].forward(x)[0]
        alpha_raw = caches.layer_caches[0]["alpha"].raw
        if np.abs(conv_out).min() > KINK_MARGIN and _alpha_margin(alpha_raw) > KINK_MARGIN:
            return g, x, y


def check_toy_net(seed, batch=2, step=STEP):
    """Whole-graph gradient check on :func:`toy_net`; relative error per parameter.

    Instances with a ReLU input or selector output within ``KINK_MARGIN`` of
    a kink are redrawn.
    """
    g, x, y = _toy_case(seed, batch)
    _, grads = loss_and_grads(g, x, y)
    params = g.parameters()

    def loss():
        logits, _ = forward(g, x)
        return softmax_xent(logits, y)[0]

    errors = {}
    for key, value in params.items():
        if key.endswith("b_alpha"):
            layer = g.layers[int(key.split(".")[0])]
            b = np.array([layer.p.b_alpha])

            def loss_b(layer=layer, b=b):
                layer.p.b_alpha = float(b[0])
                return loss()

            num = numeric_grad(loss_b, b, step)
            layer.p.b_alpha = float(b[0])
            errors[key] = rel_error(np.atleast_1d(grads[key]), num)
            continue
        skip = None
        if key.endswith("w3_hollow"):
            skip = np.zeros(value.shape, dtype=bool)
            skip[center_rows(value.shape[0] // 9)] = True
        errors[key] = rel_error(grads[key], numeric_grad(loss, value, step, skip))
    return errors
