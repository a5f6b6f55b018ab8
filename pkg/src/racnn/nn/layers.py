"""Layer zoo for the toy training stack.

Every layer maps a stacked batch to a stacked batch. Conv layers take
(n, h, c, d) pixel-major maps; ``flatten`` turns them into (n, features)
rows for ``dense``. ``forward`` returns ``(y, cache)`` and ``backward``
returns ``(grad_x, grads)`` with ``grads`` keyed like ``params()``.
"""

from dataclasses import dataclass

import numpy as np

from .. import adaptive, config
from ..errors import ShapeError
from ..lowering import col2im, im2col
from ..tensor import matmul

KINDS = ("std_conv3", "std_conv1", "racnn_conv", "relu", "maxpool2",
         "flatten", "dense", "softmax_xent")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    d: int = 0
    f: int = 0
    units: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}; expected one of {KINDS}")


def he_uniform(rng, fan_in, shape, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    kind = ""

    def out_shape(self, in_shape):
        return in_shape

    def params(self):
        return {}

    def set_params(self, values):
        pass

    def forward(self, x, *, sparse=False, tau=0.0):
        raise NotImplementedError

    def backward(self, cache, gy):
        raise NotImplementedError


class Conv(Layer):
    """Standard k x k convolution (k in {1, 3}), no bias."""

    def __init__(self, d, f, k, w=None, rng=None, dtype=None):
        self.kind = "std_conv3" if k == 3 else "std_conv1"
        self.d, self.f, self.k = d, f, k
        dt = dtype or config.default_dtype()
        if w is None:
            w = he_uniform(rng, k * k * d, (k * k * d, f), dt)
        self.w = np.asarray(w)

    def out_shape(self, in_shape):
        if in_shape[-1] != self.d:
            raise ShapeError(f"{self.kind} expects {self.d} channels, got {in_shape[-1]}")
        return in_shape[:-1] + (self.f,)

    def params(self):
        return {"w": self.w}

    def set_params(self, values):
        self.w = values["w"]

    def forward(self, x, *, sparse=False, tau=0.0):
        n, h, c, _ = x.shape
        cols = im2col(x, self.k)
        y = matmul(cols, self.w).reshape(n, h, c, self.f)
        return y, (x.shape, cols)

    def backward(self, cache, gy):
        (n, h, c, d), cols = cache
        g = gy.reshape(-1, self.f)
        gw = matmul(np.ascontiguousarray(cols.T), g)
        gcols = matmul(g, np.ascontiguousarray(self.w.T))
        gx = col2im(gcols, h, c, d, self.k, n=n)
        return gx, {"w": gw}


class RacnnConv(Layer):
    kind = "racnn_conv"

    def __init__(self, d, f, params=None, rng=None, alpha_bias=1.0, dtype=None):
        self.d, self.f = d, f
        if params is None:
            params = adaptive.RacnnParams.random(rng, d, f, alpha_bias=alpha_bias, dtype=dtype)
        self.p = params.validate()

    def out_shape(self, in_shape):
        if in_shape[-1] != self.d:
            raise ShapeError(f"racnn_conv expects {self.d} channels, got {in_shape[-1]}")
        return in_shape[:-1] + (self.f,)

    def params(self):
        return {
            "w1": self.p.w1,
            "w3_hollow": self.p.w3_hollow,
            "w_alpha": self.p.w_alpha,
            "b_alpha": np.asarray(self.p.b_alpha, dtype=self.p.dtype),
        }

    def set_params(self, values):
        self.p = adaptive.RacnnParams(
            values["w1"], values["w3_hollow"], values["w_alpha"], float(values["b_alpha"]))

    def force_alpha(self, value):
        """Pin the selector so every pixel gets alpha == value (0 or 1)."""
        self.p.w_alpha = np.zeros_like(self.p.w_alpha)
        self.p.b_alpha = float(value)

    def forward(self, x, *, sparse=False, tau=0.0):
        if sparse:
            y, amap, stats = adaptive.racnn_forward_sparse(x, self.p, tau)
            return y, {"x": None, "dense": None, "alpha": amap, "stats": stats}
        y, amap, dense = adaptive.racnn_forward_dense(x, self.p, return_cache=True)
        return y, {"x": x, "dense": dense, "alpha": amap, "stats": None}

    def backward(self, cache, gy):
        grads, gx = adaptive.racnn_backward(cache["x"], self.p, cache["dense"], gy)
        return gx, {
            "w1": grads.w1,
            "w3_hollow": grads.w3_hollow,
            "w_alpha": grads.w_alpha,
            "b_alpha": np.asarray(grads.b_alpha, dtype=self.p.dtype),
        }


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, *, sparse=False, tau=0.0):
        mask = x > 0
        return np.where(mask, x, 0).astype(x.dtype, copy=False), mask

    def backward(self, cache, gy):
        return np.where(cache, gy, 0).astype(gy.dtype, copy=False), {}


class MaxPool2(Layer):
    """2x2 max pooling, stride 2; odd trailing rows/columns are dropped."""

    kind = "maxpool2"

    def out_shape(self, in_shape):
        h, c, d = in_shape
        if h < 2 or c < 2:
            raise ShapeError(f"maxpool2 needs at least 2x2 input, got {in_shape}")
        return (h // 2, c // 2, d)

    def forward(self, x, *, sparse=False, tau=0.0):
        n, h, c, d = x.shape
        h2, c2 = h // 2, c // 2
        win = x[:, :2 * h2, :2 * c2, :].reshape(n, h2, 2, c2, 2, d)
        win = win.transpose(0, 1, 3, 5, 2, 4).reshape(n, h2, c2, d, 4)
        arg = win.argmax(axis=-1)
        y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        return y, (x.shape, arg)

    def backward(self, cache, gy):
        (n, h, c, d), arg = cache
        h2, c2 = h // 2, c // 2
        gwin = np.zeros((n, h2, c2, d, 4), dtype=gy.dtype)
        np.put_along_axis(gwin, arg[..., None], gy[..., None], axis=-1)
        gwin = gwin.reshape(n, h2, c2, d, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        gx = np.zeros((n, h, c, d), dtype=gy.dtype)
        gx[:, :2 * h2, :2 * c2, :] = gwin.reshape(n, 2 * h2, 2 * c2, d)
        return gx, {}


class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, *, sparse=False, tau=0.0):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, gy):
        return gy.reshape(cache), {}


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, units, w=None, b=None, rng=None, dtype=None):
        self.n_in, self.units = n_in, units
        dt = dtype or config.default_dtype()
        self.w = np.asarray(w) if w is not None else he_uniform(rng, n_in, (n_in, units), dt)
        self.b = np.asarray(b) if b is not None else np.zeros(units, dtype=dt)

    def out_shape(self, in_shape):
        if in_shape != (self.n_in,):
            raise ShapeError(f"dense expects ({self.n_in},) input, got {in_shape}")
        return (self.units,)

    def params(self):
        return {"w": self.w, "b": self.b}

    def set_params(self, values):
        self.w, self.b = values["w"], values["b"]

    def forward(self, x, *, sparse=False, tau=0.0):
        return matmul(x, self.w) + self.b, x

    def backward(self, cache, gy):
        gw = matmul(np.ascontiguousarray(cache.T), gy)
        gx = matmul(gy, np.ascontiguousarray(self.w.T))
        return gx, {"w": gw, "b": gy.sum(axis=0)}


def softmax_xent(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    n = logits.shape[0]
    labels = np.asarray(labels, dtype=np.int64)
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1
    return float(loss), grad / n
