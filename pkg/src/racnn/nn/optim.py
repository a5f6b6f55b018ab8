"""Adam with bias correction, as a pure function over parameter dicts."""

from dataclasses import dataclass

import numpy as np

from ..errors import NumericError
from ..lowering import center_rows


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    # parameter-name suffixes left untouched, e.g. ("b_alpha",) for a bias-free selector
    frozen: tuple = ()

    def __post_init__(self):
        # lr == 0 is allowed: it freezes the model (a useful baseline run).
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


def init_moments(params):
    return {k: (np.zeros_like(v), np.zeros_like(v)) for k, v in params.items()}


def adam_step(params, grads, moments, t, cfg):
    """One Adam update; returns ``(new_params, new_moments)``.

    Hollow 3x3 kernels (keys ending in ``w3_hollow``) get their centre rows
    forced back to zero afterwards.
    """
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_params, new_moments = {}, {}
    for key, theta in params.items():
        if cfg.frozen and key.endswith(tuple(cfg.frozen)):
            new_params[key], new_moments[key] = theta, moments[key]
            continue
        g = np.asarray(grads[key])
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {key}")
        m, v = moments[key]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        step = cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)
        updated = (theta - step).astype(theta.dtype, copy=False)
        if key.endswith("w3_hollow"):
            updated[center_rows(updated.shape[0] // 9)] = 0
        new_params[key] = updated
        new_moments[key] = (m.astype(theta.dtype, copy=False), v.astype(theta.dtype, copy=False))
    return new_params, new_moments
