"""Deterministic minibatch training and evaluation."""

import logging

import numpy as np

from ..adaptive import SparseStats
from ..tensor import make_rng
from .graph import forward, loss_and_grads_from_cache, predict
from .optim import adam_step, init_moments

log = logging.getLogger(__name__)


def evaluate(graph, x, y, *, batch_size=256, sparse=False, tau=0.0):
    """Top-1 accuracy in [0, 1]."""
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty set")
    correct = 0
    for s in range(0, len(y), batch_size):
        pred = predict(graph, x[s:s + batch_size], sparse=sparse, tau=tau)
        correct += int(np.count_nonzero(pred == y[s:s + batch_size]))
    return correct / len(y)


def alpha_summary(graph, x, *, batch_size=256):
    """Per adaptive layer: alpha fractions {0}, (0,1), {1} over the images ``x``."""
    layers = graph.racnn_layers()
    if not layers:
        return {}
    alphas = {i: [] for i, _ in layers}
    for s in range(0, len(x), batch_size):
        _, caches = forward(graph, x[s:s + batch_size])
        for i, _ in layers:
            alphas[i].append(caches.layer_caches[i]["alpha"].clipped)
    out = {}
    for i, _ in layers:
        st = SparseStats.from_alpha(np.concatenate(alphas[i]))
        out[str(i)] = {
            "alpha_zero": st.fraction_alpha_zero,
            "alpha_mid": st.fraction_alpha_mid,
            "alpha_one": st.fraction_alpha_one,
        }
    return out


def layer_alpha_stats(graph, x, *, tau=0.0, batch_size=256):
    """Per adaptive layer: :class:`SparseStats` of the skipping forward over ``x``.

    Counts are pooled across batches, so the result equals a single
    ``SparseStats.from_alpha`` over every pixel the layer saw.
    """
    layers = graph.racnn_layers()
    counts = {i: np.zeros(4, dtype=np.int64) for i, _ in layers}
    for s in range(0, len(x), batch_size):
        _, caches = forward(graph, x[s:s + batch_size], sparse=True, tau=tau)
        for i, _ in layers:
            a = caches.layer_caches[i]["alpha"].clipped
            counts[i] += (a.size, np.count_nonzero(a > tau), np.count_nonzero(a == 0),
                          np.count_nonzero(a == 1))
    out = {}
    for i, _ in layers:
        total, active, zero, one = (int(v) for v in counts[i])
        mid = total - zero - one
        out[i] = SparseStats(total, active, total - active, zero / total, one / total, mid / total)
    return out


def train(graph, dataset, cfg, *, checkpoint=None, eval_batch=256):
    """Adam minibatch training; returns a per-epoch history.

    Entry 0 is the untrained model. Each entry records the epoch index, the
    mean training loss of that epoch, train/val accuracy after it, and the
    alpha fractions of every adaptive layer on the validation images.
    The shuffling order depends only on ``cfg.seed``.
    """
    n = len(dataset.y_train)
    if n == 0 or len(dataset.y_val) == 0:
        raise ValueError("training needs non-empty train and validation sets")
    rng = make_rng([cfg.seed, 17])
    params = graph.parameters()
    moments = init_moments(params)
    t = 0

    def snapshot(epoch, loss):
        return {
            "iteration": epoch,
            "loss": loss,
            "train_acc": evaluate(graph, dataset.x_train, dataset.y_train, batch_size=eval_batch),
            "val_acc": evaluate(graph, dataset.x_val, dataset.y_val, batch_size=eval_batch),
            "alpha": alpha_summary(graph, dataset.x_val, batch_size=eval_batch),
        }

    history = [snapshot(0, None)]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            _, caches = forward(graph, dataset.x_train[idx])
            loss, grads = loss_and_grads_from_cache(graph, caches, dataset.y_train[idx])
            t += 1
            params, moments = adam_step(graph.parameters(), grads, moments, t, cfg)
            graph.set_parameters(params)
            losses.append(loss)
        history.append(snapshot(epoch, float(np.mean(losses))))
        log.info("epoch %d loss %.4f train %.3f val %.3f", epoch, history[-1]["loss"],
                 history[-1]["train_acc"], history[-1]["val_acc"])
    if checkpoint is not None:
        from ..model_io import save_model
        save_model(graph, checkpoint)
    return history
