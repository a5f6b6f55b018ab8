import numpy as np
import pytest

from racnn import config, gradcheck
from racnn.errors import CacheError, NumericError, ShapeError
from racnn.gradcheck import numeric_grad, rel_error
from racnn.lowering import center_rows
from racnn.nn import (Graph, LayerSpec, TrainConfig, adam_step, alpha_summary, backward,
                      brightness_dataset, build_one_swap, build_toy_pair, evaluate, forward,
                      init_moments, layer_alpha_stats, loss_and_grads, predict, softmax_xent,
                      toy_specs, train)
from racnn.nn.layers import Conv, Dense, MaxPool2


def layer_grad_check(layer, x, rng):
    """Numeric vs analytic gradients for loss = sum(y * r) with a fixed random r."""
    y, _ = layer.forward(x)
    r = rng.uniform(-1, 1, y.shape)

    def loss():
        return float(np.sum(layer.forward(x)[0] * r))

    _, cache = layer.forward(x)
    gx, grads = layer.backward(cache, r)
    errs = {"x": rel_error(gx, numeric_grad(loss, x))}
    for name, value in layer.params().items():
        errs[name] = rel_error(grads[name], numeric_grad(loss, value))
    return errs


@pytest.mark.parametrize("k", [1, 3])
def test_conv_layer_gradients(rng, k):
    layer = Conv(3, 4, k, rng=rng, dtype=np.float64)
    errs = layer_grad_check(layer, rng.uniform(-1, 1, (2, 4, 5, 3)), rng)
    assert max(errs.values()) <= 1e-7, errs


def test_dense_layer_gradients(rng):
    layer = Dense(6, 3, rng=rng, dtype=np.float64)
    layer.b = rng.uniform(-1, 1, 3)
    errs = layer_grad_check(layer, rng.uniform(-1, 1, (4, 6)), rng)
    assert max(errs.values()) <= 1e-7, errs


def test_maxpool_forward_and_gradient(rng):
    pool = MaxPool2()
    x = rng.permutation(2 * 5 * 4 * 2).reshape(2, 5, 4, 2).astype(np.float64)
    y, cache = pool.forward(x)
    assert y.shape == (2, 2, 2, 2)
    for b in range(2):
        for i in range(2):
            for j in range(2):
                assert np.array_equal(y[b, i, j], x[b, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max(axis=(0, 1)))
    errs = layer_grad_check(pool, x + rng.uniform(0, 0.1, x.shape), rng)
    assert errs["x"] <= 1e-7
    with pytest.raises(ShapeError):
        pool.out_shape((1, 4, 2))


def test_softmax_xent_gradient(rng):
    logits = rng.uniform(-3, 3, (5, 4))
    labels = rng.integers(0, 4, 5)
    loss, grad = softmax_xent(logits, labels)
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    assert abs(loss + np.mean(np.log(p[np.arange(5), labels]))) <= 1e-12
    num = numeric_grad(lambda: softmax_xent(logits, labels)[0], logits)
    assert rel_error(grad, num) <= 1e-7
    # large logits must not overflow
    assert np.isfinite(softmax_xent(np.array([[1000.0, -1000.0]]), [1])[0])


@pytest.mark.parametrize("seed", range(4))
def test_toy_net_gradients(seed):
    errors = gradcheck.check_toy_net(seed)
    assert max(errors.values()) <= 1e-4, errors


def test_whole_toy_graph_gradients(rng):
    with config.precision("fp64"):
        g = Graph(toy_specs("racnn_conv", channels=(3, 4), classes=3), (6, 6, 2), seed=3,
                  alpha_bias=0.5)
    for _, layer in g.racnn_layers():
        layer.p.w_alpha = rng.uniform(-1, 1, layer.p.w_alpha.shape)
    g.touch()
    x = rng.uniform(0, 1, (2, 6, 6, 2))
    y = np.array([0, 2])
    _, grads = loss_and_grads(g, x, y)
    params = g.parameters()

    def loss():
        return softmax_xent(forward(g, x)[0], y)[0]

    for key in ("0.w1", "0.w3_hollow", "3.w_alpha", "7.w"):
        skip = None
        if key.endswith("w3_hollow"):
            skip = np.zeros(params[key].shape, bool)
            skip[center_rows(params[key].shape[0] // 9)] = True
        assert rel_error(grads[key], numeric_grad(loss, params[key], skip=skip)) <= 1e-4, key


def test_graph_shapes_and_seeds():
    std, rac = build_toy_pair((16, 16, 1), seed=4)
    assert std.shapes == rac.shapes
    assert std.shapes[-1] == (4,)
    assert len(rac.racnn_layers()) == 3 and not std.racnn_layers()
    # same seed, same 3x3 weights: with alpha pinned to 1 the graphs coincide
    for _, layer in rac.racnn_layers():
        layer.force_alpha(1.0)
    rac.touch()
    x = np.random.default_rng(0).uniform(0, 1, (3, 16, 16, 1)).astype(np.float32)
    np.testing.assert_allclose(forward(std, x)[0], forward(rac, x)[0], atol=1e-5)
    swap = build_one_swap((16, 16, 1), seed=4)
    assert [l.kind for l in swap.layers if "conv" in l.kind] == ["std_conv3", "racnn_conv", "racnn_conv"]


def test_graph_rejects_bad_specs():
    with pytest.raises(ValueError):
        LayerSpec("conv5")
    with pytest.raises(ValueError):
        Graph([LayerSpec("softmax_xent"), LayerSpec("relu")], (4, 4, 1))
    with pytest.raises(ShapeError):
        Graph([LayerSpec("std_conv3", d=2, f=3)], (4, 4, 1))
    g = Graph(toy_specs(channels=(2,), classes=2), (4, 4, 1))
    with pytest.raises(ShapeError):
        forward(g, np.zeros((1, 5, 4, 1)))


def test_stale_and_sparse_caches_rejected(rng):
    g = Graph(toy_specs("racnn_conv", channels=(2,), classes=2), (4, 4, 1))
    x = rng.uniform(0, 1, (2, 4, 4, 1)).astype(np.float32)
    _, caches = forward(g, x)
    g.set_parameters(g.parameters())
    with pytest.raises(CacheError):
        backward(g, caches, [0, 1])
    _, caches = forward(g, x, sparse=True)
    with pytest.raises(CacheError):
        backward(g, caches, [0, 1])
    with pytest.raises(CacheError):
        backward(g, None, [0, 1])


def test_sparse_and_dense_predictions_agree(rng):
    _, rac = build_toy_pair((16, 16, 1), seed=2, alpha_bias=0.0)
    x = rng.uniform(0, 1, (8, 16, 16, 1)).astype(np.float32)
    dense, _ = forward(rac, x)
    sparse, _ = forward(rac, x, sparse=True)
    assert np.abs(dense - sparse).max() <= 1e-4
    assert np.array_equal(predict(rac, x), predict(rac, x, sparse=True))


# -- Adam -----------------------------------------------------------------------

def adam_reference(theta, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return theta


def test_adam_matches_scalar_reference():
    cfg = TrainConfig(learning_rate=1e-2)
    params = {"w": np.array([0.5, -1.0])}
    moments = init_moments(params)
    seq = [np.array([0.1, -2.0]), np.array([0.3, 1.0]), np.array([-0.2, 0.5])]
    for t, g in enumerate(seq, start=1):
        params, moments = adam_step(params, {"w": g}, moments, t, cfg)
    for i in range(2):
        assert abs(params["w"][i] - adam_reference(np.array([0.5, -1.0])[i], [g[i] for g in seq], lr=1e-2)) <= 1e-12


def test_adam_keeps_hollow_centre_zero_and_freezes(rng):
    w3 = rng.uniform(-1, 1, (18, 3))
    w3[center_rows(2)] = 0
    params = {"0.w3_hollow": w3, "0.b_alpha": np.asarray(0.5)}
    grads = {k: np.ones_like(v) for k, v in params.items()}
    cfg = TrainConfig(learning_rate=0.1, frozen=("b_alpha",))
    new, _ = adam_step(params, grads, init_moments(params), 1, cfg)
    assert not new["0.w3_hollow"][center_rows(2)].any()
    assert float(new["0.b_alpha"]) == 0.5
    assert not np.array_equal(new["0.w3_hollow"], w3)


def test_adam_errors():
    params = {"w": np.zeros(2)}
    with pytest.raises(NumericError):
        adam_step(params, {"w": np.array([np.inf, 0])}, init_moments(params), 1, TrainConfig())
    with pytest.raises(ValueError):
        adam_step(params, {"w": np.zeros(2)}, init_moments(params), 0, TrainConfig())
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1)
    with pytest.raises(ValueError):
        TrainConfig(beta1=1.0)
    # lr 0 freezes everything
    new, _ = adam_step({"w": np.ones(2)}, {"w": np.ones(2)}, init_moments(params), 1,
                       TrainConfig(learning_rate=0))
    assert new["w"].tolist() == [1.0, 1.0]


# -- training -------------------------------------------------------------------

def small_graph(kind="racnn_conv", seed=0):
    return Graph(toy_specs(kind, channels=(4,), classes=2), (4, 4, 1), seed=seed)


def test_training_learns_separable_data():
    ds = brightness_dataset(n=120, size=4, seed=1)
    g = small_graph()
    hist = train(g, ds, TrainConfig(learning_rate=3e-2, epochs=8, batch_size=16, seed=1))
    assert len(hist) == 9 and hist[0]["loss"] is None
    assert hist[-1]["val_acc"] >= 0.95
    assert hist[-1]["loss"] < hist[1]["loss"]
    assert set(hist[-1]["alpha"]) == {"0"}


def test_training_is_deterministic():
    ds = brightness_dataset(n=64, size=4, seed=2)
    cfg = TrainConfig(learning_rate=1e-2, epochs=3, batch_size=8, seed=5)
    runs = []
    for _ in range(2):
        g = small_graph(seed=5)
        runs.append((train(g, ds, cfg), g.parameters()))
    assert runs[0][0] == runs[1][0]
    for k in runs[0][1]:
        assert np.array_equal(runs[0][1][k], runs[1][1][k])


def test_evaluate_and_alpha_tables(rng):
    g = small_graph()
    x = rng.uniform(0, 1, (10, 4, 4, 1)).astype(np.float32)
    y = rng.integers(0, 2, 10)
    acc = evaluate(g, x, y, batch_size=3)
    assert 0 <= acc <= 1
    assert acc == np.mean(predict(g, x) == y)
    with pytest.raises(ValueError):
        evaluate(g, x[:0], y[:0])
    summary = alpha_summary(g, x, batch_size=3)["0"]
    stats = layer_alpha_stats(g, x, batch_size=3)[0]
    assert summary["alpha_zero"] == stats.fraction_alpha_zero
    assert abs(sum(summary.values()) - 1) <= 1e-12
    assert alpha_summary(small_graph("std_conv3"), x) == {}


def test_adam_first_step_is_lr_times_sign():
    new, _ = adam_step({"w": np.array([0.0])}, {"w": np.array([0.5])},
                       init_moments({"w": np.zeros(1)}), 1, TrainConfig(learning_rate=1e-4))
    assert abs(new["w"][0] + 1e-4) <= 1e-9


def test_zero_learning_rate_keeps_the_baseline():
    ds = brightness_dataset(n=48, size=4, seed=3)
    g = small_graph(seed=3)
    before = {k: v.copy() for k, v in g.parameters().items()}
    hist = train(g, ds, TrainConfig(learning_rate=0.0, epochs=3, batch_size=8))
    assert len({h["val_acc"] for h in hist}) == 1
    for k, v in g.parameters().items():
        assert np.array_equal(v, before[k])
