import struct

import numpy as np
import pytest
from scipy import stats

from commons_lab.errors import IncompatibleCheckpointError, UsageError
from commons_lab.nn import (MLP, ParamStore, Tensor, adam_step, backward, categorical_kl, dense, elu, gru_cell, mse,
                            no_grad, sample_categorical_st, softmax_logits, stop_gradient)
from commons_lab.nn import checkpoint as ckpt
from commons_lab.nn import tensor as T
from commons_lab.nn.gradcheck import check_gradients, leaf, numeric_grad, relative_error
from commons_lab.nn.functional import categorical_entropy

SEEDS = range(10)


def _leaves(rng, **shapes):
    return {k: leaf(rng.normal(size=s)) for k, s in shapes.items()}


# every differentiable op: (parameter shapes, loss builder)
OPS = {
    "add": (dict(a=(3, 4), b=(4,)), lambda p: (p["a"] + p["b"]).sum()),
    "sub": (dict(a=(3, 4), b=(3, 1)), lambda p: T.tsum(T.square(p["a"] - p["b"]))),
    "mul": (dict(a=(3, 4), b=(3, 4)), lambda p: (p["a"] * p["b"]).sum()),
    "div": (dict(a=(3, 4), b=(3, 4)), lambda p: (p["a"] / (T.exp(p["b"]) + 1.0)).sum()),
    "exp": (dict(a=(5,)), lambda p: T.exp(p["a"]).sum()),
    "log": (dict(a=(5,)), lambda p: T.log(T.exp(p["a"]) + 0.5).sum()),
    "tanh": (dict(a=(2, 3)), lambda p: T.tanh(p["a"]).sum()),
    "sigmoid": (dict(a=(2, 3)), lambda p: (T.sigmoid(p["a"]) * p["a"]).sum()),
    "elu": (dict(a=(4, 4)), lambda p: (elu(p["a"]) * elu(p["a"])).sum()),
    "square_mean": (dict(a=(3, 5)), lambda p: T.mean(T.square(p["a"]), axis=0).sum()),
    "minimum": (dict(a=(6,), b=(6,)), lambda p: T.minimum(p["a"], p["b"]).sum()),
    "clip": (dict(a=(8,)), lambda p: (T.clip(p["a"], -0.7, 0.7) * p["a"]).sum()),
    "reshape_transpose": (dict(a=(2, 6)), lambda p: (T.transpose(T.reshape(p["a"], (3, 4))) @
                                                    T.reshape(p["a"], (3, 4))).sum()),
    "getitem": (dict(a=(4, 5)), lambda p: T.square(p["a"][1:3, ::2]).sum()),
    "concat_stack": (dict(a=(2, 3), b=(2, 2)), lambda p: T.square(T.stack([T.concat([p["a"], p["b"]], -1)] * 2, 0)).sum()),
    "take_along_last": (dict(a=(4, 5)), lambda p: T.square(T.take_along_last(p["a"], np.array([0, 4, 2, 2]))).sum()),
    "matmul": (dict(a=(3, 4), b=(4, 2)), lambda p: T.square(p["a"] @ p["b"]).sum()),
    "dense": (dict(x=(3, 5), W=(5, 4), b=(4,)), lambda p: T.square(dense(p["x"], p["W"], p["b"])).sum()),
    "softmax": (dict(a=(3, 6)), lambda p: (softmax_logits(p["a"]) * np.arange(6.0)).sum()),
    "log_softmax": (dict(a=(3, 6)), lambda p: (T.log_softmax(p["a"]) * np.arange(6.0)).sum()),
    "mse": (dict(a=(16,)), lambda p: mse(p["a"], np.linspace(-1, 1, 16))),
    "categorical_kl": (dict(p=(2, 3, 4), q=(2, 3, 4)), lambda p: categorical_kl(p["p"], p["q"]).sum()),
    "entropy": (dict(a=(3, 5)), lambda p: categorical_entropy(p["a"]).sum()),
    "gru_cell": (dict(h=(2, 3), x=(2, 4), W=(7, 6), b=(6,), Wn=(4, 3), Un=(3, 3), bn=(3,)),
                 lambda p: T.square(gru_cell(p["h"], p["x"], p["W"], p["b"], p["Wn"], p["Un"], p["bn"])).sum()),
    "stop_gradient": (dict(a=(5,)), lambda p: (p["a"] * stop_gradient(p["a"])).sum()),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_match_finite_differences(name):
    shapes, fn = OPS[name]
    for seed in SEEDS:
        params = _leaves(np.random.default_rng(seed), **shapes)
        assert check_gradients(lambda: fn(params), params, eps=1e-4) < 1e-4, f"seed {seed}"


def test_straight_through_gradient_matches_finite_differences():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        p = _leaves(rng, logits=(2, 3, 4), w=(2, 3, 4))
        draw = np.random.default_rng(100 + seed)
        assert check_gradients(lambda: (sample_categorical_st(p["logits"], draw) * p["w"]).sum(), p) < 1e-4


def test_mse_gradient_relative_error_below_1e6():
    rng = np.random.default_rng(0)
    x = leaf(rng.normal(size=16))
    y = rng.normal(size=16)
    loss = mse(x, y)
    backward(loss)
    num = numeric_grad(lambda: float(mse(Tensor(x.data), y).data), x.data, eps=1e-4)
    assert relative_error(x.grad, num).max() < 1e-6


def test_two_layer_network_gradient():
    rng = np.random.default_rng(3)
    store = ParamStore(np.float64)
    net = MLP(store, "net", [6, 8, 3], rng)
    x = rng.normal(size=(5, 6))
    params = dict(iter(store))
    assert check_gradients(lambda: T.square(net(Tensor(x))).sum(), params) < 1e-4


def test_dense_identity():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    out = dense(x, Tensor(np.eye(3)), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(out.data, x.data)


def test_dense_shape_mismatch_names_both_shapes():
    with pytest.raises(UsageError, match=r"\(2, 3\).*\(4, 2\)"):
        dense(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


def test_kl_of_identical_logits_is_zero():
    p = Tensor(np.random.default_rng(0).normal(size=(4, 8, 8)))
    np.testing.assert_allclose(categorical_kl(p, p).data, 0.0, atol=1e-12)


def test_softmax_and_kl_translation_invariant():
    rng = np.random.default_rng(1)
    p, q = rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
    shift = rng.normal(size=(3, 1)) * 10
    s0 = softmax_logits(Tensor(p)).data
    s1 = softmax_logits(Tensor(p + shift)).data
    assert np.abs(s0 - s1).max() < 1e-6
    k0 = categorical_kl(Tensor(p), Tensor(q)).data
    k1 = categorical_kl(Tensor(p + shift), Tensor(q - shift)).data
    assert np.abs(k0 - k1).max() < 1e-6


def test_sample_st_forward_is_one_hot():
    rng = np.random.default_rng(0)
    out = sample_categorical_st(Tensor(rng.normal(size=(5, 8, 8))), rng).data
    assert np.all(out.sum(-1) == 1.0)
    assert np.all((out != 0).sum(-1) == 1)


def test_sample_st_extreme_logit_is_deterministic():
    logits = np.zeros((3, 6))
    logits[:, 4] = 1e9
    out = sample_categorical_st(Tensor(logits), np.random.default_rng(0)).data
    assert np.all(out.argmax(-1) == 4)


def test_sample_st_frequencies_match_softmax():
    logits = np.array([0.3, -1.0, 1.2, 0.0, -0.4])
    probs = np.exp(logits) / np.exp(logits).sum()
    n = 100_000
    rng = np.random.default_rng(0)
    draws = sample_categorical_st(Tensor(np.tile(logits, (n, 1))), rng).data.argmax(-1)
    counts = np.bincount(draws, minlength=5)
    for k in range(5):
        lo, hi = stats.binom.interval(0.99, n, probs[k])
        assert lo <= counts[k] <= hi


def test_backward_of_sum_gives_ones():
    W = leaf(np.random.default_rng(0).normal(size=(3, 4)))
    backward(W.sum())
    np.testing.assert_array_equal(W.grad, np.ones((3, 4)))


def test_backward_accumulates_and_zeroing():
    store = ParamStore(np.float64)
    W = store.add("W", np.ones(3))
    backward(W.sum())
    backward(W.sum())
    np.testing.assert_array_equal(W.grad, 2 * np.ones(3))
    store.zero_grad()
    assert W.grad is None
    np.testing.assert_array_equal(store.grads()["W"], np.zeros(3))


def test_unused_parameter_has_zero_gradient():
    store = ParamStore(np.float64)
    a = store.add("a", np.ones(3))
    store.add("b", np.ones(2))
    backward(T.square(a).sum())
    np.testing.assert_array_equal(store.grads()["b"], np.zeros(2))


def test_backward_on_non_scalar_is_usage_error():
    with pytest.raises(UsageError):
        backward(leaf(np.ones(3)) * 2.0)


def test_backward_visits_each_node_once():
    x = leaf(np.ones(2))
    y = x * x
    z = y + y
    order = T.topological_order(z.sum())
    assert len(order) == len({id(n) for n in order})


def test_no_grad_builds_no_graph():
    x = leaf(np.ones(2))
    with no_grad():
        y = T.square(x).sum()
    assert not y.parents


def _quadratic_store(x0):
    store = ParamStore(np.float64)
    x = store.add("x", np.array([x0]))
    return store, x


def test_adam_first_step_on_quadratic():
    store, x = _quadratic_store(1.0)
    backward(T.square(x).sum())
    adam_step(store, lr=0.1)
    assert x.data[0] == pytest.approx(0.9, abs=1e-6)
    assert store.step_count == 1


def test_adam_zero_gradient_leaves_parameters():
    store, x = _quadratic_store(1.0)
    x.grad = np.zeros(1)
    adam_step(store, lr=0.1)
    assert x.data[0] == 1.0


def test_adam_converges_on_quadratic():
    store, x = _quadratic_store(1.0)
    for _ in range(2000):
        store.zero_grad()
        backward(T.square(x).sum())
        adam_step(store, lr=0.01)
    assert abs(x.data[0]) < 1e-3


def test_checkpoint_round_trip_and_layout(tmp_path):
    tensors = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b.c": np.array([1.5], np.float32)}
    blob = ckpt.dumps(tensors, {"kind": "test"})
    assert blob[:4] == b"CLNN"
    assert struct.unpack("<I", blob[4:8])[0] == 1
    meta_len = struct.unpack("<I", blob[8:12])[0]
    off = 12 + meta_len
    assert struct.unpack("<I", blob[off:off + 4])[0] == 2
    name_len = struct.unpack("<H", blob[off + 4:off + 6])[0]
    assert blob[off + 6:off + 6 + name_len] == b"a"
    back, meta = ckpt.loads(blob)
    assert meta == {"kind": "test"}
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k])
    ckpt.save(tmp_path / "x.ckpt", tensors)
    np.testing.assert_array_equal(ckpt.load(tmp_path / "x.ckpt")[0]["a"], tensors["a"])


def test_checkpoint_rejects_garbage():
    with pytest.raises(IncompatibleCheckpointError):
        ckpt.loads(b"NOPE" + b"\0" * 20)
