"""Network building blocks composed from the autodiff primitives."""

from __future__ import annotations

import numpy as np

from commons_lab.errors import UsageError
from commons_lab.nn.tensor import (
    Tensor,
    as_tensor,
    concat,
    elu,
    exp,
    frozen_through,
    log_softmax,
    matmul,
    mean,
    sigmoid,
    softmax,
    square,
    stop_gradient,
    tanh,
    tsum,
)

__all__ = [
    "dense", "elu", "softmax_logits", "gru_cell", "mse", "categorical_kl",
    "sample_categorical_st", "categorical_entropy", "onehot",
]


def dense(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    x = as_tensor(x)
    if x.shape[-1] != W.shape[0]:
        raise UsageError(f"dense: input shape {x.shape} incompatible with weight shape {W.shape}")
    y = matmul(x, W)
    return y if b is None else y + b


def softmax_logits(x: Tensor) -> Tensor:
    return softmax(x, axis=-1)


def gru_cell(h: Tensor, x: Tensor, W: Tensor, b: Tensor, Wn: Tensor, Un: Tensor, bn: Tensor) -> Tensor:
    """Gated recurrent unit.

    ``W`` maps concat(x, h) to the [reset, update] gate pre-activations
    (shape (in + hid, 2 * hid)); the candidate is tanh(x Wn + r * (h Un + bn)).
    Output: (1 - u) * candidate + u * h.
    """
    h, x = as_tensor(h), as_tensor(x)
    hid = h.shape[-1]
    if W.shape != (x.shape[-1] + hid, 2 * hid):
        raise UsageError(f"gru_cell: gate weight {W.shape} does not fit x {x.shape} and h {h.shape}")
    gates = sigmoid(dense(concat([x, h], axis=-1), W, b))
    r = gates[..., :hid]
    u = gates[..., hid:]
    cand = tanh(matmul(x, Wn) + r * (matmul(h, Un) + bn))
    return (1.0 - u) * cand + u * h


def mse(x: Tensor, y) -> Tensor:
    """Mean over all elements of (x - y)^2."""
    x, y = as_tensor(x), as_tensor(y, dtype=as_tensor(x).dtype)
    if x.shape != y.shape:
        raise UsageError(f"mse: shape mismatch {x.shape} vs {y.shape}")
    return mean(square(x - y))


def categorical_kl(p_logits: Tensor, q_logits: Tensor) -> Tensor:
    """KL(p || q) per group (summed over the last axis), from log-softmax."""
    p_logits, q_logits = as_tensor(p_logits), as_tensor(q_logits)
    if p_logits.shape != q_logits.shape:
        raise UsageError(f"categorical_kl: shape mismatch {p_logits.shape} vs {q_logits.shape}")
    logp = log_softmax(p_logits)
    logq = log_softmax(q_logits)
    return tsum(exp(logp) * (logp - logq), axis=-1)


def categorical_entropy(logits: Tensor) -> Tensor:
    logp = log_softmax(logits)
    return -tsum(exp(logp) * logp, axis=-1)


def onehot(index, k: int, dtype=np.float32) -> np.ndarray:
    index = np.asarray(index)
    out = np.zeros(index.shape + (k,), dtype=dtype)
    np.put_along_axis(out, index[..., None], 1.0, axis=-1)
    return out


def sample_index(logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF categorical draw over the last axis, one uniform per row."""
    z = logits - logits.max(axis=-1, keepdims=True)
    p = np.exp(z.astype(np.float64))
    cdf = np.cumsum(p, axis=-1)
    u = rng.random(logits.shape[:-1] + (1,)) * cdf[..., -1:]
    idx = (cdf <= u).sum(axis=-1)
    return np.minimum(idx, logits.shape[-1] - 1)


def sample_categorical_st(logits: Tensor, rng: np.random.Generator) -> Tensor:
    """One-hot sample per group with the straight-through gradient.

    Forward value is the one-hot draw; backward treats the output as
    softmax(logits): out = sample + probs - stop_gradient(probs).
    """
    logits = as_tensor(logits)
    idx = sample_index(logits.data, rng)
    sample = frozen_through(onehot(idx, logits.shape[-1], logits.dtype))
    probs = softmax(logits)
    # p - stop_gradient(p) is exactly zero, so the forward value is the one-hot
    return Tensor(sample) + (probs - stop_gradient(probs))
