"""Central finite-difference verification of backward()."""

from __future__ import annotations

import numpy as np

from commons_lab.nn.tensor import FrozenConstants, Tensor, backward


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def numeric_grad(f, x: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """d f / d x by central differences; ``f`` maps the array to a float and
    may read ``x`` in place."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        g[i] = (fp - fm) / (2.0 * eps)
    return grad


def check_gradients(loss_fn, params: dict, eps: float = 1e-4, max_entries: int | None = None,
                    rng: np.random.Generator | None = None, abs_floor: float = 1e-6) -> float:
    """Compare analytic and numeric gradients of ``loss_fn() -> scalar Tensor``.

    ``params`` maps names to float64 leaf Tensors read by ``loss_fn``. Values of
    stop-gradient and sampling nodes are frozen at the unperturbed point.
    Returns the maximum relative error; entries whose gradients are both below
    ``abs_floor`` are skipped. ``max_entries`` subsamples coordinates per tensor.
    """
    frozen = FrozenConstants()
    for p in params.values():
        p.grad = None
    with frozen.record():
        loss = loss_fn()
    backward(loss)
    worst = 0.0
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + eps
            with frozen.replay():
                fp = float(loss_fn().data)
            flat[i] = old - eps
            with frozen.replay():
                fm = float(loss_fn().data)
            flat[i] = old
            num = (fp - fm) / (2 * eps)
            ana = float(analytic.reshape(-1)[i])
            if max(abs(num), abs(ana)) < abs_floor:
                continue
            worst = max(worst, float(relative_error(np.float64(ana), np.float64(num))))
    return worst


def leaf(arr, name: str | None = None) -> Tensor:
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True, name=name)
