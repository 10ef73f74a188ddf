"""Parameter storage, layer helpers and the Adam optimizer."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from commons_lab.errors import UsageError
from commons_lab.nn.functional import dense, gru_cell
from commons_lab.nn.tensor import Tensor, elu


class ParamStore:
    """Named parameters plus their gradients and Adam moments.

    Gradients live on each parameter's ``.grad``; moments in ``m``/``v``.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: OrderedDict[str, Tensor] = OrderedDict()
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise UsageError(f"duplicate parameter name {name!r}")
        p = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True, name=name)
        self.params[name] = p
        return p

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self):
        return len(self.params)

    def names(self, prefix: str = "") -> list:
        return [n for n in self.params if n.startswith(prefix)]

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.params.values():
            p.requires_grad = flag

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def grads(self) -> dict:
        return {n: (np.zeros_like(p.data) if p.grad is None else p.grad)
                for n, p in self.params.items()}

    def grad_norm(self, prefix: str = "") -> float:
        total = 0.0
        for n, p in self.params.items():
            if n.startswith(prefix) and p.grad is not None:
                total += float(np.sum(p.grad.astype(np.float64) ** 2))
        return float(np.sqrt(total))

    def state_dict(self) -> dict:
        return {n: p.data.copy() for n, p in self.params.items()}

    def load_state_dict(self, values: dict, strict: bool = True) -> None:
        if strict:
            missing = set(self.params) - set(values)
            extra = set(values) - set(self.params)
            if missing or extra:
                raise UsageError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for n, arr in values.items():
            if n not in self.params:
                continue
            p = self.params[n]
            if tuple(arr.shape) != p.shape:
                raise UsageError(f"parameter {n!r}: checkpoint shape {tuple(arr.shape)} vs model shape {p.shape}")
            p.data = np.asarray(arr, dtype=self.dtype).copy()

    def copy_from(self, other: "ParamStore", prefix_map: tuple | None = None) -> None:
        """Copy values (not moments) from ``other``; optional (src, dst) prefix rename."""
        for n, p in other.params.items():
            dst = n
            if prefix_map is not None:
                src, dst_prefix = prefix_map
                if not n.startswith(src):
                    continue
                dst = dst_prefix + n[len(src):]
            self.params[dst].data = p.data.astype(self.dtype, copy=True)

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore(dtype)
        for n, p in self.params.items():
            out.add(n, p.data)
        return out


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Dense:
    def __init__(self, store: ParamStore, name: str, fan_in: int, fan_out: int,
                 rng: np.random.Generator, scale: float = 1.0):
        self.W = store.add(f"{name}.W", glorot(rng, fan_in, fan_out) * scale)
        self.b = store.add(f"{name}.b", np.zeros(fan_out))

    def __call__(self, x):
        return dense(x, self.W, self.b)


class MLP:
    """Dense layers with ELU between them; the last layer is linear."""

    def __init__(self, store: ParamStore, name: str, sizes, rng: np.random.Generator,
                 out_scale: float = 1.0):
        self.layers = [
            Dense(store, f"{name}.{i}", a, b, rng, scale=out_scale if i == len(sizes) - 2 else 1.0)
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = elu(x)
        return x


class GRU:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_hid: int, rng: np.random.Generator):
        self.W = store.add(f"{name}.W", glorot(rng, n_in + n_hid, 2 * n_hid))
        # bias the update gate towards keeping state, as is common
        b = np.zeros(2 * n_hid)
        b[n_hid:] = -1.0
        self.b = store.add(f"{name}.b", b)
        self.Wn = store.add(f"{name}.Wn", glorot(rng, n_in, n_hid))
        self.Un = store.add(f"{name}.Un", glorot(rng, n_hid, n_hid))
        self.bn = store.add(f"{name}.bn", np.zeros(n_hid))

    def __call__(self, h, x):
        return gru_cell(h, x, self.W, self.b, self.Wn, self.Un, self.bn)


def clip_grad_norm(store: ParamStore, max_norm: float, prefix: str = "") -> float:
    norm = store.grad_norm(prefix)
    if norm > max_norm > 0:
        scale = max_norm / (norm + 1e-12)
        for n, p in store.params.items():
            if n.startswith(prefix) and p.grad is not None:
                p.grad = p.grad * scale
    return norm


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, prefix: str = "") -> None:
    """Bias-corrected Adam update of every parameter under ``prefix`` that has a gradient.

    The step counter is shared by the store; use one store per optimizer.
    """
    store.step_count += 1
    t = store.step_count
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for n, p in store.params.items():
        if not n.startswith(prefix) or p.grad is None:
            continue
        g = p.grad
        m = store.m.get(n)
        if m is None:
            m = np.zeros_like(p.data)
            store.v[n] = np.zeros_like(p.data)
        v = store.v[n]
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        store.m[n], store.v[n] = m, v
        p.data = (p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(store.dtype)
