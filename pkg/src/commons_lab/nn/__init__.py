"""Small numpy autodiff substrate: tensors, layers, Adam, gradient checks."""

from commons_lab.nn.functional import (
    categorical_entropy,
    categorical_kl,
    dense,
    gru_cell,
    mse,
    onehot,
    sample_categorical_st,
    softmax_logits,
)
from commons_lab.nn.params import GRU, MLP, Dense, ParamStore, adam_step, clip_grad_norm
from commons_lab.nn.tensor import (
    FrozenConstants,
    Tensor,
    backward,
    concat,
    elu,
    no_grad,
    stop_gradient,
    topological_order,
)

__all__ = [
    "categorical_entropy", "categorical_kl", "dense", "gru_cell", "mse", "onehot",
    "sample_categorical_st", "softmax_logits", "GRU", "MLP", "Dense", "ParamStore",
    "adam_step", "clip_grad_norm", "FrozenConstants", "Tensor", "backward", "concat", "elu",
    "no_grad", "stop_gradient", "topological_order",
]
