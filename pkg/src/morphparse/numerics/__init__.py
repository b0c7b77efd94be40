"""Dense numerics: reverse-mode autodiff, layers, and Adam."""

from .autodiff import (
    DimensionError,
    Parameter,
    Tensor,
    backward,
    default_dtype,
    dropout,
    get_default_dtype,
    no_grad,
    reset_tape,
    set_default_dtype,
    softmax_cross_entropy,
)
from .autodiff import affine
from .layers import MLP, BiLSTM, Embedding, Highway, Linear, LSTMParams, ParamStore, bilstm, lstm_params, lstm_step
from .optim import AdamState, adam_step, clip_gradients, global_norm

__all__ = [
    "AdamState",
    "BiLSTM",
    "DimensionError",
    "Embedding",
    "Highway",
    "LSTMParams",
    "Linear",
    "MLP",
    "ParamStore",
    "Parameter",
    "Tensor",
    "adam_step",
    "affine",
    "backward",
    "bilstm",
    "clip_gradients",
    "default_dtype",
    "dropout",
    "get_default_dtype",
    "global_norm",
    "lstm_params",
    "lstm_step",
    "no_grad",
    "reset_tape",
    "set_default_dtype",
    "softmax_cross_entropy",
]
