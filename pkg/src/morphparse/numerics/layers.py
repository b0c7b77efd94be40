"""Neural building blocks on top of the autodiff core."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Parameter, Tensor


class ParamStore:
    """Ordered registry of named parameters with deterministic initialisation."""

    def __init__(self, seed: int = 0, dtype=None):
        self.rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype) if dtype is not None else ad.get_default_dtype()
        self._params: dict[str, Parameter] = {}

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def add(self, name: str, shape: Sequence[int], init: str | float = "glorot") -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        shape = tuple(int(s) for s in shape)
        if isinstance(init, (int, float)):
            value = np.full(shape, float(init))
        elif init == "zeros":
            value = np.zeros(shape)
        elif init == "glorot":
            if len(shape) == 1:
                fan_in = fan_out = shape[0]
            else:
                fan_out, fan_in = shape[0], int(np.prod(shape[1:]))
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            value = self.rng.uniform(-limit, limit, size=shape)
        elif init == "normal":
            value = self.rng.normal(0.0, 0.1, size=shape)
        else:
            raise ValueError(f"unknown initialiser {init!r}")
        p = Parameter(name, value.astype(self.dtype))
        self._params[name] = p
        return p

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        if missing:
            raise KeyError(f"state is missing parameters: {sorted(missing)}")
        for name, p in self._params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise DimensionError(f"parameter {name}: stored shape {value.shape} != model shape {p.shape}")
            p.data = value.astype(self.dtype).copy()


class Linear:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int, bias: bool = True):
        self.W = store.add(f"{name}.W", (n_out, n_in))
        self.b = store.add(f"{name}.b", (n_out,), "zeros") if bias else None
        self.n_in, self.n_out = n_in, n_out

    def __call__(self, x: Tensor) -> Tensor:
        return ad.affine(x, self.W, self.b)


class Embedding:
    def __init__(self, store: ParamStore, name: str, n: int, dim: int, init="normal"):
        self.table = store.add(f"{name}.E", (n, dim), init)
        self.dim = dim

    def __call__(self, ids) -> Tensor:
        return ad.take_rows(self.table, ids)


@dataclass
class LSTMParams:
    Wx: Parameter  # (4H, D)
    Wh: Parameter  # (4H, H)
    b: Parameter  # (4H,)

    @property
    def hidden(self) -> int:
        return self.Wh.shape[1]

    @property
    def n_in(self) -> int:
        return self.Wx.shape[1]


def lstm_params(store: ParamStore, name: str, n_in: int, hidden: int) -> LSTMParams:
    b = store.add(f"{name}.b", (4 * hidden,), "zeros")
    b.data[hidden : 2 * hidden] = 1.0  # forget-gate bias
    return LSTMParams(
        Wx=store.add(f"{name}.Wx", (4 * hidden, n_in)),
        Wh=store.add(f"{name}.Wh", (4 * hidden, hidden)),
        b=b,
    )


def lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor, params: LSTMParams) -> tuple[Tensor, Tensor]:
    """One LSTM recurrence step on (..., D) inputs."""
    H = params.hidden
    if x.shape[-1] != params.n_in:
        raise DimensionError(f"lstm_step: input width {x.shape[-1]} != declared {params.n_in}")
    if h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise DimensionError(f"lstm_step: state shapes {h_prev.shape}, {c_prev.shape} != hidden {H}")
    pre = ad.add(ad.affine(x, params.Wx, params.b), ad.affine(h_prev, params.Wh))
    hc = ad.lstm_cell(pre, c_prev)
    return hc[..., :H], hc[..., H:]


def run_lstm(X: Tensor, params: LSTMParams) -> list[Tensor]:
    """Run a unidirectional LSTM over a time-major (T, B, D) tensor.

    Returns the T hidden states, each (B, H). Padding at the end of shorter
    columns only affects states after their true length.
    """
    T, B = X.shape[0], X.shape[1]
    H = params.hidden
    xw = ad.affine(X, params.Wx, params.b)
    steps = ad.unstack(xw, 0)
    zeros = Tensor(np.zeros((B, H), dtype=X.dtype))
    h, c = zeros, zeros
    out = []
    for t in range(T):
        pre = ad.add(steps[t], ad.affine(h, params.Wh)) if t else steps[t]
        hc = ad.lstm_cell(pre, c)
        h, c = hc[:, :H], hc[:, H:]
        out.append(h)
    return out


class BiLSTM:
    """Stacked bidirectional LSTM; each layer outputs ``[h_f; h_b]``."""

    def __init__(self, store: ParamStore, name: str, n_in: int, hidden: int, layers: int = 1):
        if layers < 1:
            raise ValueError("need at least one layer")
        self.hidden, self.n_layers = hidden, layers
        self.fwd: list[LSTMParams] = []
        self.bwd: list[LSTMParams] = []
        for k in range(layers):
            d = n_in if k == 0 else 2 * hidden
            self.fwd.append(lstm_params(store, f"{name}.l{k}.fwd", d, hidden))
            self.bwd.append(lstm_params(store, f"{name}.l{k}.bwd", d, hidden))

    @property
    def out_dim(self) -> int:
        return 2 * self.hidden

    def layer(self, k: int, X: Tensor, lengths) -> Tensor:
        """Apply layer ``k`` to time-major (T, B, D); returns (T, B, 2H)."""
        hf = ad.stack(run_lstm(X, self.fwd[k]), 0)
        Xr = ad.reverse_padded(X, lengths)
        hb = ad.reverse_padded(ad.stack(run_lstm(Xr, self.bwd[k]), 0), lengths)
        return ad.concat([hf, hb], axis=-1)

    def run(self, X: Tensor, lengths, return_all: bool = False):
        """All layers over time-major (T, B, D). With ``return_all`` the
        per-layer outputs are returned as a list."""
        outs = []
        for k in range(self.n_layers):
            X = self.layer(k, X, lengths)
            outs.append(X)
        return outs if return_all else X

    def final_states(self, X: Tensor, lengths) -> Tensor:
        """Concatenated last forward and backward states of the top layer, (B, 2H).

        Used for subword composition: the forward state after the last unit
        and the backward state after the first unit.
        """
        lengths = np.asarray(lengths)
        B = X.shape[1]
        for k in range(self.n_layers - 1):
            X = self.layer(k, X, lengths)
        k = self.n_layers - 1
        cols = np.arange(B)
        hf = ad.stack(run_lstm(X, self.fwd[k]), 0)[lengths - 1, cols]
        Xr = ad.reverse_padded(X, lengths)
        hb = ad.stack(run_lstm(Xr, self.bwd[k]), 0)[lengths - 1, cols]
        return ad.concat([hf, hb], axis=-1)

    def __call__(self, xs: Sequence[Tensor]) -> list[Tensor]:
        """Single-sequence convenience: list of (D,) vectors -> list of (2H,)."""
        if len(xs) == 0:
            raise ValueError("bilstm needs a non-empty sequence")
        X = ad.reshape(ad.stack(list(xs), 0), (len(xs), 1, xs[0].shape[-1]))
        Y = self.run(X, [len(xs)])
        return [Y[t, 0] for t in range(len(xs))]


def bilstm(xs: Sequence[Tensor], net: BiLSTM) -> list[Tensor]:
    """Run ``net`` over a single sequence of (D,) vectors."""
    return net(xs)


class Highway:
    """``t * relu(W_H y) + (1 - t) * y`` with transform gate ``t``."""

    def __init__(self, store: ParamStore, name: str, dim: int):
        self.H = Linear(store, f"{name}.H", dim, dim)
        self.T = Linear(store, f"{name}.T", dim, dim)
        self.T.b.data[:] = -2.0

    def __call__(self, y: Tensor) -> Tensor:
        t = ad.sigmoid(self.T(y))
        return ad.add(ad.mul(t, ad.relu(self.H(y))), ad.mul(ad.sub(1.0, t), y))


class MLP:
    """ReLU feed-forward stack ending in a linear layer (logits)."""

    def __init__(self, store: ParamStore, name: str, sizes: Sequence[int], dropout: float = 0.0):
        self.layers = [Linear(store, f"{name}.{k}", a, b) for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))]
        self.dropout = dropout

    def __call__(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        for k, layer in enumerate(self.layers):
            x = layer(x)
            if k < len(self.layers) - 1:
                x = ad.dropout(ad.relu(x), self.dropout, training, rng)
        return x
