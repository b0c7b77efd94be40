"""Adam with global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .autodiff import Parameter


@dataclass
class AdamState:
    lr: float = 0.001
    clip: float | None = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def global_norm(params: Iterable[Parameter]) -> float:
    return float(np.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params)))


def clip_gradients(params: list[Parameter], max_norm: float) -> float:
    """Rescale grads in place so their global norm is at most ``max_norm``.
    Returns the pre-clip norm."""
    norm = global_norm(params)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad = p.grad * scale
    return norm


def adam_step(state: AdamState, params: Iterable[Parameter]) -> None:
    params = list(params)
    if not params:
        return
    if state.clip is not None:
        clip_gradients(params, state.clip)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p in params:
        g = p.grad
        m = state.m.get(p.name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        else:
            v = state.v[p.name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[p.name], state.v[p.name] = m, v
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - update).astype(p.data.dtype, copy=False)
