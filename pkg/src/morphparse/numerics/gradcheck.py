"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def numeric_grad(f: Callable[[], Tensor], x: Tensor, h: float = 1e-5) -> np.ndarray:
    """d f / d x by central differences; ``f`` must return a scalar tensor."""
    grad = np.zeros_like(x.data, dtype=np.float64)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    with ad.no_grad():
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            fp = float(f().data)
            flat[k] = old - h
            fm = float(f().data)
            flat[k] = old
            gflat[k] = (fp - fm) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-wise relative error ``|a - b| / max(|a|, |b|)`` (0 when both vanish)."""
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(f: Callable[[], Tensor], wrt: Sequence[Tensor], h: float = 1e-5) -> dict[int, float]:
    """Compare analytic and numeric gradients of scalar ``f`` for each tensor
    in ``wrt``. Returns the relative error per position in ``wrt``."""
    for t in wrt:
        t.requires_grad = True
        t.grad = np.zeros_like(t.data)
        t._owned = True
    ad.reset_tape()
    out = f()
    ad.backward(out)
    analytic = [t.grad.copy() for t in wrt]
    return {k: relative_error(analytic[k], numeric_grad(f, t, h)) for k, t in enumerate(wrt)}
