"""Central finite-difference gradients for verifying hand-written backward passes."""

from __future__ import annotations

import numpy as np


def numerical_gradients(loss_fn, params, names=None, eps=1e-5):
    """Perturb every element of the named float64 parameters in place and restore it."""
    out = {}
    for name in names or list(params):
        p = params[name]
        g = np.zeros(p.shape, dtype=np.float64)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn()
            flat[i] = orig - eps
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        out[name] = g
    return out


def max_relative_error(analytic, numeric, floor=1e-6) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))
