"""Adam with global-norm gradient clipping and a step-halving learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def global_norm(grads) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


def clip_gradients(grads, clip_norm):
    """Scale all gradients jointly so their global L2 norm is at most ``clip_norm``.

    Returns the (possibly new) gradient dict and the norm before clipping.
    """
    norm = global_norm(grads)
    if clip_norm is None or clip_norm <= 0 or norm <= clip_norm:
        return grads, norm
    scale = clip_norm / norm
    return {k: g * np.asarray(scale, dtype=g.dtype) for k, g in grads.items()}, norm


def annealed_lr(base_lr: float, epochs_done: float) -> float:
    """Constant for the first epoch, then halved every half epoch."""
    if epochs_done < 1.0:
        return base_lr
    halvings = int(math.floor((epochs_done - 1.0) / 0.5)) + 1
    return base_lr * 0.5 ** halvings


@dataclass
class OptimizerState:
    learning_rate: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8
    clip_norm: float = 5.0
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


class Adam:
    """Bias-corrected Adam. Parameters are updated in place."""

    def __init__(self, learning_rate=1e-3, betas=(0.9, 0.999), epsilon=1e-8, clip_norm=5.0, state=None):
        self.state = state or OptimizerState(learning_rate, tuple(betas), epsilon, clip_norm)

    @property
    def learning_rate(self):
        return self.state.learning_rate

    @learning_rate.setter
    def learning_rate(self, value):
        self.state.learning_rate = float(value)

    def step(self, params, grads) -> float:
        """Clip, then apply one update. Returns the pre-clip gradient norm."""
        st = self.state
        grads, norm = clip_gradients(grads, st.clip_norm)
        st.step_count += 1
        b1, b2 = st.betas
        t = st.step_count
        corr1 = 1.0 - b1 ** t
        corr2 = 1.0 - b2 ** t
        lr = st.learning_rate
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
            m = st.m.get(name)
            if m is None:
                m = st.m[name] = np.zeros_like(p)
                st.v[name] = np.zeros_like(p)
            v = st.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            if lr != 0.0:
                p -= (lr * (m / corr1) / (np.sqrt(v / corr2) + st.epsilon)).astype(p.dtype)
        return norm
