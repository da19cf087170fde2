from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autograd import NonFiniteError, Tensor


@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adaptive_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> tuple[list[np.ndarray], AdamState]:
    """One Adam update, returning new arrays and the advanced state.

    Raises NonFiniteError (and leaves ``state`` untouched) on NaN/Inf gradients.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteError("non-finite gradient; update aborted")
    if not state.m:
        state = AdamState(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])
    elif any(m.shape != p.shape for m, p in zip(state.m, params)) or len(state.m) != len(params):
        raise ValueError("optimizer state does not match parameters")
    b1, b2 = betas
    t = state.step + 1
    new_m, new_v, new_p = [], [], []
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if weight_decay:
            g = g + weight_decay * p
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(t, new_m, new_v)


class Adam:
    """Stateful wrapper that updates Tensor parameters in place."""

    def __init__(self, params: Sequence[Tensor], lr: float = 3e-4, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.state = AdamState()

    def step(self, grads: Sequence[np.ndarray]) -> None:
        new, self.state = adaptive_step(
            [p.data for p in self.params], grads, self.state, self.lr, weight_decay=self.weight_decay
        )
        for p, arr in zip(self.params, new):
            p.data = arr
