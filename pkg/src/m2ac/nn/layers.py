"""Multilayer perceptrons on top of :mod:`m2ac.nn.autograd`."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor

ACTIVATIONS = {
    "relu": (ag.relu, lambda x: np.maximum(x, 0.0)),
    "silu": (ag.silu, lambda x: x * ag._sigmoid(x)),
    "tanh": (ag.tanh, np.tanh),
    "sigmoid": (ag.sigmoid, ag._sigmoid),
    "softplus": (ag.softplus, lambda x: np.logaddexp(0.0, x)),
    "identity": (lambda t: t, lambda x: x),
}


class Mlp:
    """Fully connected network with a hidden activation and linear output.

    With ``ensemble_size`` set, every layer carries a leading member axis and
    the network evaluates K independent members in one batched matmul.
    Inputs are then ``(K, N, in)``, or ``(N, in)`` broadcast to all members.
    """

    def __init__(
        self,
        widths: Sequence[int],
        activation: str = "relu",
        rng: np.random.Generator | None = None,
        ensemble_size: int | None = None,
        zero_last: bool = False,
    ):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w <= 0 for w in widths):
            raise ValueError(f"invalid layer widths {widths}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.widths = widths
        self.activation = activation
        self.ensemble_size = ensemble_size
        lead = () if ensemble_size is None else (int(ensemble_size),)
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        n_layers = len(widths) - 1
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            if zero_last and i == n_layers - 1:
                w = np.zeros(lead + (fan_in, fan_out))
                b = np.zeros(lead + (1, fan_out) if lead else (fan_out,))
            else:
                w = rng.uniform(-bound, bound, size=lead + (fan_in, fan_out))
                b = rng.uniform(-bound, bound, size=lead + (1, fan_out) if lead else (fan_out,))
            self.weights.append(Tensor(w, requires_grad=True, name=f"W{i}"))
            self.biases.append(Tensor(b, requires_grad=True, name=f"b{i}"))

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def _check_input(self, shape: tuple) -> None:
        if len(shape) == 0 or shape[-1] != self.in_dim:
            raise ValueError(
                f"input last dimension {shape[-1] if shape else None} does not match "
                f"first layer width {self.in_dim}"
            )
        if self.ensemble_size is not None and len(shape) == 3 and shape[0] != self.ensemble_size:
            raise ValueError(f"ensemble input has {shape[0]} members, expected {self.ensemble_size}")

    def __call__(self, x, track: bool = True) -> Tensor:
        """Forward pass recorded on the autograd graph.

        ``track=False`` treats the weights as constants, so gradients still
        flow to ``x`` but not into this network's parameters.
        """
        x = ag.ensure(x)
        self._check_input(x.shape)
        act = ACTIVATIONS[self.activation][0]
        n = len(self.weights)
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if not track:
                w, b = Tensor(w.data), Tensor(b.data)
            h = ag.matmul(h, w) + b
            if i < n - 1:
                h = act(h)
        return h

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Forward pass on raw arrays without recording a graph."""
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x.shape)
        act = ACTIVATIONS[self.activation][1]
        n = len(self.weights)
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.data + b.data
            if i < n - 1:
                h = act(h)
        if not np.isfinite(h).all():
            raise ag.NonFiniteError("non-finite network output")
        return h

    # -- parameter management -------------------------------------------------
    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}W{i}"] = w.data.copy()
            out[f"{prefix}b{i}"] = b.data.copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            for t, key in ((w, f"{prefix}W{i}"), (b, f"{prefix}b{i}")):
                arr = np.asarray(state[key], dtype=np.float64)
                if arr.shape != t.data.shape:
                    raise ValueError(f"shape mismatch for {key}: {arr.shape} vs {t.data.shape}")
                t.data = arr.copy()

    def copy_from(self, other: "Mlp") -> None:
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine.data = theirs.data.copy()

    def soft_update_from(self, other: "Mlp", tau: float) -> None:
        """Exponential averaging: self <- (1 - tau) * self + tau * other."""
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine.data *= 1.0 - tau
            mine.data += tau * theirs.data
