from __future__ import annotations

import numpy as np

from .continuous import ContinuousEnv

NOISE_PRESETS = {"Noisy0": 0.05, "Noisy1": 0.1, "Noisy2": 0.2}


class NoisyActionWrapper:
    """Executes ``clip(a + eps)`` with unobserved ``eps ~ N(0, sigma^2 I)``.

    Observations and rewards are those of the inner environment; only the
    executed action changes.  With ``sigma == 0`` no noise is drawn at all.
    """

    def __init__(self, env: ContinuousEnv, sigma: float, seed: int | None = None):
        if not sigma >= 0.0:
            raise ValueError(f"noise std must be >= 0, got {sigma}")
        self.env = env
        self.sigma = float(sigma)
        self._rng = np.random.default_rng(seed)
        self.last_executed_action: np.ndarray | None = None

    def __getattr__(self, name):
        # everything not overridden (dims, bounds, reset, reward_fn, ...) is the inner env's
        return getattr(self.env, name)

    def seed(self, seed: int | None, noise_seed: int | None = None) -> None:
        self.env.seed(seed)
        self._rng = np.random.default_rng(seed if noise_seed is None else noise_seed)

    def noisy_action(self, action) -> np.ndarray:
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if not np.isfinite(action).all():
            raise ValueError("action contains NaN or Inf")
        if self.sigma == 0.0:
            return action
        noisy = action + self.sigma * self._rng.standard_normal(action.shape)
        return self.env.clip_action(noisy)

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        executed = self.noisy_action(action)
        self.last_executed_action = executed
        return self.env.step(executed)


noisy_step = NoisyActionWrapper.step
