"""Toy continuous-control tasks with normalized actions in [-1, 1]."""

from __future__ import annotations

import math

import numpy as np


def angle_normalize(x: float) -> float:
    return ((x + math.pi) % (2.0 * math.pi)) - math.pi


class ContinuousEnv:
    """Base class: clipping, NaN rejection, step counting and seeding.

    Subclasses implement ``_reset_physics`` and ``_dynamics``.  None of the
    toy tasks terminate, so ``step`` always returns ``done=False``;
    ``time_limit_reached`` tells the caller when an episode is over.
    """

    env_id = "base"
    state_dim: int
    action_dim: int
    r_max: float

    def __init__(self, seed: int | None = None, horizon: int = 200):
        self.action_low = -np.ones(self.action_dim)
        self.action_high = np.ones(self.action_dim)
        self.horizon = int(horizon)
        self.t = 0
        self._rng = np.random.default_rng(seed)
        self._phys: np.ndarray | None = None

    def seed(self, seed: int | None) -> None:
        self._rng = np.random.default_rng(seed)

    @property
    def time_limit_reached(self) -> bool:
        return self.t >= self.horizon

    def reset(self) -> np.ndarray:
        self.t = 0
        self._phys = self._reset_physics(self._rng)
        return self._observe()

    def set_physical_state(self, phys) -> np.ndarray:
        self.t = 0
        self._phys = np.asarray(phys, dtype=np.float64).copy()
        return self._observe()

    @property
    def physical_state(self) -> np.ndarray:
        return self._phys.copy()

    def clip_action(self, action) -> np.ndarray:
        return np.clip(action, self.action_low, self.action_high)

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if self._phys is None:
            raise RuntimeError("call reset() before step()")
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape != (self.action_dim,):
            raise ValueError(f"action has dimension {action.shape}, expected ({self.action_dim},)")
        if not np.isfinite(action).all():
            raise ValueError("action contains NaN or Inf")
        action = self.clip_action(action)
        self._phys, reward = self._dynamics(self._phys, action)
        self.t += 1
        return self._observe(), float(reward), False

    def reward_fn(self, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
        """Vectorized reward from observation/action batches (known-reward shortcut)."""
        raise NotImplementedError

    def _reset_physics(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _dynamics(self, phys: np.ndarray, action: np.ndarray) -> tuple[np.ndarray, float]:
        raise NotImplementedError

    def _observe(self) -> np.ndarray:
        raise NotImplementedError


class Pendulum(ContinuousEnv):
    """Torque-limited pendulum swing-up.

    Physical state is (theta, theta_dot) with theta = 0 upright.  The ODE
    theta'' = 3g/(2l) sin(theta) + 3/(m l^2) u is integrated with one
    semi-implicit Euler step of length ``dt``; the angular velocity is
    clipped to [-max_speed, max_speed].  Observation: (cos, sin, theta_dot).
    """

    env_id = "pendulum"
    state_dim = 3
    action_dim = 1
    max_speed = 8.0
    max_torque = 2.0
    dt = 0.05
    g = 10.0
    m = 1.0
    length = 1.0
    # largest possible cost is pi^2 + 0.1 * 8^2 + 0.001 * 2^2 = 16.2736...
    r_max = 16.3

    def _reset_physics(self, rng):
        return np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-1.0, 1.0)])

    def _dynamics(self, phys, action):
        th, thdot = float(phys[0]), float(phys[1])
        u = self.max_torque * float(action[0])
        cost = angle_normalize(th) ** 2 + 0.1 * thdot**2 + 0.001 * u**2
        g, m, l, dt = self.g, self.m, self.length, self.dt
        newthdot = thdot + (3.0 * g / (2.0 * l) * math.sin(th) + 3.0 / (m * l**2) * u) * dt
        newthdot = min(max(newthdot, -self.max_speed), self.max_speed)
        newth = th + newthdot * dt
        return np.array([newth, newthdot]), -cost

    def _observe(self):
        th, thdot = self._phys
        return np.array([math.cos(th), math.sin(th), thdot])

    def reward_fn(self, obs, action):
        obs = np.atleast_2d(obs)
        action = np.clip(np.atleast_2d(action), -1.0, 1.0)
        th = np.arctan2(obs[:, 1], obs[:, 0])
        u = self.max_torque * action[:, 0]
        return -(th**2 + 0.1 * obs[:, 2] ** 2 + 0.001 * u**2)


class PointMass(ContinuousEnv):
    """1-D point mass pushed towards a fixed target inside walls at +/-2."""

    env_id = "pointmass"
    state_dim = 2
    action_dim = 1
    dt = 0.1
    friction = 0.5
    target = 0.5
    x_limit = 2.0
    v_limit = 2.0
    # (x - target)^2 <= 2.5^2, 0.1 v^2 <= 0.4, 0.01 a^2 <= 0.01
    r_max = 6.7

    def _reset_physics(self, rng):
        return np.array([rng.uniform(-1.5, 1.5), 0.0])

    def _dynamics(self, phys, action):
        x, v = float(phys[0]), float(phys[1])
        a = float(action[0])
        cost = (x - self.target) ** 2 + 0.1 * v**2 + 0.01 * a**2
        v = v + (a - self.friction * v) * self.dt
        v = min(max(v, -self.v_limit), self.v_limit)
        x = x + v * self.dt
        if abs(x) > self.x_limit:
            x = math.copysign(self.x_limit, x)
            v = 0.0
        return np.array([x, v]), -cost

    def _observe(self):
        return self._phys.copy()

    def reward_fn(self, obs, action):
        obs = np.atleast_2d(obs)
        action = np.clip(np.atleast_2d(action), -1.0, 1.0)
        return -((obs[:, 0] - self.target) ** 2 + 0.1 * obs[:, 1] ** 2 + 0.01 * action[:, 0] ** 2)
