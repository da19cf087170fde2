"""Soft actor-critic over a mixed buffer of real and model transitions."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .nn import Adam, Mlp, NonFiniteError, Tensor, grad
from .nn import autograd as ag

log = logging.getLogger(__name__)

LOG2 = float(np.log(2.0))


class ReplayBuffer:
    """Bounded FIFO of transitions stored column-wise."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity)
        self.uncertainty = np.zeros(capacity)
        self._ptr = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def clear(self) -> None:
        self._ptr = 0
        self._size = 0

    def add(self, state, action, reward, next_state, done=False, uncertainty=0.0) -> None:
        self.add_batch(
            np.atleast_2d(state), np.atleast_2d(action), np.atleast_1d(reward),
            np.atleast_2d(next_state), np.atleast_1d(done), np.atleast_1d(uncertainty),
        )

    def add_batch(self, states, actions, rewards, next_states, dones=None, uncertainty=None) -> None:
        n = len(rewards)
        if n == 0:
            return
        dones = np.zeros(n) if dones is None else dones
        uncertainty = np.zeros(n) if uncertainty is None else uncertainty
        if n > self.capacity:
            # only the newest `capacity` rows survive
            sl = slice(n - self.capacity, n)
            states, actions, rewards = states[sl], actions[sl], rewards[sl]
            next_states, dones, uncertainty = next_states[sl], dones[sl], uncertainty[sl]
            n = self.capacity
        idx = (self._ptr + np.arange(n)) % self.capacity
        self.states[idx] = states
        self.actions[idx] = actions
        self.rewards[idx] = rewards
        self.next_states[idx] = next_states
        self.dones[idx] = dones
        self.uncertainty[idx] = uncertainty
        self._ptr = int((self._ptr + n) % self.capacity)
        self._size = min(self._size + n, self.capacity)

    def sample_idx(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self._size, size=n)

    def gather(self, idx: np.ndarray) -> dict[str, np.ndarray]:
        return {
            "states": self.states[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_states": self.next_states[idx],
            "dones": self.dones[idx],
            "uncertainty": self.uncertainty[idx],
        }

    def sample(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        return self.gather(self.sample_idx(n, rng))

    def last(self, n: int) -> dict[str, np.ndarray]:
        n = min(n, self._size)
        idx = (self._ptr - n + np.arange(n)) % self.capacity
        return self.gather(idx)

    def all(self) -> dict[str, np.ndarray]:
        return self.last(self._size)


class MixedBuffer:
    """Real partition (persistent) and model partition (regenerated each epoch)."""

    def __init__(self, real: ReplayBuffer, model: ReplayBuffer):
        self.real = real
        self.model = model
        self._warned = False

    def sample(self, batch_size: int, real_ratio: float, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Draw ``batch_size`` rows; the number of real rows is Binomial(batch_size, real_ratio)."""
        if not 0.0 <= real_ratio <= 1.0:
            raise ValueError("real ratio must lie in [0, 1]")
        if len(self.real) == 0 and len(self.model) == 0:
            raise ValueError("cannot sample from an empty buffer")
        ratio = real_ratio
        if len(self.model) == 0 and ratio < 1.0:
            ratio = 1.0
        elif len(self.real) == 0 and ratio > 0.0:
            ratio = 0.0
        if ratio != real_ratio and not self._warned:
            warnings.warn(
                f"requested real ratio {real_ratio} but one partition is empty; using {ratio}",
                RuntimeWarning,
                stacklevel=2,
            )
            self._warned = True
        n_real = int(rng.binomial(batch_size, ratio)) if 0.0 < ratio < 1.0 else int(round(ratio * batch_size))
        parts = []
        if n_real:
            parts.append(self.real.sample(n_real, rng))
        if batch_size - n_real:
            parts.append(self.model.sample(batch_size - n_real, rng))
        out = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
        out["is_model"] = np.concatenate([np.zeros(n_real, bool), np.ones(batch_size - n_real, bool)])
        return out


def critic_target(reward, min_q_next, logp_next, done, gamma: float, temperature: float):
    """Soft TD target r + gamma (1 - done) (min Q'(s', a') - temperature * log pi(a'|s'))."""
    return reward + gamma * (1.0 - done) * (min_q_next - temperature * logp_next)


@dataclass
class SacConfig:
    hidden: tuple[int, ...] = (256, 256)
    activation: str = "relu"
    gamma: float = 0.99
    tau: float = 0.005
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    lr_temperature: float = 3e-4
    init_temperature: float = 1.0
    learn_temperature: bool = True
    target_entropy: float | None = None  # defaults to -action_dim
    batch_size: int = 256
    log_std_min: float = -5.0
    log_std_max: float = 2.0


@dataclass
class UpdateMetrics:
    critic_loss: float
    actor_loss: float
    entropy: float
    temperature: float
    mean_q: float
    model_fraction: float

    def to_dict(self) -> dict:
        return asdict(self)


class SacAgent:
    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        cfg: SacConfig | None = None,
        rng: np.random.Generator | None = None,
        action_low=None,
        action_high=None,
    ):
        self.cfg = cfg = cfg or SacConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.state_dim = state_dim
        self.action_dim = action_dim
        low = -np.ones(action_dim) if action_low is None else np.asarray(action_low, float)
        high = np.ones(action_dim) if action_high is None else np.asarray(action_high, float)
        self.action_scale = (high - low) / 2.0
        self.action_bias = (high + low) / 2.0
        self.actor = Mlp([state_dim, *cfg.hidden, 2 * action_dim], cfg.activation, rng)
        self.q1 = Mlp([state_dim + action_dim, *cfg.hidden, 1], cfg.activation, rng)
        self.q2 = Mlp([state_dim + action_dim, *cfg.hidden, 1], cfg.activation, rng)
        self.q1_target = Mlp([state_dim + action_dim, *cfg.hidden, 1], cfg.activation, rng)
        self.q2_target = Mlp([state_dim + action_dim, *cfg.hidden, 1], cfg.activation, rng)
        self.q1_target.copy_from(self.q1)
        self.q2_target.copy_from(self.q2)
        self.log_temperature = Tensor(np.array(np.log(cfg.init_temperature)), requires_grad=True)
        self.target_entropy = -float(action_dim) if cfg.target_entropy is None else cfg.target_entropy
        self.actor_opt = Adam(self.actor.parameters(), cfg.lr_actor)
        self.critic_opt = Adam(self.q1.parameters() + self.q2.parameters(), cfg.lr_critic)
        self.temperature_opt = Adam([self.log_temperature], cfg.lr_temperature)
        self.updates = 0

    @property
    def temperature(self) -> float:
        return float(np.exp(self.log_temperature.data))

    # -- policy ---------------------------------------------------------------------
    def _log_std(self, raw):
        lo, hi = self.cfg.log_std_min, self.cfg.log_std_max
        if isinstance(raw, Tensor):
            return lo + 0.5 * (hi - lo) * (ag.tanh(raw) + 1.0)
        return lo + 0.5 * (hi - lo) * (np.tanh(raw) + 1.0)

    def _scale(self, squashed):
        return squashed * self.action_scale + self.action_bias

    def sample_actions(self, states, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Sampled environment-scale actions and their log-probabilities (no graph)."""
        out = self.actor.predict(np.atleast_2d(states))
        d = self.action_dim
        mu, log_std = out[:, :d], self._log_std(out[:, d:])
        eps = rng.standard_normal(mu.shape)
        u = mu + np.exp(log_std) * eps
        logp = (-0.5 * eps**2 - log_std - 0.5 * ag.LOG_2PI).sum(axis=1)
        logp -= (2.0 * (LOG2 - u - np.logaddexp(0.0, -2.0 * u))).sum(axis=1)
        return self._scale(np.tanh(u)), logp

    def act(self, state, deterministic: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        state = np.asarray(state, dtype=np.float64)
        if not np.isfinite(state).all():
            raise ValueError("state contains NaN or Inf")
        single = state.ndim == 1
        states = np.atleast_2d(state)
        if deterministic:
            mu = self.actor.predict(states)[:, : self.action_dim]
            actions = self._scale(np.tanh(mu))
        else:
            if rng is None:
                raise ValueError("stochastic actions need an rng")
            actions, _ = self.sample_actions(states, rng)
        return actions[0] if single else actions

    def policy_fn(self, rng: np.random.Generator):
        """Stochastic batch policy ``states -> actions`` for model rollouts."""
        return lambda states: self.sample_actions(states, rng)[0]

    # -- critic -------------------------------------------------------------------------
    def target_values(self, rewards, next_states, dones, rng: np.random.Generator) -> np.ndarray:
        a2, logp2 = self.sample_actions(next_states, rng)
        x2 = np.concatenate([next_states, a2], axis=1)
        q_next = np.minimum(self.q1_target.predict(x2)[:, 0], self.q2_target.predict(x2)[:, 0])
        return critic_target(rewards, q_next, logp2, dones, self.cfg.gamma, self.temperature)

    def update(self, batch: dict[str, np.ndarray], rng: np.random.Generator) -> UpdateMetrics:
        """One gradient step for critics, actor and temperature, then Polyak averaging."""
        cfg = self.cfg
        s, a = batch["states"], batch["actions"]
        y = self.target_values(batch["rewards"], batch["next_states"], batch["dones"], rng)[:, None]

        x = np.concatenate([s, a], axis=1)
        q1 = self.q1(x)
        q2 = self.q2(x)
        critic_loss = ag.mean(ag.square(q1 - y)) + ag.mean(ag.square(q2 - y))
        critic_params = self.q1.parameters() + self.q2.parameters()
        self.critic_opt.step(grad(critic_loss, critic_params))

        out = self.actor(s)
        d = self.action_dim
        mu, log_std = out[:, :d], self._log_std(out[:, d:])
        eps = rng.standard_normal(mu.shape)
        u = mu + ag.exp(log_std) * eps
        squashed = ag.tanh(u)
        logp = (-0.5 * eps**2 - 0.5 * ag.LOG_2PI - log_std).sum(axis=1)
        logp = logp - (2.0 * (LOG2 - u - ag.softplus(-2.0 * u))).sum(axis=1)
        a_pi = squashed * self.action_scale + self.action_bias
        xa = ag.concat([Tensor(s), a_pi], axis=1)
        q_pi = ag.minimum(self.q1(xa, track=False), self.q2(xa, track=False))[:, 0]
        temp = self.temperature
        actor_loss = ag.mean(temp * logp - q_pi)
        self.actor_opt.step(grad(actor_loss, self.actor.parameters()))

        logp_v = logp.data
        if cfg.learn_temperature:
            g = -np.mean(logp_v + self.target_entropy)
            self.temperature_opt.step([np.asarray(g)])

        self.q1_target.soft_update_from(self.q1, cfg.tau)
        self.q2_target.soft_update_from(self.q2, cfg.tau)
        self.updates += 1
        metrics = UpdateMetrics(
            critic_loss=float(critic_loss.data),
            actor_loss=float(actor_loss.data),
            entropy=float(-logp_v.mean()),
            temperature=self.temperature,
            mean_q=float(0.5 * (q1.data.mean() + q2.data.mean())),
            model_fraction=float(batch["is_model"].mean()) if "is_model" in batch else 0.0,
        )
        if not np.isfinite(list(metrics.to_dict().values())).all():
            raise NonFiniteError(f"non-finite update metrics {metrics}")
        return metrics

    # -- persistence ----------------------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for name in ("actor", "q1", "q2", "q1_target", "q2_target"):
            out.update(getattr(self, name).state_dict(prefix=f"{name}."))
        out["log_temperature"] = self.log_temperature.data.copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name in ("actor", "q1", "q2", "q1_target", "q2_target"):
            getattr(self, name).load_state_dict(state, prefix=f"{name}.")
        self.log_temperature.data = np.array(state["log_temperature"], dtype=np.float64)


def update(
    agent: SacAgent,
    buffer: MixedBuffer,
    batch_size: int,
    real_ratio: float,
    rng: np.random.Generator,
) -> UpdateMetrics:
    """Sample a mixed batch and run one agent update on it."""
    if len(buffer.real) + len(buffer.model) < 1:
        raise ValueError("buffer is empty")
    batch = buffer.sample(batch_size, real_ratio, rng)
    return agent.update(batch, rng)
