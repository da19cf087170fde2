"""Masked model rollouts: rank samples by uncertainty, store only the most certain."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .dynamics import ESTIMATORS, EnsembleModel

MODES = ("non-stop", "hard-stop")
QUANTILES = (0.0, 0.25, 0.5, 0.75, 1.0)


def masking_schedule(h_max: int, h: int) -> float:
    """Keep rate at rollout step ``h``: 0.5 for one-step rollouts, else (H-h)/(2(H+1))."""
    if h_max < 1:
        raise ValueError("h_max must be >= 1")
    if not 0 <= h < h_max:
        raise ValueError(f"step {h} outside [0, {h_max})")
    if h_max == 1:
        return 0.5
    return (h_max - h) / (2.0 * (h_max + 1))


def mask_select(scores, w: float) -> np.ndarray:
    """Indices of the floor(w * len) smallest scores, ties broken by index.

    The result is sorted by index.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if not 0.0 < w <= 1.0:
        raise ValueError(f"masking rate must lie in (0, 1], got {w}")
    n = scores.size
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if not np.isfinite(scores).all() or (scores < 0).any():
        raise ValueError("uncertainty scores must be finite and non-negative")
    n_keep = keep_count(w, n)
    if n_keep == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(scores, kind="stable")
    return np.sort(order[:n_keep])


def keep_count(w: float, n: int) -> int:
    """floor(w * n), robust to w * n landing a rounding error below an integer."""
    return math.floor(w * n + 1e-9)


def penalized_reward(reward, u, alpha: float):
    """Model reward minus ``alpha`` times its uncertainty score."""
    return reward - alpha * u


@dataclass
class RolloutConfig:
    h_max: int = 1
    schedule: str | float = "linear"  # "linear" or a constant rate in (0, 1]
    alpha: float = 1e-3
    mode: str = "non-stop"
    batch_size: int = 256
    estimator: str = "ovr"

    def __post_init__(self):
        if self.h_max < 1:
            raise ValueError("h_max must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.alpha < 0:
            raise ValueError("penalty coefficient must be >= 0")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        for h in range(self.h_max):
            w = self.rate(h)
            if not 0.0 < w <= 1.0:
                raise ValueError(f"masking rate at step {h} is {w}, outside (0, 1]")

    def rate(self, h: int) -> float:
        if self.schedule == "linear":
            return masking_schedule(self.h_max, h)
        return float(self.schedule)


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool = False
    source: str = "real"
    uncertainty: float = 0.0
    step: int = 0

    def to_dict(self) -> dict:
        return {
            "state": np.asarray(self.state).tolist(),
            "action": np.asarray(self.action).tolist(),
            "reward": float(self.reward),
            "next_state": np.asarray(self.next_state).tolist(),
            "done": bool(self.done),
            "source": self.source,
            "uncertainty": float(self.uncertainty),
            "step": int(self.step),
        }


@dataclass
class StepRecord:
    """Kept transitions of one rollout step plus statistics over the whole live batch."""

    h: int
    live: int
    rate: float
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray  # penalized
    raw_rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    uncertainty: np.ndarray
    members: np.ndarray
    u_quantiles: tuple[float, ...] = ()

    @property
    def kept(self) -> int:
        return len(self.rewards)

    @property
    def dropped(self) -> int:
        return self.live - self.kept


@dataclass
class RolloutBatch:
    steps: list[StepRecord] = field(default_factory=list)

    @property
    def kept_counts(self) -> list[int]:
        return [s.kept for s in self.steps]

    @property
    def dropped_counts(self) -> list[int]:
        return [s.dropped for s in self.steps]

    @property
    def live_counts(self) -> list[int]:
        return [s.live for s in self.steps]

    def __len__(self) -> int:
        return sum(self.kept_counts)

    def arrays(self) -> dict[str, np.ndarray]:
        keys = ("states", "actions", "rewards", "raw_rewards", "next_states", "dones", "uncertainty")
        if not self.steps:
            return {}
        out = {k: np.concatenate([getattr(s, k) for s in self.steps]) for k in keys}
        out["step"] = np.concatenate([np.full(s.kept, s.h) for s in self.steps])
        return out

    def transitions(self) -> Iterator[Transition]:
        for s in self.steps:
            for i in range(s.kept):
                yield Transition(
                    s.states[i], s.actions[i], float(s.rewards[i]), s.next_states[i],
                    bool(s.dones[i]), "model", float(s.uncertainty[i]), s.h,
                )

    def stats(self) -> dict:
        total_live = sum(self.live_counts)
        kept = [s.uncertainty for s in self.steps if s.kept]
        penalties = [s.raw_rewards - s.rewards for s in self.steps if s.kept]
        return {
            "kept_counts": self.kept_counts,
            "dropped_counts": self.dropped_counts,
            "kept_fraction": (len(self) / total_live) if total_live else 0.0,
            "mean_uncertainty_kept": float(np.concatenate(kept).mean()) if kept else 0.0,
            "mean_penalty": float(np.concatenate(penalties).mean()) if penalties else 0.0,
            "u_quantiles": [list(s.u_quantiles) for s in self.steps],
        }


def generate(
    ens: EnsembleModel,
    policy: Callable[[np.ndarray], np.ndarray],
    initial_states,
    cfg: RolloutConfig,
    rng: np.random.Generator,
    reward_fn: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    termination_fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None,
) -> RolloutBatch:
    """Roll the ensemble forward from ``initial_states`` for up to ``cfg.h_max`` steps.

    Every step samples (member, reward, next state, uncertainty) for all live
    samples, keeps the floor(w_h * B_h) least uncertain ones with reward
    r - alpha * u, then advances either every sample (non-stop) or only the
    kept ones (hard-stop).  ``reward_fn`` replaces the sampled reward with a
    known reward; ``termination_fn`` marks model transitions terminal.
    """
    if not ens.is_trained:
        raise RuntimeError("ensemble has not been trained")
    batch = RolloutBatch()
    states = np.asarray(initial_states, dtype=np.float64)
    if states.size == 0:
        return batch
    states = np.atleast_2d(states)
    for h in range(cfg.h_max):
        live = states.shape[0]
        if live == 0:
            break
        w = cfg.rate(h)
        actions = np.atleast_2d(policy(states))
        k, rewards, next_states, u = ens.step(states, actions, rng, cfg.estimator)
        if reward_fn is not None:
            rewards = np.asarray(reward_fn(states, actions), dtype=np.float64)
        dones = (
            np.asarray(termination_fn(states, actions, next_states), dtype=bool)
            if termination_fn is not None
            else np.zeros(live, dtype=bool)
        )
        keep = mask_select(u, w)
        batch.steps.append(
            StepRecord(
                h=h,
                live=live,
                rate=w,
                states=states[keep],
                actions=actions[keep],
                rewards=penalized_reward(rewards[keep], u[keep], cfg.alpha),
                raw_rewards=rewards[keep],
                next_states=next_states[keep],
                dones=dones[keep],
                uncertainty=u[keep],
                members=k[keep],
                u_quantiles=tuple(float(q) for q in np.quantile(u, QUANTILES)),
            )
        )
        if cfg.mode == "non-stop":
            states = next_states[~dones]
        else:
            states = next_states[keep][~dones[keep]]
    return batch
