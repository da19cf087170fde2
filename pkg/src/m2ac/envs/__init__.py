from __future__ import annotations

import json
import os
from typing import Iterable

import numpy as np

from .continuous import ContinuousEnv, Pendulum, PointMass, angle_normalize
from .finite import (
    FiniteMDP,
    TabularPolicy,
    bellman_residual,
    exact_policy_value,
    exact_return,
    perturb_transitions,
    random_mdp,
    random_policy,
    state_action_kernel,
)
from .noise import NOISE_PRESETS, NoisyActionWrapper

ENVIRONMENTS = {"pendulum": Pendulum, "pointmass": PointMass}


def make_env(
    env_id: str,
    noise_preset: str | None = None,
    seed: int | None = None,
    horizon: int = 200,
    noise_seed: int | None = None,
):
    """Build an environment from a string id such as ``"pendulum"`` or ``"pendulum-Noisy2"``.

    ``noise_preset`` may also be passed separately ("none", "Noisy0", "Noisy1", "Noisy2").
    """
    if "-" in env_id:
        env_id, suffix = env_id.split("-", 1)
        if noise_preset not in (None, "none", suffix):
            raise ValueError(f"conflicting noise presets {suffix!r} and {noise_preset!r}")
        noise_preset = suffix
    try:
        cls = ENVIRONMENTS[env_id]
    except KeyError:
        raise ValueError(f"unknown environment {env_id!r}; known: {sorted(ENVIRONMENTS)}") from None
    env = cls(seed=seed, horizon=horizon)
    if noise_preset in (None, "none"):
        return env
    if noise_preset not in NOISE_PRESETS:
        raise ValueError(f"unknown noise preset {noise_preset!r}")
    return NoisyActionWrapper(env, NOISE_PRESETS[noise_preset], seed=noise_seed)


def dump_jsonl(path: str | os.PathLike, records: Iterable[dict]) -> int:
    """Write one JSON object per line; numpy values are converted to lists."""
    n = 0
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(_plain(rec), sort_keys=True) + "\n")
            n += 1
    return n


def load_jsonl(path: str | os.PathLike) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


__all__ = [
    "ContinuousEnv",
    "ENVIRONMENTS",
    "FiniteMDP",
    "NOISE_PRESETS",
    "NoisyActionWrapper",
    "Pendulum",
    "PointMass",
    "TabularPolicy",
    "angle_normalize",
    "bellman_residual",
    "dump_jsonl",
    "exact_policy_value",
    "exact_return",
    "load_jsonl",
    "make_env",
    "perturb_transitions",
    "random_mdp",
    "random_policy",
    "state_action_kernel",
]
