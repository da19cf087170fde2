"""Exact tabular MDPs and policy evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROW_TOL = 1e-12


def _check_rows(arr: np.ndarray, what: str) -> None:
    if (arr < 0).any():
        raise ValueError(f"{what} has negative entries")
    err = np.abs(arr.sum(axis=-1) - 1.0).max()
    if err > ROW_TOL:
        raise ValueError(f"{what} rows do not sum to 1 (max error {err:.3g})")


@dataclass
class FiniteMDP:
    p: np.ndarray  # (n, m, n) transition probabilities p[s, a, s']
    r: np.ndarray  # (n, m)
    p0: np.ndarray  # (n,)
    gamma: float
    r_max: float

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        self.r = np.asarray(self.r, dtype=np.float64)
        self.p0 = np.asarray(self.p0, dtype=np.float64)
        n, m = self.r.shape
        if self.p.shape != (n, m, n) or self.p0.shape != (n,):
            raise ValueError(f"inconsistent shapes p={self.p.shape} r={self.r.shape} p0={self.p0.shape}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.gamma}")
        _check_rows(self.p, "transition tensor")
        _check_rows(self.p0, "initial distribution")
        if np.abs(self.r).max(initial=0.0) >= self.r_max:
            raise ValueError("rewards must satisfy |r| < r_max")

    @property
    def n_states(self) -> int:
        return self.r.shape[0]

    @property
    def n_actions(self) -> int:
        return self.r.shape[1]

    def replace(self, **kw) -> "FiniteMDP":
        fields = dict(p=self.p, r=self.r, p0=self.p0, gamma=self.gamma, r_max=self.r_max)
        fields.update(kw)
        return FiniteMDP(**fields)


@dataclass
class TabularPolicy:
    probs: np.ndarray  # (n, m)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        _check_rows(self.probs, "policy")


def state_action_kernel(p: np.ndarray, pol: TabularPolicy) -> np.ndarray:
    """(n*m, n*m) matrix of Pr[(s', a') | (s, a)] = p(s'|s,a) pi(a'|s')."""
    n, m, _ = p.shape
    return (p[:, :, :, None] * pol.probs[None, None, :, :]).reshape(n * m, n * m)


def exact_policy_value(mdp: FiniteMDP, pol: TabularPolicy) -> tuple[np.ndarray, np.ndarray]:
    """Return (V, Q) solving the Bellman equations by a direct linear solve."""
    if not 0.0 < mdp.gamma < 1.0:
        raise ValueError("policy evaluation needs gamma < 1")
    if pol.probs.shape != mdp.r.shape:
        raise ValueError("policy shape does not match the MDP")
    n = mdp.n_states
    p_pi = np.einsum("sa,sat->st", pol.probs, mdp.p)
    r_pi = (pol.probs * mdp.r).sum(axis=1)
    v = np.linalg.solve(np.eye(n) - mdp.gamma * p_pi, r_pi)
    q = mdp.r + mdp.gamma * mdp.p @ v
    return v, q


def bellman_residual(mdp: FiniteMDP, pol: TabularPolicy, q: np.ndarray) -> float:
    v = (pol.probs * q).sum(axis=1)
    return float(np.abs(mdp.r + mdp.gamma * mdp.p @ v - q).max())


def exact_return(mdp: FiniteMDP, pol: TabularPolicy) -> float:
    v, _ = exact_policy_value(mdp, pol)
    return float(mdp.p0 @ v)


# -- random instances ----------------------------------------------------------

def random_mdp(
    rng: np.random.Generator,
    n_states: int,
    n_actions: int,
    gamma: float,
    r_max: float = 1.0,
    concentration: float = 1.0,
) -> FiniteMDP:
    p = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions))
    r = rng.uniform(-0.999 * r_max, 0.999 * r_max, size=(n_states, n_actions))
    p0 = rng.dirichlet(np.ones(n_states))
    return FiniteMDP(p, r, p0, gamma, r_max)


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> TabularPolicy:
    return TabularPolicy(rng.dirichlet(np.ones(n_actions), size=n_states))


def perturb_transitions(p: np.ndarray, rng: np.random.Generator, concentration: float) -> np.ndarray:
    """Dirichlet draw around each row of ``p``; larger concentration = closer model."""
    alpha = concentration * p + 1e-3
    out = np.empty_like(p)
    n, m, _ = p.shape
    for s in range(n):
        for a in range(m):
            out[s, a] = rng.dirichlet(alpha[s, a])
    return _renormalize(out)


def _renormalize(p: np.ndarray) -> np.ndarray:
    p = np.maximum(p, 0.0)
    return p / p.sum(axis=-1, keepdims=True)
