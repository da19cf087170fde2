"""Probabilistic ensemble over (reward, next state) and its uncertainty scores.

Member outputs are diagonal Gaussians.  Uncertainty estimators operate on
stacked member predictions ``means, variances`` of shape ``(K, N, D)`` and
return one score per sample.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn import Adam, Mlp, NonFiniteError, Tensor, grad
from .nn import autograd as ag

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-8
ESTIMATORS = ("ovr", "ova", "nll")


@dataclass
class GaussianPrediction:
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.var.shape:
            raise ValueError("mean and variance shapes differ")
        if not (np.isfinite(self.mean).all() and np.isfinite(self.var).all()):
            raise NonFiniteError("non-finite Gaussian prediction")
        if (self.var <= 0).any():
            raise ValueError("variances must be strictly positive")


# -- Gaussian algebra ---------------------------------------------------------------

def merge_gaussians(means: np.ndarray, variances: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Moment-match a uniform mixture over axis 0 with one diagonal Gaussian.

    mean = avg(mu_i); var = avg(var_i + mu_i^2) - mean^2, evaluated in the
    centered form avg(var_i) + avg((mu_i - mean)^2) to avoid cancellation.
    """
    mu = means.mean(axis=0)
    var = variances.mean(axis=0) + ((means - mu) ** 2).mean(axis=0)
    return mu, var


def merge_rest(means: np.ndarray, variances: np.ndarray, k) -> tuple[np.ndarray, np.ndarray]:
    """Merge every member except ``k``.

    ``k`` is either one member index or an array of per-sample indices of
    shape ``(N,)`` for stacked predictions of shape ``(K, N, D)``.
    """
    K = means.shape[0]
    if K < 2:
        raise ValueError("leave-one-out merge needs at least two members")
    k = np.asarray(k)
    if k.ndim == 0:
        keep = np.arange(K) != int(k)
        return merge_gaussians(means[keep], variances[keep])
    n = means.shape[1]
    if k.shape != (n,):
        raise ValueError(f"per-sample member indices must have shape ({n},)")
    # sums over all members minus member k, per sample
    cols = np.arange(n)
    mu_k, var_k = means[k, cols], variances[k, cols]
    mu = (means.sum(axis=0) - mu_k) / (K - 1)
    spread = ((means - mu) ** 2).sum(axis=0) - (mu_k - mu) ** 2
    var = (variances.sum(axis=0) - var_k + spread) / (K - 1)
    return mu, var


def gaussian_kl(mu_p, var_p, mu_q, var_q) -> np.ndarray:
    """KL(N(mu_p, var_p) || N(mu_q, var_q)) summed over the last axis."""
    if (np.asarray(var_p) <= 0).any() or (np.asarray(var_q) <= 0).any():
        raise ValueError("variances must be strictly positive")
    kl = 0.5 * (np.log(var_q / var_p) + (var_p + (mu_p - mu_q) ** 2) / var_q - 1.0)
    return np.maximum(kl, 0.0).sum(axis=-1)


def gaussian_neg_log_density(x, mu, var) -> np.ndarray:
    if (np.asarray(var) <= 0).any():
        raise ValueError("variances must be strictly positive")
    return (0.5 * (ag.LOG_2PI + np.log(var) + (x - mu) ** 2 / var)).sum(axis=-1)


def _pick(means, variances, k):
    k = np.asarray(k)
    if k.ndim == 0:
        return means[int(k)], variances[int(k)]
    cols = np.arange(means.shape[1])
    return means[k, cols], variances[k, cols]


def ovr_uncertainty(means, variances, k) -> np.ndarray:
    """One-vs-Rest: KL from member k to the merged other K-1 members."""
    mu_r, var_r = merge_rest(means, variances, k)
    mu_k, var_k = _pick(means, variances, k)
    return gaussian_kl(mu_k, var_k, mu_r, np.maximum(var_r, VAR_FLOOR))


def ova_uncertainty(means, variances, k) -> np.ndarray:
    """One-vs-All: KL from member k to the merge of all K members."""
    if means.shape[0] < 2:
        raise ValueError("ensemble disagreement needs at least two members")
    mu_a, var_a = merge_gaussians(means, variances)
    mu_k, var_k = _pick(means, variances, k)
    return gaussian_kl(mu_k, var_k, mu_a, np.maximum(var_a, VAR_FLOOR))


def neg_likelihood_uncertainty(means, variances, samples) -> np.ndarray:
    """Negative log density of sampled outputs under the all-member merge."""
    mu_a, var_a = merge_gaussians(means, variances)
    return gaussian_neg_log_density(samples, mu_a, np.maximum(var_a, VAR_FLOOR))


# -- ensemble model -------------------------------------------------------------------

@dataclass
class ModelTrainConfig:
    holdout_fraction: float = 0.2
    max_holdout: int = 5000
    patience: int = 5
    batch_size: int = 256
    max_epochs: int = 100
    lr: float = 1e-3
    weight_decay: float = 1e-5
    logvar_bound_coef: float = 0.01


@dataclass
class TrainReport:
    train_nll: list[list[float]] = field(default_factory=list)  # [epoch][member]
    holdout_nll: list[float] = field(default_factory=list)  # [epoch], epoch 0 = before training
    holdout_nll_members: list[list[float]] = field(default_factory=list)
    best_epoch: int = 0
    stopping_epoch: int = 0
    max_epochs: int = 0
    patience: int = 0
    holdout_seed: int = 0
    n_train: int = 0
    n_holdout: int = 0

    @property
    def best_holdout_nll(self) -> float:
        return self.holdout_nll[self.best_epoch]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class EnsembleModel:
    """K probabilistic networks predicting (reward, next-state) from (state, action).

    Networks see normalized inputs and predict normalized targets
    (reward, next_state - state); predictions are mapped back to raw units.
    """

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        ensemble_size: int = 5,
        hidden: tuple[int, ...] = (200, 200, 200, 200),
        activation: str = "silu",
        rng: np.random.Generator | None = None,
        predict_delta: bool = True,
        zero_last: bool = False,
    ):
        if ensemble_size < 2:
            raise ValueError("ensemble needs K >= 2 members")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.K = int(ensemble_size)
        self.out_dim = 1 + state_dim
        self.predict_delta = predict_delta
        self.net = Mlp(
            [state_dim + action_dim, *hidden, 2 * self.out_dim],
            activation=activation,
            rng=rng,
            ensemble_size=self.K,
            zero_last=zero_last,
        )
        self.max_logvar = Tensor(np.full((1, self.out_dim), 0.5), requires_grad=True, name="max_logvar")
        self.min_logvar = Tensor(np.full((1, self.out_dim), -10.0), requires_grad=True, name="min_logvar")
        self.in_mean = np.zeros(state_dim + action_dim)
        self.in_std = np.ones(state_dim + action_dim)
        self.out_mean = np.zeros(self.out_dim)
        self.out_std = np.ones(self.out_dim)
        self.trained_epochs = 0
        self._opt: Adam | None = None

    @property
    def is_trained(self) -> bool:
        return self.trained_epochs > 0

    def parameters(self) -> list[Tensor]:
        return self.net.parameters() + [self.max_logvar, self.min_logvar]

    # -- normalization --------------------------------------------------------------
    def _inputs(self, states, actions) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        if states.shape[-1] != self.state_dim or actions.shape[-1] != self.action_dim:
            raise ValueError(
                f"expected state dim {self.state_dim} / action dim {self.action_dim}, "
                f"got {states.shape} / {actions.shape}"
            )
        x = np.concatenate([states, actions], axis=-1)
        if not np.isfinite(x).all():
            raise ValueError("model inputs contain NaN or Inf")
        return (x - self.in_mean) / self.in_std

    def targets(self, states, rewards, next_states) -> np.ndarray:
        rewards = np.asarray(rewards, dtype=np.float64).reshape(-1, 1)
        nxt = np.asarray(next_states, dtype=np.float64)
        delta = nxt - states if self.predict_delta else nxt
        return np.concatenate([rewards, delta], axis=-1)

    def _bounded_logvar_np(self, raw: np.ndarray) -> np.ndarray:
        mx, mn = self.max_logvar.data, self.min_logvar.data
        lv = mx - np.logaddexp(0.0, mx - raw)
        return mn + np.logaddexp(0.0, lv - mn)

    def _bounded_logvar(self, raw: Tensor) -> Tensor:
        lv = self.max_logvar - ag.softplus(self.max_logvar - raw)
        return self.min_logvar + ag.softplus(lv - self.min_logvar)

    # -- prediction -------------------------------------------------------------------
    def predict_normalized(self, states, actions) -> tuple[np.ndarray, np.ndarray]:
        """Member means/variances of shape (K, N, D) in normalized target units."""
        out = self.net.predict(self._inputs(states, actions))
        d = self.out_dim
        mu = out[..., :d]
        var = np.exp(self._bounded_logvar_np(out[..., d:]))
        floor = VAR_FLOOR / self.out_std**2
        return mu, np.maximum(var, floor)

    def denormalize(self, states, mu_n, var_n) -> tuple[np.ndarray, np.ndarray]:
        mean = mu_n * self.out_std + self.out_mean
        var = np.maximum(var_n * self.out_std**2, VAR_FLOOR)
        if self.predict_delta:
            mean = mean.copy()
            mean[..., 1:] += np.atleast_2d(states)
        return mean, var

    def predict(self, states, actions) -> tuple[np.ndarray, np.ndarray]:
        """Member means/variances of shape (K, N, 1 + state_dim) in raw units."""
        mu_n, var_n = self.predict_normalized(states, actions)
        return self.denormalize(states, mu_n, var_n)

    def predict_member(self, k: int, state, action) -> GaussianPrediction:
        if not 0 <= k < self.K:
            raise IndexError(f"member index {k} outside [0, {self.K})")
        mean, var = self.predict(state, action)
        return GaussianPrediction(mean[k], var[k])

    def sample_transition(self, state, action, rng: np.random.Generator):
        """Pick a member uniformly and sample (reward, next state) from it."""
        k, r, s2, _ = self.step(np.atleast_2d(state), np.atleast_2d(action), rng)
        return int(k[0]), float(r[0]), s2[0]

    def step(self, states, actions, rng: np.random.Generator, estimator: str = "ovr"):
        """Sample one model transition per row and score it.

        Returns ``(k, rewards, next_states, u)``: member index, sampled
        reward, sampled next state and uncertainty score for each sample.
        Scores are computed in normalized target units, which leaves both
        KL estimators unchanged and shifts the likelihood score by a
        constant, so rankings match those in raw units.
        """
        if estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {estimator!r}")
        states = np.atleast_2d(states)
        mu_n, var_n = self.predict_normalized(states, actions)
        n = states.shape[0]
        k = rng.integers(0, self.K, size=n)
        cols = np.arange(n)
        z = mu_n[k, cols] + np.sqrt(var_n[k, cols]) * rng.standard_normal((n, self.out_dim))
        if estimator == "ovr":
            u = ovr_uncertainty(mu_n, var_n, k)
        elif estimator == "ova":
            u = ova_uncertainty(mu_n, var_n, k)
        else:
            u = neg_likelihood_uncertainty(mu_n, var_n, z)
        raw = z * self.out_std + self.out_mean
        rewards = raw[:, 0]
        nxt = raw[:, 1:] + states if self.predict_delta else raw[:, 1:]
        return k, rewards, nxt, u

    def uncertainty(self, states, actions, k=None, estimator: str = "ovr") -> np.ndarray:
        """Deterministic score per sample; default averages over all members k."""
        mu_n, var_n = self.predict_normalized(states, actions)
        fn = {"ovr": ovr_uncertainty, "ova": ova_uncertainty}[estimator]
        if k is not None:
            return fn(mu_n, var_n, k)
        return np.mean([fn(mu_n, var_n, j) for j in range(self.K)], axis=0)

    # -- persistence --------------------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for name, arr in self.net.state_dict().items():
            for k in range(self.K):
                out[f"member{k}.{name}"] = arr[k]
        out["logvar.max"] = self.max_logvar.data.copy()
        out["logvar.min"] = self.min_logvar.data.copy()
        for key in ("in_mean", "in_std", "out_mean", "out_std"):
            out[f"norm.{key}"] = getattr(self, key).copy()
        out["meta.trained_epochs"] = np.array(float(self.trained_epochs))
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        stacked = {}
        for name in self.net.state_dict():
            stacked[name] = np.stack([state[f"member{k}.{name}"] for k in range(self.K)])
        self.net.load_state_dict(stacked)
        self.max_logvar.data = np.array(state["logvar.max"], dtype=np.float64)
        self.min_logvar.data = np.array(state["logvar.min"], dtype=np.float64)
        for key in ("in_mean", "in_std", "out_mean", "out_std"):
            setattr(self, key, np.array(state[f"norm.{key}"], dtype=np.float64))
        self.trained_epochs = int(np.asarray(state["meta.trained_epochs"]).reshape(-1)[0])

    # -- training ---------------------------------------------------------------------------
    def _nll_loss(self, x: np.ndarray, y: np.ndarray, coef: float) -> tuple[Tensor, Tensor]:
        out = self.net(x)
        d = self.out_dim
        mu = out[..., :d]
        lv = self._bounded_logvar(out[..., d:])
        per_member = ag.gaussian_nll(mu, lv, y).mean(axis=(1, 2))
        loss = per_member.sum()
        if coef:
            loss = loss + coef * (self.max_logvar.sum() - self.min_logvar.sum())
        return loss, per_member

    def holdout_nll(self, x_n: np.ndarray, y_n: np.ndarray) -> np.ndarray:
        """Per-member mean Gaussian NLL (normalized units) on prepared arrays."""
        out = self.net.predict(x_n)
        d = self.out_dim
        lv = self._bounded_logvar_np(out[..., d:])
        nll = 0.5 * ((out[..., :d] - y_n) ** 2 * np.exp(-lv) + lv + ag.LOG_2PI)
        return nll.mean(axis=(1, 2))


def train_ensemble(
    ens: EnsembleModel,
    states,
    actions,
    rewards,
    next_states,
    cfg: ModelTrainConfig | None = None,
    rng: np.random.Generator | None = None,
) -> TrainReport:
    """Fit all members by Gaussian NLL with early stopping on a shared holdout split.

    Each member sees its own shuffle of the training split.  Normalization
    statistics are recomputed from the training split and then frozen.  The
    parameters from the epoch with the lowest mean holdout NLL are kept.
    """
    cfg = cfg or ModelTrainConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    states = np.asarray(states, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    n = states.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    if not 0.0 < cfg.holdout_fraction < 1.0:
        raise ValueError("holdout fraction must lie in (0, 1)")
    holdout_seed = int(rng.integers(2**31))
    perm = np.random.default_rng(holdout_seed).permutation(n)
    n_hold = min(max(1, int(round(cfg.holdout_fraction * n))), cfg.max_holdout)
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    if len(train_idx) < cfg.batch_size:
        raise ValueError(
            f"training split has {len(train_idx)} samples, fewer than one minibatch ({cfg.batch_size})"
        )

    x_raw = np.concatenate([states, actions], axis=-1)
    y_raw = ens.targets(states, rewards, next_states)
    ens.in_mean = x_raw[train_idx].mean(axis=0)
    ens.in_std = _safe_std(x_raw[train_idx])
    ens.out_mean = y_raw[train_idx].mean(axis=0)
    ens.out_std = _safe_std(y_raw[train_idx])
    x_n = (x_raw - ens.in_mean) / ens.in_std
    y_n = (y_raw - ens.out_mean) / ens.out_std
    x_tr, y_tr = x_n[train_idx], y_n[train_idx]
    x_ho, y_ho = x_n[hold_idx], y_n[hold_idx]

    params = ens.parameters()
    if ens._opt is None:
        ens._opt = Adam(params, lr=cfg.lr)
    opt = ens._opt
    report = TrainReport(
        max_epochs=cfg.max_epochs,
        patience=cfg.patience,
        holdout_seed=holdout_seed,
        n_train=len(train_idx),
        n_holdout=n_hold,
    )
    ho = ens.holdout_nll(x_ho, y_ho)
    report.holdout_nll.append(float(ho.mean()))
    report.holdout_nll_members.append(ho.tolist())
    report.train_nll.append([float("nan")] * ens.K)
    best = float(ho.mean())
    best_params = [p.data.copy() for p in params]
    bad = 0
    n_tr = len(train_idx)
    n_batches = n_tr // cfg.batch_size
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = np.stack([rng.permutation(n_tr) for _ in range(ens.K)])
        totals = np.zeros(ens.K)
        for b in range(n_batches):
            idx = order[:, b * cfg.batch_size : (b + 1) * cfg.batch_size]
            loss, per_member = ens._nll_loss(x_tr[idx], y_tr[idx], cfg.logvar_bound_coef)
            grads = grad(loss, params)
            if cfg.weight_decay:
                grads = [g + cfg.weight_decay * p.data for g, p in zip(grads, params)]
            opt.step(grads)
            totals += per_member.data
        ens.trained_epochs += 1
        report.train_nll.append((totals / max(n_batches, 1)).tolist())
        ho = ens.holdout_nll(x_ho, y_ho)
        if not np.isfinite(ho).all():
            raise NonFiniteError("holdout NLL is not finite")
        report.holdout_nll.append(float(ho.mean()))
        report.holdout_nll_members.append(ho.tolist())
        if ho.mean() < best:
            best = float(ho.mean())
            best_params = [p.data.copy() for p in params]
            report.best_epoch = epoch
            bad = 0
        else:
            bad += 1
            if bad > cfg.patience:
                break
    report.stopping_epoch = epoch
    for p, arr in zip(params, best_params):
        p.data = arr
    log.debug("ensemble trained: %d epochs, best holdout NLL %.4f", epoch, best)
    return report


def _safe_std(x: np.ndarray) -> np.ndarray:
    std = x.std(axis=0)
    return np.where(std < 1e-12, 1.0, std)
