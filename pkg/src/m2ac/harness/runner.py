"""Training loops: masked model-based actor-critic, the model-free baseline, and ablation grids."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from ..dynamics import EnsembleModel, ModelTrainConfig, train_ensemble
from ..envs import make_env
from ..nn import NonFiniteError, save_checkpoint
from ..rollout import generate
from ..sac import MixedBuffer, ReplayBuffer, SacAgent, SacConfig, update
from .config import ExperimentConfig, seed_streams, stream_int
from .metrics import MetricsRecord, MetricsWriter

log = logging.getLogger(__name__)


class TrainingAborted(RuntimeError):
    def __init__(self, message: str, checkpoint: str | None):
        super().__init__(message)
        self.checkpoint = checkpoint


def build_env(cfg: ExperimentConfig, seed: int | None, noise_seed: int | None = None):
    return make_env(cfg.env_id, cfg.noise_preset, seed=seed, horizon=cfg.horizon, noise_seed=noise_seed)


def build_agent(cfg: ExperimentConfig, env, rng: np.random.Generator) -> SacAgent:
    s = cfg.sac
    sac_cfg = SacConfig(
        hidden=s.hidden,
        activation=s.activation,
        gamma=s.gamma,
        tau=s.tau,
        lr_actor=s.lr_actor,
        lr_critic=s.lr_critic,
        lr_temperature=s.lr_temperature,
        init_temperature=s.init_temperature,
        learn_temperature=s.learn_temperature,
        batch_size=s.batch_size,
    )
    return SacAgent(env.state_dim, env.action_dim, sac_cfg, rng, env.action_low, env.action_high)


def model_train_config(cfg: ExperimentConfig) -> ModelTrainConfig:
    m = cfg.model
    return ModelTrainConfig(
        holdout_fraction=m.holdout_fraction,
        max_holdout=m.max_holdout,
        patience=m.patience,
        batch_size=m.batch_size,
        max_epochs=m.max_epochs,
        lr=m.lr,
        weight_decay=m.weight_decay,
    )


def evaluate(agent: SacAgent, cfg: ExperimentConfig) -> tuple[float, float]:
    """Mean and std of undiscounted returns of the deterministic policy over fixed episode seeds.

    The episodes are stepped in lockstep so the actor runs one batched
    forward pass per time step.
    """
    envs = [build_env(cfg, cfg.eval_seed + i, noise_seed=cfg.eval_seed + 7919 * (i + 1)) for i in range(cfg.eval_episodes)]
    obs = np.stack([e.reset() for e in envs])
    returns = np.zeros(len(envs))
    for _ in range(cfg.horizon):
        actions = agent.act(obs, deterministic=True)
        for i, e in enumerate(envs):
            o, r, _ = e.step(actions[i])
            obs[i] = o
            returns[i] += r
    return float(returns.mean()), float(returns.std())


def _mean_updates(metrics: list) -> dict:
    if not metrics:
        return {}
    keys = metrics[0].to_dict().keys()
    return {k: float(np.mean([m.to_dict()[k] for m in metrics])) for k in keys}


@dataclass
class RunResult:
    records: list[MetricsRecord] = field(default_factory=list)
    agent: SacAgent | None = None
    ensemble: EnsembleModel | None = None
    real: ReplayBuffer | None = None
    train_reports: list = field(default_factory=list)

    @property
    def returns(self) -> np.ndarray:
        return np.array([r.eval_return for r in self.records])

    @property
    def steps(self) -> np.ndarray:
        return np.array([r.env_steps for r in self.records])


def _dump_abort(out_dir, agent, ens, epoch) -> str | None:
    if out_dir is None:
        return None
    path = os.path.join(out_dir, f"abort_epoch{epoch}.npz")
    state = {f"agent.{k}": v for k, v in agent.state_dict().items()}
    if ens is not None:
        state.update({f"model.{k}": v for k, v in ens.state_dict().items()})
    save_checkpoint(path, state)
    return path


def run_m2ac(cfg: ExperimentConfig, seed: int | None = None, out_dir: str | None = None) -> RunResult:
    """Alternate real data collection, model fitting, masked rollouts and policy updates.

    Per epoch: collect ``env_steps_per_epoch`` real steps with the current
    stochastic policy; refit the ensemble; clear the model buffer; then in
    ``rollout_chunks_per_epoch`` chunks sample ``rollout_batch`` start states
    from the real buffer (with replacement), generate masked rollouts and run
    an equal share of the policy updates.  One evaluation record precedes the
    first epoch.
    """
    seed = cfg.seed if seed is None else seed
    ss = seed_streams(seed)
    rngs = {k: np.random.default_rng(v) for k, v in ss.items()}
    env = build_env(cfg, stream_int(ss["env"]), noise_seed=stream_int(ss["noise"]))
    agent = build_agent(cfg, env, rngs["agent"])
    ens = EnsembleModel(
        env.state_dim,
        env.action_dim,
        cfg.model.ensemble_size,
        cfg.model.hidden,
        cfg.model.activation,
        rng=rngs["model-init"],
    )
    real = ReplayBuffer(cfg.real_capacity, env.state_dim, env.action_dim)
    model_buf = ReplayBuffer(cfg.model_capacity, env.state_dim, env.action_dim)
    mixed = MixedBuffer(real, model_buf)
    rcfg = cfg.rollout_config()
    mcfg = model_train_config(cfg)
    reward_fn = env.reward_fn if cfg.model.known_reward else None

    writer = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        cfg.save(os.path.join(out_dir, "config.json"))
        writer = MetricsWriter(os.path.join(out_dir, f"metrics_seed{seed}.jsonl"), cfg.to_dict(), seed)

    result = RunResult(agent=agent, ensemble=ens, real=real)
    ret, ret_std = evaluate(agent, cfg)
    first = MetricsRecord(epoch=0, env_steps=0, eval_return=ret, eval_return_std=ret_std)
    result.records.append(first)
    if writer:
        writer.write(first)

    obs = env.reset()
    steps = 0
    report = None
    for epoch in range(1, cfg.epochs + 1):
        try:
            for _ in range(cfg.env_steps_per_epoch):
                a = agent.act(obs, rng=rngs["agent"])
                nxt, r, done = env.step(a)
                real.add(obs, a, r, nxt, done)
                steps += 1
                obs = env.reset() if (done or env.time_limit_reached) else nxt

            if report is None or (epoch - 1) % cfg.model.train_every == 0:
                data = real.all()
                report = train_ensemble(
                    ens, data["states"], data["actions"], data["rewards"], data["next_states"],
                    mcfg, rngs["model-train"],
                )
                result.train_reports.append(report)

            model_buf.clear()
            update_metrics = []
            rollout_stats = []
            n_chunks = cfg.rollout_chunks_per_epoch
            per_chunk = np.diff(np.linspace(0, cfg.policy_updates_per_epoch, n_chunks + 1).round().astype(int))
            policy = agent.policy_fn(rngs["rollout"])
            for c in range(n_chunks):
                if cfg.rollout_batch > 0:
                    idx = real.sample_idx(cfg.rollout_batch, rngs["rollout"])
                    batch = generate(ens, policy, real.states[idx], rcfg, rngs["rollout"], reward_fn=reward_fn)
                    if len(batch):
                        arr = batch.arrays()
                        model_buf.add_batch(
                            arr["states"], arr["actions"], arr["rewards"], arr["next_states"],
                            arr["dones"].astype(float), arr["uncertainty"],
                        )
                    rollout_stats.append(batch.stats())
                for _ in range(per_chunk[c]):
                    update_metrics.append(update(agent, mixed, cfg.sac.batch_size, cfg.real_ratio, rngs["buffer"]))
        except (NonFiniteError, FloatingPointError) as exc:
            path = _dump_abort(out_dir, agent, ens, epoch)
            raise TrainingAborted(f"non-finite value in epoch {epoch}: {exc}", path) from exc

        ret, ret_std = evaluate(agent, cfg)
        kept = [s["kept_fraction"] for s in rollout_stats]
        rec = MetricsRecord(
            epoch=epoch,
            env_steps=steps,
            eval_return=ret,
            eval_return_std=ret_std,
            model_holdout_nll=report.best_holdout_nll,
            model_epochs=report.stopping_epoch,
            kept_fraction=float(np.mean(kept)) if kept else float("nan"),
            mean_uncertainty=float(np.mean([s["mean_uncertainty_kept"] for s in rollout_stats])) if kept else float("nan"),
            mean_penalty=float(np.mean([s["mean_penalty"] for s in rollout_stats])) if kept else float("nan"),
            model_samples=len(model_buf),
            updates=_mean_updates(update_metrics),
        )
        rec.check_finite()
        result.records.append(rec)
        if writer and epoch % cfg.log_interval == 0:
            writer.write(rec)
        log.info("seed %d epoch %d steps %d return %.1f", seed, epoch, steps, ret)

    if out_dir is not None:
        state = {f"agent.{k}": v for k, v in agent.state_dict().items()}
        state.update({f"model.{k}": v for k, v in ens.state_dict().items()})
        save_checkpoint(os.path.join(out_dir, f"final_seed{seed}.npz"), state)
    return result


def model_free_baseline_train(
    cfg: ExperimentConfig,
    budget: int,
    seed: int | None = None,
    eval_every: int = 1000,
    updates_per_step: int = 1,
    warmup: int | None = None,
    out_dir: str | None = None,
) -> RunResult:
    """Plain SAC on real data only: one update per env step once ``warmup`` steps are stored.

    Evaluates before training and every ``eval_every`` steps (and at the end).
    """
    seed = cfg.seed if seed is None else seed
    ss = seed_streams(seed)
    rngs = {k: np.random.default_rng(v) for k, v in ss.items()}
    env = build_env(cfg, stream_int(ss["env"]), noise_seed=stream_int(ss["noise"]))
    agent = build_agent(cfg, env, rngs["agent"])
    real = ReplayBuffer(cfg.real_capacity, env.state_dim, env.action_dim)
    warmup = cfg.sac.batch_size if warmup is None else warmup
    writer = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        writer = MetricsWriter(os.path.join(out_dir, f"baseline_seed{seed}.jsonl"), cfg.to_dict(), seed, kind="sac")
    result = RunResult(agent=agent, real=real)

    def record(step: int, metrics: list):
        ret, ret_std = evaluate(agent, cfg)
        rec = MetricsRecord(
            epoch=len(result.records), env_steps=step, eval_return=ret, eval_return_std=ret_std,
            updates=_mean_updates(metrics),
        )
        rec.check_finite()
        result.records.append(rec)
        if writer:
            writer.write(rec)

    record(0, [])
    obs = env.reset()
    metrics = []
    for step in range(1, budget + 1):
        a = agent.act(obs, rng=rngs["agent"])
        nxt, r, done = env.step(a)
        real.add(obs, a, r, nxt, done)
        obs = env.reset() if (done or env.time_limit_reached) else nxt
        if len(real) >= warmup:
            for _ in range(updates_per_step):
                metrics.append(agent.update(real.sample(cfg.sac.batch_size, rngs["buffer"]), rngs["buffer"]))
        if step % eval_every == 0 or step == budget:
            record(step, metrics)
            metrics = []
    return result


# -- ablations ----------------------------------------------------------------------------------

ABLATION_AXES = {
    "alpha": ("alpha", (0.01, 0.001, 0.0)),
    "mode": ("mode", ("non-stop", "hard-stop")),
    "estimator": ("estimator", ("ovr", "ova", "nll")),
    "masking-rate": ("schedule", ("linear", 0.25, 0.5, 1.0)),
    "h-max": ("h_max", (1, 4, 7, 10)),
}


def ablation_cells(cfg: ExperimentConfig, axis: str) -> list[tuple[object, ExperimentConfig]]:
    try:
        key, values = ABLATION_AXES[axis]
    except KeyError:
        raise ValueError(f"unknown ablation axis {axis!r}; choose from {sorted(ABLATION_AXES)}") from None
    return [(v, cfg.replace(**{key: v, "name": f"{cfg.name}-{axis}={v}"})) for v in values]


def run_ablation_suite(cfg: ExperimentConfig, axis: str, seeds=None, out_dir: str | None = None) -> dict:
    """Run every cell of one ablation axis over shared seeds; final-return mean and std per cell."""
    seeds = tuple(cfg.seeds if seeds is None else seeds)
    table = {"axis": axis, "seeds": list(seeds), "cells": []}
    for value, cell_cfg in ablation_cells(cfg, axis):
        finals = []
        for s in seeds:
            sub = None if out_dir is None else os.path.join(out_dir, f"{axis}={value}")
            res = run_m2ac(cell_cfg, seed=s, out_dir=sub)
            finals.append(res.records[-1].eval_return)
        table["cells"].append({
            "value": value,
            "final_returns": finals,
            "mean": float(np.mean(finals)),
            "std": float(np.std(finals)),
        })
    return table
