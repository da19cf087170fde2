"""Experiment configuration, presets and seed streams."""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import asdict, dataclass, field

import numpy as np

from ..dynamics import ESTIMATORS
from ..rollout import MODES, RolloutConfig

# order matters: new streams are appended so existing ones keep their seeds
STREAMS = ("env", "model-init", "rollout", "agent", "eval", "model-train", "noise", "buffer")


def seed_streams(master_seed: int) -> dict[str, np.random.SeedSequence]:
    """Split a master seed into independent named sub-streams."""
    children = np.random.SeedSequence(int(master_seed)).spawn(len(STREAMS))
    return dict(zip(STREAMS, children))


def stream_rngs(master_seed: int) -> dict[str, np.random.Generator]:
    return {k: np.random.default_rng(s) for k, s in seed_streams(master_seed).items()}


def stream_int(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1)[0])


@dataclass
class ModelSection:
    ensemble_size: int = 5
    hidden: tuple[int, ...] = (200, 200, 200, 200)
    activation: str = "silu"
    batch_size: int = 256
    holdout_fraction: float = 0.2
    max_holdout: int = 5000
    patience: int = 5
    max_epochs: int = 100
    lr: float = 1e-3
    weight_decay: float = 1e-5
    train_every: int = 1
    known_reward: bool = False


@dataclass
class SacSection:
    hidden: tuple[int, ...] = (256, 256)
    activation: str = "relu"
    gamma: float = 0.99
    tau: float = 0.005
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    lr_temperature: float = 3e-4
    init_temperature: float = 1.0
    learn_temperature: bool = True
    batch_size: int = 256


@dataclass
class ExperimentConfig:
    name: str = "m2ac"
    env_id: str = "pendulum"
    noise_preset: str = "none"
    horizon: int = 200
    seed: int = 0
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    epochs: int = 30
    env_steps_per_epoch: int = 250
    policy_updates_per_epoch: int = 400
    rollout_chunks_per_epoch: int = 10
    rollout_batch: int = 256
    h_max: int = 5
    schedule: str | float = "linear"
    alpha: float = 1e-3
    mode: str = "non-stop"
    estimator: str = "ovr"
    real_ratio: float = 0.05
    real_capacity: int = 1_000_000
    model_capacity: int = 400_000
    eval_episodes: int = 10
    eval_seed: int = 10_000
    log_interval: int = 1
    model: ModelSection = field(default_factory=ModelSection)
    sac: SacSection = field(default_factory=SacSection)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = _build(ModelSection, self.model)
        if isinstance(self.sac, dict):
            self.sac = _build(SacSection, self.sac)
        self.seeds = tuple(self.seeds)
        self.model.hidden = tuple(self.model.hidden)
        self.sac.hidden = tuple(self.sac.hidden)
        self.validate()

    # -- validation --------------------------------------------------------------
    def validate(self) -> None:
        checks = [
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.env_steps_per_epoch >= 1, "env_steps_per_epoch must be >= 1"),
            (self.policy_updates_per_epoch >= 0, "policy_updates_per_epoch must be >= 0"),
            (self.rollout_chunks_per_epoch >= 1, "rollout_chunks_per_epoch must be >= 1"),
            (self.rollout_batch >= 0, "rollout_batch must be >= 0"),
            (0.0 <= self.real_ratio <= 1.0, "real_ratio must lie in [0, 1]"),
            (self.mode in MODES, f"mode must be one of {MODES}"),
            (self.estimator in ESTIMATORS, f"estimator must be one of {ESTIMATORS}"),
            (self.alpha >= 0, "alpha must be >= 0"),
            (self.eval_episodes >= 1, "eval_episodes must be >= 1"),
            (self.horizon >= 1, "horizon must be >= 1"),
            (self.model.ensemble_size >= 2, "ensemble_size must be >= 2"),
            (0.0 < self.model.holdout_fraction < 1.0, "holdout_fraction must lie in (0, 1)"),
            (self.model.patience >= 0, "patience must be >= 0"),
            (0.0 < self.sac.gamma < 1.0, "gamma must lie in (0, 1)"),
            (0.0 < self.sac.tau <= 1.0, "tau must lie in (0, 1]"),
            (self.real_capacity >= 1 and self.model_capacity >= 1, "capacities must be positive"),
            (self.log_interval >= 1, "log_interval must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        if isinstance(self.schedule, str) and self.schedule != "linear":
            raise ValueError("schedule must be 'linear' or a number in (0, 1]")
        self.rollout_config()  # validates h_max and the schedule

    def rollout_config(self) -> RolloutConfig:
        return RolloutConfig(
            h_max=self.h_max,
            schedule=self.schedule,
            alpha=self.alpha,
            mode=self.mode,
            batch_size=self.rollout_batch,
            estimator=self.estimator,
        )

    @property
    def rollouts_per_update(self) -> float:
        if self.policy_updates_per_epoch == 0:
            return float("inf")
        return self.rollout_chunks_per_epoch * self.rollout_batch / self.policy_updates_per_epoch

    # -- serialization -------------------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return _build(cls, data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    def replace(self, **kw) -> "ExperimentConfig":
        data = self.to_dict()
        for key, value in kw.items():
            set_dotted(data, key, value)
        return self.from_dict(data)

    def without_seed(self) -> dict:
        data = self.to_dict()
        data.pop("seed")
        data.pop("seeds")
        return data


def _build(cls, data: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**data)


def set_dotted(data: dict, key: str, value) -> None:
    parts = key.split(".")
    node = data
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ValueError(f"unknown config section {p!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ValueError(f"unknown config field {key!r}")
    node[parts[-1]] = value


def leaf_fields(cls=ExperimentConfig, prefix: str = "") -> list[tuple[str, typing.Any]]:
    """(dotted name, type) of every scalar or tuple config field."""
    hints = typing.get_type_hints(cls)
    out = []
    for f in dataclasses.fields(cls):
        tp = hints[f.name]
        if dataclasses.is_dataclass(tp):
            out.extend(leaf_fields(tp, prefix + f.name + "."))
        else:
            out.append((prefix + f.name, tp))
    return out


# -- presets ------------------------------------------------------------------------------

def desk_preset(h_max: int = 5, **kw) -> ExperimentConfig:
    """Pendulum at laptop scale: 30 epochs of 250 steps, small networks."""
    cfg = ExperimentConfig(
        name=f"desk-h{h_max}",
        h_max=h_max,
        model=ModelSection(hidden=(64, 64, 64), batch_size=64, max_epochs=15, patience=3),
        sac=SacSection(hidden=(64, 64), batch_size=128, lr_actor=1e-3, lr_critic=1e-3, lr_temperature=1e-3),
    )
    return cfg.replace(**kw) if kw else cfg


def full_preset(h_max: int = 1, **kw) -> ExperimentConfig:
    """Full-scale schedule: 1000 env steps and 10000 updates per epoch, 10 rollouts per update."""
    if h_max not in FULL_HORIZONS:
        raise ValueError(f"h_max must be one of {FULL_HORIZONS}")
    cfg = ExperimentConfig(
        name=f"full-h{h_max}",
        env_steps_per_epoch=1000,
        policy_updates_per_epoch=10_000,
        rollout_chunks_per_epoch=1000,  # one generation per env step
        rollout_batch=100,  # 100k rollouts / 10k updates = 10 per update
        h_max=h_max,
        alpha=1e-3,
        schedule="linear",
    )
    return cfg.replace(**kw) if kw else cfg


FULL_HORIZONS = (1, 4, 7, 10)


def unmasked(cfg: ExperimentConfig) -> ExperimentConfig:
    """Same run with masking and penalty disabled (w = 1, alpha = 0)."""
    return cfg.replace(name=cfg.name + "-unmasked", schedule=1.0, alpha=0.0)


PRESETS = {
    "desk": desk_preset,
    "desk-h1": lambda **kw: desk_preset(1, **kw),
    "full": full_preset,
    "default": lambda **kw: ExperimentConfig().replace(**kw) if kw else ExperimentConfig(),
}
