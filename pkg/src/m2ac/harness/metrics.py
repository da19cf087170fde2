"""Per-epoch metrics records, JSON-lines run files and merged learning curves."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

CURVE_METRICS = ("eval_return", "model_holdout_nll", "kept_fraction", "mean_uncertainty")


@dataclass
class MetricsRecord:
    epoch: int
    env_steps: int
    eval_return: float
    eval_return_std: float = 0.0
    model_holdout_nll: float = float("nan")
    model_epochs: int = 0
    kept_fraction: float = float("nan")
    mean_uncertainty: float = float("nan")
    mean_penalty: float = float("nan")
    model_samples: int = 0
    updates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsRecord":
        return cls(**data)

    def check_finite(self) -> None:
        # NaN marks "not measured" (e.g. no model at epoch 0); infinities are never valid
        vals = [self.eval_return, self.eval_return_std, *self.updates.values()]
        if not all(math.isfinite(v) for v in vals):
            raise FloatingPointError(f"non-finite metrics at epoch {self.epoch}")


def _json_value(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    return v


def _from_json_value(v):
    return float("nan") if v is None else v


class MetricsWriter:
    """JSON-lines run file: a header line with config and seed, then one line per record."""

    def __init__(self, path: str | os.PathLike, config: dict, seed: int, kind: str = "m2ac"):
        self.path = os.fspath(path)
        with open(self.path, "w") as fh:
            fh.write(json.dumps({"type": "header", "kind": kind, "seed": seed, "config": config}, sort_keys=True) + "\n")

    def write(self, rec: MetricsRecord) -> None:
        with open(self.path, "a") as fh:
            fh.write(json.dumps({"type": "epoch", **_json_value(rec.to_dict())}, sort_keys=True) + "\n")


def read_run(path: str | os.PathLike) -> tuple[dict, list[MetricsRecord]]:
    header = None
    records = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            kind = obj.pop("type")
            if kind == "header":
                header = obj
            else:
                obj = {k: _from_json_value(v) for k, v in obj.items()}
                records.append(MetricsRecord.from_dict(obj))
    if header is None:
        raise ValueError(f"{path}: missing header line")
    return header, records


def _config_key(header: dict) -> str:
    cfg = dict(header["config"])
    cfg.pop("seed", None)
    cfg.pop("seeds", None)
    return json.dumps({"kind": header.get("kind"), "config": cfg}, sort_keys=True)


def merge_curves(
    runs: Sequence[tuple[dict, list[MetricsRecord]]], bucket: int | None = None
) -> list[dict]:
    """Mean and population std across runs per env-step bucket.

    Within one run, records falling in the same bucket are averaged first.
    """
    if not runs:
        raise ValueError("no runs to merge")
    keys = {_config_key(h) for h, _ in runs}
    if len(keys) > 1:
        raise ValueError("runs were produced by different configurations")
    per_run: list[dict[int, dict[str, float]]] = []
    for _, recs in runs:
        groups: dict[int, list[MetricsRecord]] = {}
        for r in recs:
            b = r.env_steps if not bucket else (r.env_steps // bucket) * bucket
            groups.setdefault(b, []).append(r)
        per_run.append(
            {b: {m: float(np.mean([getattr(r, m) for r in rs])) for m in CURVE_METRICS} for b, rs in groups.items()}
        )
    rows = []
    for b in sorted(set().union(*per_run)):
        present = [pr[b] for pr in per_run if b in pr]
        row: dict = {"env_steps": b, "n_runs": len(present)}
        for m in CURVE_METRICS:
            vals = np.array([p[m] for p in present])
            row[f"{m}_mean"] = float(vals.mean())
            row[f"{m}_std"] = float(vals.std())
        rows.append(row)
    return rows


def emit_curves(paths: Iterable[str | os.PathLike], out_path: str | os.PathLike, bucket: int | None = None) -> list[dict]:
    """Merge run files into a plot-ready CSV and return its rows."""
    rows = merge_curves([read_run(p) for p in paths], bucket)
    cols = ["env_steps", "n_runs"] + [f"{m}_{s}" for m in CURVE_METRICS for s in ("mean", "std")]
    with open(out_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})
    return rows


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v
