import csv
import json

import numpy as np
import pytest

from m2ac.harness import (
    FULL_HORIZONS,
    ExperimentConfig,
    MetricsRecord,
    MetricsWriter,
    PRESETS,
    TrainingAborted,
    full_preset,
    desk_preset,
    emit_curves,
    merge_curves,
    read_run,
    run_m2ac,
    unmasked,
)
from m2ac.harness import runner
from m2ac.harness.config import STREAMS, seed_streams, stream_rngs
from m2ac.harness.runner import ablation_cells
from m2ac.nn import NonFiniteError, load_checkpoint


def tiny(**kw):
    cfg = desk_preset(
        h_max=2, epochs=2, env_steps_per_epoch=100, horizon=50, eval_episodes=1,
        policy_updates_per_epoch=20, rollout_chunks_per_epoch=2, rollout_batch=16,
    )
    cfg = cfg.replace(**{"model.hidden": (8, 8), "model.max_epochs": 3, "model.batch_size": 32,
                         "sac.hidden": (16, 16), "sac.batch_size": 32})
    return cfg.replace(**kw) if kw else cfg


# -- config ---------------------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(PRESETS))
def test_config_round_trip_is_byte_identical(name):
    text = PRESETS[name]().to_json()
    assert ExperimentConfig.from_json(text).to_json() == text


def test_config_file_round_trip(tmp_path):
    cfg = tiny(alpha=0.01, schedule=0.25)
    cfg.save(tmp_path / "c.json")
    assert ExperimentConfig.load(tmp_path / "c.json") == cfg


def test_full_preset_values():
    for h in FULL_HORIZONS:
        cfg = full_preset(h)
        assert cfg.env_steps_per_epoch == 1000 and cfg.policy_updates_per_epoch == 10_000
        assert cfg.rollouts_per_update == 10.0 and cfg.alpha == 0.001 and cfg.h_max == h
        assert cfg.schedule == "linear" and cfg.model.ensemble_size == 5
    with pytest.raises(ValueError):
        full_preset(5)


def test_one_step_preset_defaults():
    cfg = PRESETS["desk-h1"]()
    rc = cfg.rollout_config()
    assert rc.h_max == 1 and rc.rate(0) == 0.5 and rc.alpha == 0.001 and rc.mode == "non-stop"


def test_validation_errors():
    cfg = ExperimentConfig()
    for kw in ({"real_ratio": 1.5}, {"epochs": -1}, {"mode": "sometimes"}, {"h_max": 0},
               {"schedule": "cosine"}, {"schedule": 0.0}, {"sac.gamma": 1.0}, {"model.ensemble_size": 1}):
        with pytest.raises(ValueError):
            cfg.replace(**kw)
    with pytest.raises(ValueError, match="unknown"):
        cfg.replace(bogus=1)
    with pytest.raises(ValueError, match="unknown"):
        ExperimentConfig.from_dict({**cfg.to_dict(), "extra": 1})


def test_unmasked_variant():
    cfg = unmasked(desk_preset())
    assert cfg.schedule == 1.0 and cfg.alpha == 0.0 and cfg.h_max == 5


def test_seed_streams_are_named_and_independent():
    ss = seed_streams(0)
    assert tuple(ss) == STREAMS
    draws = {k: g.random() for k, g in stream_rngs(0).items()}
    assert len(set(draws.values())) == len(STREAMS)
    assert draws == {k: g.random() for k, g in stream_rngs(0).items()}


# -- training loop -----------------------------------------------------------------------------

def test_zero_epochs_only_initial_eval(tmp_path):
    res = run_m2ac(tiny(epochs=0), seed=0, out_dir=tmp_path)
    assert len(res.records) == 1 and res.records[0].env_steps == 0
    header, recs = read_run(tmp_path / "metrics_seed0.jsonl")
    assert header["seed"] == 0 and len(recs) == 1


@pytest.fixture(scope="module")
def tiny_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    a = run_m2ac(tiny(), seed=1, out_dir=str(out))
    b = run_m2ac(tiny(), seed=1)
    return out, a, b


def test_run_is_deterministic(tiny_runs):
    _, a, b = tiny_runs
    assert json.dumps([r.to_dict() for r in a.records]) == json.dumps([r.to_dict() for r in b.records])


def test_run_records(tiny_runs):
    out, a, _ = tiny_runs
    steps = [r.env_steps for r in a.records]
    assert steps == [0, 100, 200]
    last = a.records[-1]
    assert np.isfinite(last.model_holdout_nll) and 0 < last.kept_fraction < 1
    assert last.model_samples == 2 * (5 + 2)  # per chunk floor(16/3) + floor(16/6)
    header, recs = read_run(out / "metrics_seed1.jsonl")
    assert json.dumps([r.to_dict() for r in recs], sort_keys=True) == json.dumps([r.to_dict() for r in a.records], sort_keys=True)
    assert ExperimentConfig.load(out / "config.json") == tiny()
    state = load_checkpoint(out / "final_seed1.npz")
    assert any(k.startswith("agent.") for k in state) and any(k.startswith("model.") for k in state)


def test_unmasked_rollouts_keep_whole_batch():
    res = run_m2ac(unmasked(tiny(epochs=1)), seed=2)
    assert res.records[-1].kept_fraction == 1.0
    assert res.records[-1].model_samples == 2 * 2 * 16


def test_nan_aborts_with_checkpoint(tmp_path, monkeypatch):
    def broken(*args, **kw):
        raise NonFiniteError("injected")

    monkeypatch.setattr(runner, "update", broken)
    with pytest.raises(TrainingAborted) as info:
        run_m2ac(tiny(), seed=0, out_dir=str(tmp_path))
    assert info.value.checkpoint.endswith("abort_epoch1.npz")
    assert "agent.log_temperature" in load_checkpoint(info.value.checkpoint)


def test_ablation_cells():
    cfg = desk_preset()
    assert [v for v, _ in ablation_cells(cfg, "alpha")] == [0.01, 0.001, 0.0]
    assert [v for v, _ in ablation_cells(cfg, "mode")] == ["non-stop", "hard-stop"]
    assert [v for v, _ in ablation_cells(cfg, "estimator")] == ["ovr", "ova", "nll"]
    cells = ablation_cells(cfg, "alpha")
    assert [c.alpha for _, c in cells] == [0.01, 0.001, 0.0]
    assert all(c.seeds == cfg.seeds for _, c in cells)
    with pytest.raises(ValueError):
        ablation_cells(cfg, "colour")


def test_ablation_suite_table():
    table = runner.run_ablation_suite(tiny(epochs=1), "mode", seeds=(0,))
    assert [c["value"] for c in table["cells"]] == ["non-stop", "hard-stop"]
    for c in table["cells"]:
        assert len(c["final_returns"]) == 1 and c["std"] == 0.0 and c["mean"] == c["final_returns"][0]


# -- curves ------------------------------------------------------------------------------------

def write_run(path, returns, steps, seed=0, cfg=None):
    cfg = (cfg or desk_preset()).to_dict()
    w = MetricsWriter(path, cfg, seed)
    for i, (s, r) in enumerate(zip(steps, returns)):
        w.write(MetricsRecord(epoch=i, env_steps=s, eval_return=r, kept_fraction=0.25, mean_uncertainty=0.1 * i))
    return path


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_single_run_csv_equals_metrics(tmp_path):
    p = write_run(tmp_path / "a.jsonl", [-1500.0, -800.5, -200.25], [0, 250, 500])
    emit_curves([p], tmp_path / "c.csv")
    rows = read_csv(tmp_path / "c.csv")
    assert [float(r["eval_return_mean"]) for r in rows] == [-1500.0, -800.5, -200.25]
    assert [int(r["env_steps"]) for r in rows] == [0, 250, 500]
    assert all(r["model_holdout_nll_mean"] == "" for r in rows)


def test_identical_runs_have_zero_std(tmp_path):
    paths = [write_run(tmp_path / f"{i}.jsonl", [-3.0, -2.0], [0, 10], seed=i) for i in range(2)]
    rows = emit_curves(paths, tmp_path / "c.csv")
    assert all(r["eval_return_std"] == 0.0 and r["n_runs"] == 2 for r in rows)


def test_seven_runs_hand_averages(tmp_path):
    # 7 runs, 3 buckets of width 100; returns chosen so the sums are exact
    paths = []
    for i in range(7):
        returns = [float(i), 10.0 + 2 * i, 100.0 - i]
        paths.append(write_run(tmp_path / f"{i}.jsonl", returns, [0, 130, 260], seed=i))
    rows = emit_curves(paths, tmp_path / "c.csv", bucket=100)
    assert len(rows) == 3 and [r["env_steps"] for r in rows] == [0, 100, 200]
    assert rows[0]["eval_return_mean"] == 3.0  # (0+1+...+6)/7
    assert rows[1]["eval_return_mean"] == 16.0  # 10 + 2*3
    assert rows[2]["eval_return_mean"] == 97.0
    assert rows[0]["eval_return_std"] == pytest.approx(2.0, abs=1e-15)  # population std of 0..6
    assert rows[1]["eval_return_std"] == pytest.approx(4.0, abs=1e-15)


def test_mismatched_configs_rejected(tmp_path):
    a = write_run(tmp_path / "a.jsonl", [1.0], [0], cfg=desk_preset(alpha=0.01))
    b = write_run(tmp_path / "b.jsonl", [1.0], [0], cfg=desk_preset(alpha=0.0))
    with pytest.raises(ValueError, match="different"):
        emit_curves([a, b], tmp_path / "c.csv")
    with pytest.raises(ValueError):
        merge_curves([])


def test_missing_header_rejected(tmp_path):
    p = tmp_path / "x.jsonl"
    p.write_text(json.dumps({"type": "epoch", "epoch": 0, "env_steps": 0, "eval_return": 1.0}) + "\n")
    with pytest.raises(ValueError, match="header"):
        read_run(p)


def test_non_finite_record_rejected():
    with pytest.raises(FloatingPointError):
        MetricsRecord(epoch=1, env_steps=1, eval_return=float("inf")).check_finite()
    MetricsRecord(epoch=0, env_steps=0, eval_return=-1.0).check_finite()
