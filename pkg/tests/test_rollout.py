import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m2ac.dynamics import EnsembleModel
from m2ac.rollout import RolloutConfig, generate, keep_count, mask_select, masking_schedule, penalized_reward

from helpers import SpyEnsemble, linear_policy, ready_ensemble

ENS = ready_ensemble(0)



def rollout(cfg, n=100, seed=0, ens=ENS):
    starts = np.random.default_rng(seed + 1000).normal(size=(n, 2))
    return generate(ens, linear_policy, starts, cfg, np.random.default_rng(seed))


# -- mask_select ---------------------------------------------------------------------------

def test_mask_select_examples():
    assert mask_select([0.1, 0.5, 0.2, 0.9], 0.5).tolist() == [0, 2]
    assert mask_select([3.0, 1.0, 2.0], 1.0).tolist() == [0, 1, 2]
    assert len(mask_select(np.arange(5.0), 0.5)) == 2


def test_mask_select_edge_cases():
    assert mask_select([], 0.5).size == 0
    assert mask_select([0.1, 0.2], 0.4).size == 0
    assert mask_select([1.0, 1.0, 1.0, 0.5], 0.5).tolist() == [0, 3]
    for bad in (0.0, 1.5, -0.1):
        with pytest.raises(ValueError):
            mask_select([0.1], bad)
    with pytest.raises(ValueError):
        mask_select([0.1, np.nan], 0.5)
    with pytest.raises(ValueError):
        mask_select([0.1, -1.0], 0.5)


def test_keep_count_is_floor():
    assert keep_count(0.3, 10) == 3  # 0.3 * 10 = 2.9999999999999996 in floating point
    assert keep_count(0.5, 5) == 2
    assert keep_count(0.1, 100) == 10


# -- schedule ------------------------------------------------------------------------------

def test_schedule_values():
    assert masking_schedule(1, 0) == 0.5
    assert [masking_schedule(4, h) for h in range(4)] == [0.4, 0.3, 0.2, 0.1]
    with pytest.raises(ValueError):
        masking_schedule(4, 4)
    with pytest.raises(ValueError):
        masking_schedule(0, 0)


@pytest.mark.parametrize("h_max", range(2, 21))
def test_schedule_average_is_quarter(h_max):
    ws = [masking_schedule(h_max, h) for h in range(h_max)]
    assert math.fsum(ws) / h_max == pytest.approx(0.25, abs=1e-15)
    assert all(0 < w <= 0.5 for w in ws) and ws == sorted(ws, reverse=True)


def test_config_validation():
    with pytest.raises(ValueError):
        RolloutConfig(h_max=0)
    with pytest.raises(ValueError):
        RolloutConfig(mode="sometimes")
    with pytest.raises(ValueError):
        RolloutConfig(alpha=-1.0)
    with pytest.raises(ValueError):
        RolloutConfig(schedule=1.5)
    with pytest.raises(ValueError):
        RolloutConfig(estimator="vote")


# -- penalty -----------------------------------------------------------------------------------

def test_penalized_reward_examples():
    assert penalized_reward(1.0, 2.0, 0.001) == pytest.approx(0.998, abs=1e-15)
    assert penalized_reward(1.0, 2.0, 0.0) == 1.0
    assert penalized_reward(-3.5, 0.0, 0.1) == -3.5


@settings(max_examples=300, deadline=None)
@given(r=st.floats(-100, 100), u1=st.floats(0, 1e3), u2=st.floats(0, 1e3),
       a1=st.floats(0, 10), a2=st.floats(0, 10))
def test_penalty_monotone(r, u1, u2, a1, a2):
    lo_u, hi_u = sorted((u1, u2))
    lo_a, hi_a = sorted((a1, a2))
    assert penalized_reward(r, hi_u, lo_a) <= penalized_reward(r, lo_u, lo_a)
    assert penalized_reward(r, lo_u, hi_a) <= penalized_reward(r, lo_u, lo_a)
    assert penalized_reward(r, lo_u, lo_a) <= r


# -- generate --------------------------------------------------------------------------------

def test_untrained_ensemble_rejected():
    ens = EnsembleModel(2, 1, hidden=(8,))
    with pytest.raises(RuntimeError):
        generate(ens, linear_policy, np.zeros((4, 2)), RolloutConfig(), np.random.default_rng(0))


def test_empty_start_gives_empty_batch():
    batch = generate(ENS, linear_policy, np.zeros((0, 2)), RolloutConfig(h_max=3), np.random.default_rng(0))
    assert len(batch) == 0 and batch.steps == [] and batch.arrays() == {}


def test_masking_disabled_is_plain_one_step_rollout():
    starts = np.random.default_rng(3).normal(size=(64, 2))
    batch = generate(ENS, linear_policy, starts, RolloutConfig(h_max=1, schedule=1.0, alpha=0.0), np.random.default_rng(4))
    k, r, nxt, u = ENS.step(starts, linear_policy(starts), np.random.default_rng(4))
    step = batch.steps[0]
    assert step.kept == 64 and np.array_equal(step.states, starts)
    assert np.array_equal(step.rewards, r) and np.array_equal(step.next_states, nxt)
    assert np.array_equal(step.members, k) and np.array_equal(step.uncertainty, u)


def test_hard_stop_counts():
    batch = rollout(RolloutConfig(h_max=3, schedule=0.5, mode="hard-stop"))
    assert batch.kept_counts == [50, 25, 12]
    assert batch.live_counts == [100, 50, 25]


def test_non_stop_counts():
    batch = rollout(RolloutConfig(h_max=4, mode="non-stop"))
    assert batch.kept_counts == [40, 30, 20, 10] and len(batch) == 100
    assert batch.live_counts == [100] * 4 and batch.dropped_counts == [60, 70, 80, 90]


def test_hard_stop_ends_when_nothing_is_kept():
    batch = rollout(RolloutConfig(h_max=5, schedule=0.3, mode="hard-stop"), n=10)
    assert batch.kept_counts == [3, 0] and batch.live_counts == [10, 3]


def test_non_stop_continues_through_empty_step():
    batch = rollout(RolloutConfig(h_max=3, schedule=0.05, mode="non-stop"), n=10)
    assert batch.kept_counts == [0, 0, 0] and batch.live_counts == [10, 10, 10]


def test_stored_rewards_are_penalized():
    batch = rollout(RolloutConfig(h_max=3, alpha=0.5))
    arr = batch.arrays()
    assert np.allclose(arr["rewards"], arr["raw_rewards"] - 0.5 * arr["uncertainty"], atol=1e-14)
    assert all(t.source == "model" and t.uncertainty >= 0 for t in batch.transitions())
    stats = batch.stats()
    assert stats["kept_fraction"] == pytest.approx(len(batch) / 300)
    assert stats["mean_penalty"] == pytest.approx(0.5 * arr["uncertainty"].mean())


def test_non_stop_advances_dropped_samples():
    # the next step starts from every sampled next state, kept or not
    cfg = RolloutConfig(h_max=2, schedule=0.5, alpha=0.0)
    starts = np.random.default_rng(5).normal(size=(20, 2))
    batch = generate(ENS, linear_policy, starts, cfg, np.random.default_rng(6))
    rng = np.random.default_rng(6)
    _, _, nxt, _ = ENS.step(starts, linear_policy(starts), rng)
    second = mask_select(ENS.step(nxt, linear_policy(nxt), rng)[3], 0.5)
    assert np.array_equal(batch.steps[1].states, nxt[second])


def test_termination_hook_removes_done_samples():
    term = lambda s, a, s2: s2[:, 0] > 0
    starts = np.random.default_rng(7).normal(size=(50, 2))
    batch = generate(ENS, linear_policy, starts, RolloutConfig(h_max=2, schedule=1.0), np.random.default_rng(8), termination_fn=term)
    first = batch.steps[0]
    assert np.array_equal(first.dones, first.next_states[:, 0] > 0)
    assert batch.live_counts[1] == int((~first.dones).sum())


def test_known_reward_replaces_sample():
    fn = lambda s, a: s[:, 0] * 2.0
    batch = rollout(RolloutConfig(h_max=1, schedule=1.0, alpha=0.0))
    batch2 = generate(ENS, linear_policy, np.random.default_rng(1000).normal(size=(100, 2)),
                      RolloutConfig(h_max=1, schedule=1.0, alpha=0.0), np.random.default_rng(0), reward_fn=fn)
    assert np.array_equal(batch2.steps[0].rewards, batch.steps[0].states[:, 0] * 2.0)


# -- properties -------------------------------------------------------------------------------

scores_st = st.lists(st.floats(0, 10, allow_nan=False), min_size=0, max_size=60)
rate_st = st.floats(0.01, 1.0)


@settings(max_examples=300, deadline=None)
@given(scores=scores_st, w=rate_st)
def test_mask_select_properties(scores, w):
    kept = mask_select(scores, w)
    n = len(scores)
    assert len(kept) == math.floor(w * n + 1e-9)
    dropped = np.setdiff1d(np.arange(n), kept)
    s = np.asarray(scores)
    if len(kept) and len(dropped):
        assert s[kept].max() <= s[dropped].min()
        # ties at the boundary favour lower indices
        edge = s[kept].max()
        tied_dropped = dropped[s[dropped] == edge]
        tied_kept = kept[s[kept] == edge]
        if len(tied_dropped):
            assert tied_kept.max() < tied_dropped.min()
    assert np.array_equal(kept, np.sort(kept))


@settings(max_examples=100, deadline=None)
@given(n=st.integers(0, 80), h_max=st.integers(1, 5), w=st.one_of(st.just("linear"), rate_st),
       mode=st.sampled_from(["non-stop", "hard-stop"]), seed=st.integers(0, 2**16))
def test_generate_counts_and_ordering(n, h_max, w, mode, seed):
    cfg = RolloutConfig(h_max=h_max, schedule=w, mode=mode, alpha=0.01)
    spy = SpyEnsemble(ENS)
    batch = rollout(cfg, n=n, seed=seed, ens=spy)
    live = n
    for step, u in zip(batch.steps, spy.scores):
        assert step.live == live == len(u)
        assert step.kept == keep_count(cfg.rate(step.h), live)
        if step.kept and step.dropped:
            # the kept-th order statistic is the smallest dropped score
            assert step.uncertainty.max() <= np.sort(u)[step.kept]
        live = live if mode == "non-stop" else step.kept
    if mode == "non-stop" and n:
        assert len(batch.steps) == h_max


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 60), h_max=st.integers(1, 4), seed=st.integers(0, 2**16), alpha=st.floats(0, 1))
def test_modes_agree_without_masking(n, h_max, seed, alpha):
    a = rollout(RolloutConfig(h_max=h_max, schedule=1.0, mode="non-stop", alpha=alpha), n=n, seed=seed).arrays()
    b = rollout(RolloutConfig(h_max=h_max, schedule=1.0, mode="hard-stop", alpha=alpha), n=n, seed=seed).arrays()
    assert a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)
