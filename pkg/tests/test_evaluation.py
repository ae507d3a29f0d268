import csv
import json
import math

import numpy as np
import pytest

from nmpa.config import NetConfig, RunConfig
from nmpa.env import rate
from nmpa.evaluation import (
    compare,
    rollout,
    run_mpa,
    scale_histogram,
    sweep_lengths,
    write_histogram_csv,
    write_summary_json,
    write_sweep_csv,
    write_trajectories_csv,
)
from nmpa.policy import Actor
from nmpa.td3 import make_episode
from nmpa.wmmse import sum_rate_of, wmmse_solve


def small_run(**env):
    env = {"T": 25, **env}
    return RunConfig.from_dict({"seed": 5, "topology": {"M": 4}, "env": env,
                                "network": {"hidden": 6, "extra_features": ["rate"]}})


@pytest.fixture
def actor():
    run = small_run()
    return Actor.create(run.network, run.env.B_max, np.random.default_rng(0))


def test_unlimited_battery_matches_wmmse_sum():
    run = small_run(B_max=1e4, L=0.0)
    ep, b0 = make_episode(run, "test", 0)
    r = run_mpa(ep, b0, run)
    p = wmmse_solve(ep.channels, run.wmmse)
    per_step = [sum_rate_of(ep.channels[t], p[t], run.env.sigma_N) for t in range(ep.T)]
    assert abs(r.sum_rate.sum() - sum(per_step)) <= 1e-9 * sum(per_step)
    assert r.total_violations == 0


def test_tiny_budget_bounds_transmissions():
    run = small_run()
    ep, _ = make_episode(run, "test", 1)
    b0 = np.full(4, 2.0)
    r = run_mpa(ep, b0, run)
    # each transmission costs the fixed alpha plus positive power
    tx_per_node = (r.transmitted > run.env.tx_threshold).sum(axis=0)
    assert np.all(tx_per_node <= 2.0 / run.env.alpha)
    last_tx = np.max(np.nonzero((r.transmitted > run.env.tx_threshold).any(axis=1))[0])
    assert np.all(r.sum_rate[last_tx + 1:] == 0)
    assert np.all(np.diff(r.battery, axis=0) <= 0) and np.all(r.battery >= 0)


def test_rollouts_deterministic(actor):
    run = small_run()
    ep, b0 = make_episode(run, "test", 2)
    a, b = rollout(ep, b0, run, actor), rollout(ep, b0, run, actor)
    assert np.array_equal(a.sum_rate, b.sum_rate) and np.array_equal(a.scale, b.scale)
    assert np.array_equal(run_mpa(ep, b0, run).sum_rate, run_mpa(ep, b0, run).sum_rate)


def test_cumulative_non_decreasing(actor):
    run = small_run()
    ep, b0 = make_episode(run, "test", 3)
    r = rollout(ep, b0, run, actor)
    assert np.all(np.diff(r.cumulative) >= 0)
    assert r.achievable.shape == (25, 4)
    np.testing.assert_allclose(r.achievable, rate(r.p_bar, ep.channels, run.env.sigma_N))


def test_self_comparison_gives_zero_improvement(actor):
    run = small_run()
    rep = compare(run, actor, 3, baseline=actor)
    assert np.all(rep.improvements == 0)


def test_pairing_uses_identical_episodes(actor):
    run = small_run()
    rep = compare(run, actor, 3)
    for n, m in zip(rep.nmpa, rep.mpa):
        assert np.array_equal(n.p_bar, m.p_bar) and np.array_equal(n.battery[0], m.battery[0])


def test_length_100_row_matches_compare(actor):
    run = small_run(T=100)
    rows = sweep_lengths(run, actor, [100], 2)
    s = compare(run, actor, 2).summary()
    assert rows[0]["nmpa_mean"] == s["nmpa_episodic_sum_rate"]["mean"]
    assert rows[0]["mpa_mean"] == s["mpa_episodic_sum_rate"]["mean"]
    assert rows[0]["improvement_mean"] == s["relative_improvement"]["mean"]


def test_histogram_conserves_counts_and_marks_empty(actor):
    run = small_run()
    rep = compare(run, actor, 3)
    rows = scale_histogram(rep.nmpa, run.env.B_max, bins=20)
    assert len(rows) == 400
    assert sum(r["count"] for r in rows) == 3 * 25 * 4
    empty = [r for r in rows if r["count"] == 0]
    assert empty and all(math.isnan(r["mean_scale"]) for r in empty)
    full = [r for r in rows if r["count"] > 0]
    assert all(0 < r["mean_scale"] < 1 for r in full)


def test_depleted_bins_use_small_scales():
    # synthetic policy: scale equals the battery fraction
    run = small_run()

    class BatteryFraction:
        net = NetConfig()

        def scale(self, b, powers=None, p_bar=None, c_bar=None):
            return np.clip(b / 20.0, 0, 1)

    rep = compare(run, BatteryFraction(), 2)
    rows = scale_histogram(rep.nmpa, 20.0, bins=4)
    low = [r["mean_scale"] for r in rows if r["battery_hi"] <= 5 and r["count"]]
    overall = np.mean(np.concatenate([r.scale.ravel() for r in rep.nmpa]))
    assert low and max(low) < overall


def test_writers(tmp_path, actor):
    run = small_run()
    rep = compare(run, actor, 2)
    write_trajectories_csv(rep, tmp_path / "traj.csv")
    rows = list(csv.DictReader(open(tmp_path / "traj.csv")))
    assert len(rows) == 2 * 25 and rows[0]["t"] == "1"
    assert float(rows[-1]["nmpa_cumulative"]) == pytest.approx(rep.nmpa[1].cumulative[-1])

    write_histogram_csv(scale_histogram(rep.nmpa, 20.0), tmp_path / "hist.csv")
    hist = list(csv.DictReader(open(tmp_path / "hist.csv")))
    assert any(r["mean_scale"] == "" for r in hist)

    write_sweep_csv(sweep_lengths(run, actor, [5, 10], 1), tmp_path / "sweep.csv")
    assert [r["length"] for r in csv.DictReader(open(tmp_path / "sweep.csv"))] == ["5", "10"]

    summary = {**rep.summary(), "missing": math.nan}
    write_summary_json(summary, tmp_path / "s.json")
    loaded = json.loads((tmp_path / "s.json").read_text())
    assert loaded["missing"] is None and loaded["episodes"] == 2
    assert loaded["relative_improvement"]["n"] == 2


def test_outputs_byte_identical_on_rerun(tmp_path, actor):
    run = small_run()
    for name in ("a.csv", "b.csv"):
        write_trajectories_csv(compare(run, actor, 2), tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
