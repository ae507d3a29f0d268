import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmpa.env import rate
from nmpa.wmmse import SolverDivergenceError, WmmseConfig, sum_rate_of, wmmse_solve

from .oracles import grid_search_optimum


def test_single_link_full_power():
    for sigma in (0.01, 1.0, 10.0):
        assert wmmse_solve(np.array([[1.0]]), WmmseConfig(sigma_N=sigma)) == pytest.approx([1.0])


def test_strong_interference_matches_corner():
    H = np.array([[1.0, 2.0], [2.0, 1.0]])
    cfg = WmmseConfig(sigma_N=1.0)
    best, _ = grid_search_optimum(H, cfg.P_max, cfg.sigma_N)
    corner = max(sum_rate_of(H, np.array(c), 1.0) for c in ([1.0, 0.0], [0.0, 1.0]))
    assert best == pytest.approx(corner)
    assert sum_rate_of(H, wmmse_solve(H, cfg), 1.0) >= 0.95 * corner


def test_no_interference_full_power():
    H = np.diag([0.3, 2.0])
    assert np.array_equal(wmmse_solve(H, WmmseConfig(sigma_N=1.0)), [1.0, 1.0])


def test_sum_rate_of():
    assert sum_rate_of(np.eye(3), np.zeros(3), 0.1) == 0.0
    assert sum_rate_of(np.array([[1.0]]), np.array([1.0]), 1.0) == 1.0
    rng = np.random.default_rng(0)
    H, p = np.abs(rng.normal(size=(3, 3))), rng.uniform(size=3)
    assert sum_rate_of(H, p, 0.5) == pytest.approx(np.sum(rate(p, H, 0.5)), rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), M=st.integers(1, 8), P=st.floats(0.1, 5.0),
       sigma=st.floats(1e-3, 2.0))
def test_box_feasibility(seed, M, P, sigma):
    H = np.abs(np.random.default_rng(seed).normal(size=(M, M)))
    p = wmmse_solve(H, WmmseConfig(P_max=P, sigma_N=sigma))
    assert np.all(p >= 0) and np.all(p <= P)


def test_deterministic_and_batched():
    rng = np.random.default_rng(1)
    H = np.abs(rng.normal(size=(5, 4, 4)))
    cfg = WmmseConfig(sigma_N=0.5)
    a = wmmse_solve(H, cfg)
    assert np.array_equal(a, wmmse_solve(H, cfg))
    for k in range(5):
        np.testing.assert_allclose(wmmse_solve(H[k], cfg), a[k], rtol=1e-12)


def test_divergence_raises():
    H = np.array([[1.0, np.nan], [0.5, 1.0]])
    with pytest.raises(SolverDivergenceError) as exc:
        wmmse_solve(H, WmmseConfig())
    assert exc.value.iteration == 0


@pytest.mark.parametrize("kwargs", [dict(iterations=0), dict(epsilon_w=0.0), dict(sigma_N=0.0)])
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        WmmseConfig(**kwargs)


def test_more_iterations_track(capsys):
    # monotone-in-K is tracked, not asserted
    rng = np.random.default_rng(2)
    H = np.abs(rng.normal(size=(200, 5, 5)))
    means = [float(np.mean(sum_rate_of(H, wmmse_solve(H, WmmseConfig(iterations=k, sigma_N=0.3)), 0.3)))
             for k in (1, 2, 3, 4)]
    print("mean sum-rate by K:", [round(m, 4) for m in means])
    assert all(np.isfinite(means))
