import numpy as np
import pytest

from nmpa.config import NetConfig
from nmpa.env import rate
from nmpa.policy import Actor, CheckpointError, Critic, load_checkpoint, node_features, save_checkpoint

from .oracles import central_difference

NET = NetConfig()
B_MAX = 20.0


def state(rng, M=5):
    H = np.abs(rng.normal(size=(M, M))) * 0.1
    b = rng.uniform(0, B_MAX, size=M)
    p_bar = rng.uniform(0, 1, size=M)
    return b, H, p_bar


def test_zero_actor_halves_allocation():
    b, H, p_bar = state(np.random.default_rng(0))
    np.testing.assert_array_equal(Actor.zeros(NET, B_MAX).act(b, H, p_bar), 0.5 * p_bar)


def test_zero_lower_level_gives_zero():
    rng = np.random.default_rng(1)
    b, H, _ = state(rng)
    actor = Actor.create(NET, B_MAX, rng)
    assert np.array_equal(actor.act(b, H, np.zeros(5)), np.zeros(5))


def test_allocation_never_exceeds_pmax():
    rng = np.random.default_rng(2)
    for _ in range(50):
        actor = Actor.create(NET, B_MAX, rng)
        for w in actor.params.taps:
            w *= rng.uniform(0, 30)
        b, H, _ = state(rng)
        p = actor.act(b, H, np.ones(5))
        assert np.all(p >= 0) and p.max() <= 1.0


def test_explore_noise_zero_matches_act():
    rng = np.random.default_rng(3)
    b, H, p_bar = state(rng)
    actor = Actor.create(NET, B_MAX, rng)
    assert np.array_equal(actor.act_explore(b, H, p_bar, 0.0, rng), actor.act(b, H, p_bar))


def test_explore_large_noise_stays_in_box():
    rng = np.random.default_rng(4)
    b, H, p_bar = state(rng)
    actor = Actor.create(NET, B_MAX, rng)
    s = actor.explore_scale(b, H, 10.0, rng)
    assert np.all((s >= 0) & (s <= 1))
    assert np.any(s == 0) or np.any(s == 1)


def test_explore_reproducible():
    rng = np.random.default_rng(5)
    b, H, p_bar = state(rng)
    actor = Actor.create(NET, B_MAX, rng)
    a = actor.act_explore(b, H, p_bar, 0.1, np.random.default_rng(42))
    c = actor.act_explore(b, H, p_bar, 0.1, np.random.default_rng(42))
    assert np.array_equal(a, c)


def test_zero_critic_returns_readout_bias():
    rng = np.random.default_rng(6)
    b, H, p_bar = state(rng)
    critic = Critic.create(NET, B_MAX, rng)
    for arr in critic.params.arrays():
        arr[...] = 0
    critic.c[...] = 1.75
    assert critic.value(b, H, rng.uniform(size=5)) == 1.75


@pytest.mark.parametrize("features", [[], ["rate", "p_bar"]])
def test_permutation_symmetries(features):
    net = NetConfig(extra_features=features)
    rng = np.random.default_rng(7)
    actor = Actor.create(net, B_MAX, rng)
    critic = Critic.create(net, B_MAX, rng)
    for _ in range(20):
        b, H, p_bar = state(rng)
        c_bar = rate(p_bar, H, 0.01)
        a = rng.uniform(size=5)
        perm = rng.permutation(5)
        Pm = np.eye(5)[perm]
        Hp = Pm @ H @ Pm.T
        kw, kwp = dict(p_bar=p_bar, c_bar=c_bar), dict(p_bar=p_bar[perm], c_bar=c_bar[perm])
        np.testing.assert_allclose(actor.scale(b[perm], Hp, **kwp), actor.scale(b, H, **kw)[perm],
                                   rtol=1e-12)
        q = critic.value(b, H, a, **kw)
        qp = critic.value(b[perm], Hp, a[perm], **kwp)
        assert abs(q - qp) <= 1e-12 * max(1.0, abs(q))


def test_critic_action_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    critic = Critic.create(NET, B_MAX, rng)
    b, H, _ = state(rng, M=3)
    a = rng.uniform(size=3)
    q, cache = critic.forward(b, a, H)
    grads, da = critic.backward(cache, 1.0)
    (num,) = central_difference(lambda: float(critic.value(b, H, a)), [a])
    np.testing.assert_allclose(da, num, rtol=1e-4, atol=1e-9)
    num_params = central_difference(lambda: float(critic.value(b, H, a)), critic.arrays())
    for g, n in zip(grads, num_params):
        np.testing.assert_allclose(g, n, rtol=1e-4, atol=1e-9)


def test_missing_feature_raises():
    net = NetConfig(extra_features=["rate"])
    with pytest.raises(ValueError):
        node_features(net, B_MAX, np.ones(3))
    x = node_features(net, B_MAX, np.ones(3), action=np.zeros(3), c_bar=np.full(3, 2.0))
    assert x.shape == (3, 3) and np.all(x[:, 2] == 2.0)


def test_bias_flag_controls_trainables():
    rng = np.random.default_rng(9)
    with_bias = Actor.create(NetConfig(), B_MAX, rng)
    without = Actor.create(NetConfig(bias=False), B_MAX, rng)
    assert len(with_bias.arrays()) == 4 and len(without.arrays()) == 2


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    nets = {"actor": Actor.create(NET, B_MAX, rng), "critic1": Critic.create(NET, B_MAX, rng)}
    save_checkpoint(tmp_path / "ck", nets, {"config_hash": "abc", "episode": 3})
    loaded, manifest, _ = load_checkpoint(tmp_path / "ck", NET, B_MAX, expected_hash="abc")
    assert manifest["episode"] == 3
    for name in nets:
        for x, y in zip(nets[name].arrays(), loaded[name].arrays()):
            assert x.tobytes() == y.tobytes()
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "ck", NET, B_MAX, expected_hash="other")
    load_checkpoint(tmp_path / "ck", NET, B_MAX, expected_hash="other", force=True)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing", NET, B_MAX)


def test_headroom_feature_is_clipped_safe_scale():
    from nmpa.policy import headroom
    b = np.array([0.0, 0.5, 1.5, 10.0, 3.0])
    p_bar = np.array([1.0, 1.0, 2.0, 1.0, 0.0])
    h = headroom(b, p_bar, 0.5)
    np.testing.assert_allclose(h, [-0.5, 0.0, 0.5, 2.0, 2.0])
    net = NetConfig(extra_features=["headroom"])
    x = node_features(net, 20.0, b, p_bar=p_bar, alpha=0.5)
    np.testing.assert_allclose(x[:, 1], h)
    with pytest.raises(ValueError):
        node_features(net, 20.0, b)
