"""Channels, topologies and the instantaneous WMMSE allocation.

Run with ``python demos/01_channels_and_wmmse.py``.
"""
# %%
import numpy as np

from nmpa.env import rate
from nmpa.network import TopologyConfig, sample_channel, sample_topology
from nmpa.rng import stream
from nmpa.wmmse import WmmseConfig, sum_rate_of, wmmse_solve

cfg = TopologyConfig(M=10, S=60.0, R=20.0, topology_mode="mixed")
rng = stream(0, "demo")

# %% [markdown]
# A good topology keeps receivers close to their own transmitter and far from
# everybody else, so H is nearly diagonal. A poor one crowds every
# transmitter into a small disc with distant receivers.

# %%
for mode in ("good", "poor"):
    topo = sample_topology(cfg, rng, mode=mode)
    H = sample_channel(topo, rng)
    off = H[~np.eye(cfg.M, dtype=bool)]
    print(f"{mode:5s} median direct gain {np.median(np.diag(H)):.4f}  "
          f"nonzero interference links {np.count_nonzero(off)}  max {off.max():.4f}")

# %% [markdown]
# WMMSE gives the battery-agnostic allocation p_bar for one channel. On a
# good channel every link transmits at full power; on a poor one it usually
# switches some links off.

# %%
wcfg = WmmseConfig(P_max=1.0, sigma_N=0.01)
for mode in ("good", "poor"):
    H = sample_channel(sample_topology(cfg, rng, mode=mode), rng)
    p = wmmse_solve(H, wcfg)
    print(f"{mode:5s} p_bar {np.round(p, 2)}  sum-rate {sum_rate_of(H, p, 0.01):.2f}"
          f"  (full power: {sum_rate_of(H, np.ones(cfg.M), 0.01):.2f})")

# %%
# batches of channels go through in one call
Hs = np.stack([sample_channel(sample_topology(cfg, rng), rng) for _ in range(200)])
P = wmmse_solve(Hs, wcfg)
print("mean sum-rate over 200 mixed draws:", rate(P, Hs, 0.01).sum(axis=-1).mean().round(3))
