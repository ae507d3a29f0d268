"""Train a small policy, then compare it against MPA on held-out episodes.

This uses a shortened schedule so it finishes in a few minutes; the full
benchmark run is ``nmpa train configs/benchmark.yaml``.
"""
# %%
from dataclasses import replace

import numpy as np

from nmpa.config import load_config
from nmpa.evaluation import compare, scale_histogram
from nmpa.td3 import train

run = load_config("configs/benchmark.yaml")
run = run.replace(train=replace(run.train, max_episodes=200, eval_interval=50))

agent, report = train(run, progress=lambda rec: print(
    f"episode {rec['episode']:4d}  validation sum-rate {rec['mean_sum_rate']:.3f}  "
    f"violations/tx {rec['violations_per_tx']:.2f}"))

# %%
actor = report.best_nets["actor"]
rep = compare(run, actor, 10)
s = rep.summary()
print(f"NMPA {s['nmpa_episodic_sum_rate']['mean']:.3f} ± {s['nmpa_episodic_sum_rate']['std']:.3f}")
print(f"MPA  {s['mpa_episodic_sum_rate']['mean']:.3f} ± {s['mpa_episodic_sum_rate']['std']:.3f}")
print(f"improvement {100 * s['relative_improvement']['mean']:.1f}%, "
      f"violations/tx {s['nmpa_violations_per_tx']:.3f}")

# %% [markdown]
# Mean scale by (battery, achievable rate): a trained policy keeps scales
# low once the battery runs out and high where the channel is good.

# %%
rows = scale_histogram(rep.nmpa, run.env.B_max, bins=4)
grid = np.array([r["mean_scale"] for r in rows]).reshape(4, 4)
print("rows: battery quartile bins, columns: rate bins")
print(np.round(grid, 2))
