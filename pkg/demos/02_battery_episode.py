"""One episode under the myopic allocation: where the battery goes.

Run with ``python demos/02_battery_episode.py``.
"""
# %%
import numpy as np

from nmpa.config import RunConfig
from nmpa.evaluation import run_mpa
from nmpa.td3 import make_episode

run = RunConfig()  # benchmark environment: M=10, T=100, budgets U[10, 20]
ep, b0 = make_episode(run, "test", 0)
r = run_mpa(ep, b0, run)

# %% [markdown]
# MPA spends the lower-level allocation every step. Each transmission costs
# the allocated power plus the fixed cost alpha, so budgets of 10-20 units
# last roughly a dozen steps and the rest of the episode is dead air.

# %%
good = np.array([lab == "good" for lab in ep.labels])
print("initial budgets:", np.round(b0, 1))
print("step at which each battery drops below alpha:",
      [int(np.argmax(col < run.env.alpha)) for col in r.battery.T])
print(f"sum-rate on good steps {r.sum_rate[good].mean():.2f}, poor steps {r.sum_rate[~good].mean():.2f}")
print(f"episodic sum-rate {r.episodic_sum_rate:.3f}, violations per transmitter "
      f"{r.total_violations / run.topology.M:.1f}")

# %% [markdown]
# A hand-written rule already shows the headroom a learned policy can use:
# spend only on good steps, and only when the battery covers the allocation.

# %%
class GoodStepsOnly:
    net = run.network

    def scale(self, b, powers=None, p_bar=None, c_bar=None):
        spend = (c_bar > 2.0) & (b - run.env.alpha >= p_bar)
        return np.where(spend, 1.0, 0.0)

from nmpa.evaluation import rollout

h = rollout(ep, b0, run, GoodStepsOnly())
print(f"rule-based: episodic sum-rate {h.episodic_sum_rate:.3f} "
      f"({100 * (h.episodic_sum_rate / r.episodic_sum_rate - 1):+.1f}% vs MPA), "
      f"violations {h.total_violations}")
