"""Hand-written backprop versus central differences.

Run with ``python demos/04_gradcheck.py`` (same as ``nmpa gradcheck``).
"""
# %%
import numpy as np

from nmpa.config import NetConfig
from nmpa.gradcheck import check_instance, run_gradcheck

rng = np.random.default_rng(0)
net = NetConfig(hidden=8, normalize_battery=True, extra_features=["rate"])
for M in (2, 3, 5):
    print(f"M={M}: max relative error {check_instance(rng, M, net):.2e}")

# %%
print(run_gradcheck(50))
