"""Independent reference computations used by the tests."""
import numpy as np

from nmpa.env import rate


def grid_search_optimum(H, P_max, sigma_N, pitch_divisions=100):
    """Exhaustive search for the best sum-rate of a 2-user channel on a square grid."""
    g = np.linspace(0.0, P_max, pitch_divisions + 1)
    p1, p2 = np.meshgrid(g, g, indexing="ij")
    P = np.stack([p1.ravel(), p2.ravel()], axis=1)
    H = np.asarray(H, dtype=float)
    sinr1 = H[0, 0] ** 2 * P[:, 0] / (sigma_N ** 2 + H[0, 1] ** 2 * P[:, 1])
    sinr2 = H[1, 1] ** 2 * P[:, 1] / (sigma_N ** 2 + H[1, 0] ** 2 * P[:, 0])
    sr = np.log2(1 + sinr1) + np.log2(1 + sinr2)
    k = int(np.argmax(sr))
    return float(sr[k]), P[k]


def central_difference(f, arrays, h=1e-5):
    """Numerical gradient of scalar ``f()`` w.r.t. every entry of each array (mutated in place)."""
    out = []
    for arr in arrays:
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            fp = f()
            arr[idx] = orig - h
            fm = f()
            arr[idx] = orig
            g[idx] = (fp - fm) / (2 * h)
        out.append(g)
    return out
