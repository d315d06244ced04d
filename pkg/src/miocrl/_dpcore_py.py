"""Numpy implementation of the DP stage minimization.

Mirrors ``_dpcore.pyx`` operation for operation so both backends return
bitwise-identical tables.
"""
import numpy as np


def stage_min(soc_grid, emf, res, power, fuel, feasible, v_next, dt, capacity,
              win_lo, win_hi, sentinel, nearest, v_out, policy_out, num_threads=1):
    n = soc_grid.shape[0]
    g0 = soc_grid[0]
    h = (soc_grid[n - 1] - soc_grid[0]) / (n - 1)
    cols = np.flatnonzero(np.asarray(feasible, dtype=bool))
    if cols.size == 0:
        v_out[:] = sentinel
        policy_out[:] = -1
        return
    P = power[cols][None, :]
    E = emf[:, None]
    R = res[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        disc = E * E - 4.0 * R * P
        ok = disc >= 0.0
        cur = 2.0 * P / (E + np.sqrt(np.where(ok, disc, 0.0)))
        s = soc_grid[:, None] - cur * dt / capacity
        s = np.minimum(np.maximum(s, 0.0), 1.0)
        ok &= (s >= win_lo) & (s <= win_hi)
        x = (s - g0) / h
        if nearest:
            k = np.clip(np.floor(x + 0.5), 0, n - 1).astype(np.intp)
            val = v_next[k]
        else:
            k = np.clip(np.floor(x), 0, n - 2).astype(np.intp)
            frac = np.clip(x - k, 0.0, 1.0)
            v0 = v_next[k]
            v1 = v_next[k + 1]
            mid = v0 + frac * (v1 - v0)
            bad = (v0 >= sentinel) | (v1 >= sentinel)
            # a bracket straddling the feasible edge falls back to the nearest node
            near = np.where(frac >= 0.5, v1, v0)
            val = np.where(frac == 0.0, v0, np.where(frac == 1.0, v1, np.where(bad, near, mid)))
        ok &= val < sentinel
        cost = np.where(ok, fuel[cols][None, :] + val, np.inf)
    arg = np.argmin(cost, axis=1)
    best = cost[np.arange(n), arg]
    good = best < sentinel
    v_out[:] = np.where(good, best, sentinel)
    policy_out[:] = np.where(good, cols[arg], -1)
