# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled DP stage minimization (see dp_kernel.py for the contract)."""
from cython.parallel cimport prange
from libc.math cimport sqrt, floor

import numpy as np


def stage_min(const double[::1] soc_grid, const double[::1] emf, const double[::1] res,
              const double[::1] power, const double[::1] fuel, const unsigned char[::1] feasible,
              const double[::1] v_next, double dt, double capacity, double win_lo, double win_hi,
              double sentinel, bint nearest, double[::1] v_out, int[::1] policy_out,
              int num_threads=1):
    cdef Py_ssize_t n = soc_grid.shape[0]
    cdef Py_ssize_t m = power.shape[0]
    cdef double g0 = soc_grid[0]
    cdef double h = (soc_grid[n - 1] - soc_grid[0]) / (n - 1)
    cdef Py_ssize_t i, j, k
    cdef double E, R, P, disc, cur, s, x, frac, val, cost, best
    cdef int arg
    if num_threads < 1:
        num_threads = 1
    for i in prange(n, nogil=True, num_threads=num_threads, schedule="static"):
        E = emf[i]
        R = res[i]
        best = sentinel
        arg = -1
        for j in range(m):
            if not feasible[j]:
                continue
            P = power[j]
            disc = E * E - 4.0 * R * P
            if disc < 0.0:
                continue
            cur = 2.0 * P / (E + sqrt(disc))
            s = soc_grid[i] - cur * dt / capacity
            if s < 0.0:
                s = 0.0
            if s > 1.0:
                s = 1.0
            if s < win_lo or s > win_hi:
                continue
            x = (s - g0) / h
            if nearest:
                k = <Py_ssize_t>floor(x + 0.5)
                if k < 0:
                    k = 0
                if k > n - 1:
                    k = n - 1
                val = v_next[k]
                if val >= sentinel:
                    continue
            else:
                k = <Py_ssize_t>floor(x)
                if k < 0:
                    k = 0
                if k > n - 2:
                    k = n - 2
                frac = x - k
                if frac < 0.0:
                    frac = 0.0
                if frac > 1.0:
                    frac = 1.0
                if frac == 0.0:
                    val = v_next[k]
                elif frac == 1.0:
                    val = v_next[k + 1]
                elif v_next[k] >= sentinel or v_next[k + 1] >= sentinel:
                    # bracket straddles the feasible edge: use the nearest node
                    if frac >= 0.5:
                        val = v_next[k + 1]
                    else:
                        val = v_next[k]
                else:
                    val = v_next[k] + frac * (v_next[k + 1] - v_next[k])
                if val >= sentinel:
                    continue
            cost = fuel[j] + val
            if cost < best:
                best = cost
                arg = <int>j
        v_out[i] = best
        policy_out[i] = arg
