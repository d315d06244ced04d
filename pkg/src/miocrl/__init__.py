"""Mixed-integer energy management for a parallel hybrid truck.

Modules: ``powertrain`` (physics), ``drive_cycle``, ``hev_env`` (MDP),
``neural`` (dense nets, Adam), ``td3aq`` (agent), ``dp_solver`` (optimality
oracle), ``evaluation`` (violation rates, SOC-corrected fuel) and ``cli``.
"""
from .dp_kernel import BACKEND as DP_BACKEND

__version__ = "0.1.0"
