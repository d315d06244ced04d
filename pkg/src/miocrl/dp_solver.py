"""Backward-induction dynamic programming over a SOC grid.

The optimality oracle for the learned controller. Controls are an engine
torque grid crossed with the gear set; the only state is the battery SOC.
Transitions reuse the environment's torque split and battery model, so the
DP and the simulator agree on what is feasible.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dp_kernel
from . import powertrain as pt
from .drive_cycle import DriveCycle, kinematics
from .errors import InfeasibleRollout, NoFeasiblePath, PowerInfeasible, TooLarge
from .evaluation import run_episode
from .hev_env import HybridAction, normalize_torque, split_torques


@dataclass(frozen=True)
class DpConfig:
    soc_points: int = 400
    soc_min: float = 0.4
    soc_max: float = 0.8
    torque_points: int = 600
    torque_max: float = 600.0
    gears: tuple | None = None       # gear indices; None = all
    window: tuple | None = None      # SOC constraint; None = battery limits
    mode: str = "linear"             # or "nearest"
    infeasible_cost: float = 1e9

    def __post_init__(self):
        if self.mode not in ("linear", "nearest"):
            raise ValueError("mode must be 'linear' or 'nearest'")
        if self.soc_points < 2 or self.torque_points < 1 or self.soc_max <= self.soc_min:
            raise ValueError("degenerate DP grid")

    @property
    def soc_grid(self):
        return np.linspace(self.soc_min, self.soc_max, self.soc_points)

    @property
    def torque_grid(self):
        return np.linspace(0.0, self.torque_max, self.torque_points)

    def gear_list(self, model: pt.VehicleModel):
        return tuple(range(model.params.n_gears)) if self.gears is None else tuple(self.gears)

    def soc_window(self, model: pt.VehicleModel):
        b = model.battery
        return (b.soc_low, b.soc_high) if self.window is None else tuple(self.window)


@dataclass
class DpSolution:
    value: np.ndarray        # (T + 1, n_soc) cost-to-go in kg
    policy: np.ndarray       # (T, n_soc) flat action index, -1 where infeasible
    cfg: DpConfig
    gears: tuple
    soc0: float
    total_fuel: float
    terminal_soc: float = float("nan")

    @property
    def n_torque(self):
        return self.cfg.torque_points

    @property
    def torque_index(self):
        return np.where(self.policy >= 0, self.policy % self.n_torque, -1)

    @property
    def gear_index(self):
        g = np.asarray(self.gears)
        return np.where(self.policy >= 0, g[self.policy // self.n_torque], -1)

    def action(self, t, node):
        a = int(self.policy[t, node])
        if a < 0:
            return None
        return float(self.cfg.torque_grid[a % self.n_torque]), int(self.gears[a // self.n_torque])


def _nearest_node(soc, grid):
    h = (grid[-1] - grid[0]) / (len(grid) - 1)
    k = math.floor((soc - grid[0]) / h + 0.5)
    return min(max(k, 0), len(grid) - 1)


def stage_actions(v, T_w, model: pt.VehicleModel, torque_grid, gears):
    """Per-action power, fuel and feasibility for one time step.

    Flat action index is ``gear_position * len(torque_grid) + torque_index``.
    """
    g = np.asarray(gears)[:, None]
    T = np.asarray(torque_grid)[None, :]
    s = split_torques(v, T_w, T, g, model)
    shape = (len(gears), len(torque_grid))
    feasible = ~(np.broadcast_to(s.omega_violation, shape) | np.broadcast_to(s.motor_violation, shape))
    power = np.broadcast_to(pt.battery_power(s.T_m, s.omega, model.motor), shape)
    fuel = np.broadcast_to(pt.fuel_rate(s.omega, s.T_e, model.engine) * model.params.dt, shape)
    return (np.ascontiguousarray(power, dtype=float).ravel(),
            np.ascontiguousarray(fuel, dtype=float).ravel(),
            np.ascontiguousarray(feasible, dtype=np.uint8).ravel())


def _value_at(values, grid, soc, mode, sentinel):
    if mode == "nearest":
        return float(values[_nearest_node(soc, grid)])
    h = (grid[-1] - grid[0]) / (len(grid) - 1)
    x = (soc - grid[0]) / h
    k = min(max(math.floor(x), 0), len(grid) - 2)
    frac = min(max(x - k, 0.0), 1.0)
    v0, v1 = values[k], values[k + 1]
    if frac == 0.0:
        return float(v0)
    if frac == 1.0:
        return float(v1)
    if v0 >= sentinel or v1 >= sentinel:
        return float(v1 if frac >= 0.5 else v0)
    return float(v0 + frac * (v1 - v0))


def dp_solve(cycle: DriveCycle, model: pt.VehicleModel | None = None, cfg: DpConfig | None = None,
             soc0=0.6, backend=None, rollout=True) -> DpSolution:
    """Minimize total fuel over the cycle by backward recursion.

    Raises :class:`NoFeasiblePath` when no feasible action sequence starts
    from ``soc0``; ``dead_step`` names the first step at which every node is
    infeasible, if there is one.
    """
    model = model or pt.VehicleModel()
    cfg = cfg or DpConfig()
    kernel = dp_kernel.get(backend) if backend else dp_kernel.stage_min
    threads = dp_kernel.thread_count()
    grid = np.ascontiguousarray(cfg.soc_grid)
    gears = cfg.gear_list(model)
    lo, hi = cfg.soc_window(model)
    sentinel = float(cfg.infeasible_cost)
    kin = kinematics(cycle)
    T_w = np.asarray(pt.wheel_torque_demand(kin.speeds, kin.accels, model.params))
    n_t = len(cycle)
    emf = np.ascontiguousarray(pt.pack_emf(grid, model.battery), dtype=float)
    res = np.ascontiguousarray(pt.pack_resistance(grid, model.battery), dtype=float)
    value = np.zeros((n_t + 1, len(grid)))
    policy = np.full((n_t, len(grid)), -1, dtype=np.int32)
    dt, cap = model.params.dt, model.battery.capacity
    for t in range(n_t - 1, -1, -1):
        power, fuel, feas = stage_actions(kin.speeds[t], T_w[t], model, cfg.torque_grid, gears)
        kernel(grid, emf, res, power, fuel, feas, value[t + 1], dt, cap, lo, hi, sentinel,
               cfg.mode == "nearest", value[t], policy[t], threads)

    v0 = _value_at(value[0], grid, soc0, cfg.mode, sentinel)
    if v0 >= sentinel:
        dead = next((t for t in range(n_t) if np.all(value[t] >= sentinel)), None)
        raise NoFeasiblePath(f"no feasible action sequence from soc0={soc0}"
                             + (f"; all nodes dead from step {dead}" if dead is not None else ""),
                             dead_step=dead)
    sol = DpSolution(value, policy, cfg, gears, soc0, v0)
    if rollout:
        try:
            report, _ = dp_rollout(sol, cycle, model, soc0)
            sol.terminal_soc = report.terminal_soc
        except InfeasibleRollout:
            pass
    return sol


class DpPolicy:
    """Follow a DP policy table, looking up the SOC node nearest the state."""

    def __init__(self, sol: DpSolution):
        self.sol = sol
        self.grid = sol.cfg.soc_grid

    def __call__(self, state) -> HybridAction:
        node = _nearest_node(state.soc, self.grid)
        act = self.sol.action(state.t, node)
        if act is None:
            # snapping drift can leave the state just outside the feasible set;
            # follow the closest node that still has an action
            live = np.flatnonzero(self.sol.policy[state.t] >= 0)
            if len(live):
                pos = (state.soc - self.grid[0]) / (self.grid[1] - self.grid[0])
                act = self.sol.action(state.t, int(live[np.argmin(np.abs(live - pos))]))
        if act is None:
            raise InfeasibleRollout(f"step {state.t}: SOC node {node} has no feasible action")
        T_e, gear = act
        return HybridAction(normalize_torque(T_e), gear)


def dp_rollout(sol: DpSolution, cycle, model=None, soc0=None, env=None):
    """Greedy forward pass of the DP policy through the simulator."""
    model = model or pt.VehicleModel()
    soc0 = sol.soc0 if soc0 is None else soc0
    return run_episode(DpPolicy(sol), cycle, model, soc0, env=env, name="DP")


def brute_force_optimum(cycle: DriveCycle, model: pt.VehicleModel | None = None,
                        cfg: DpConfig | None = None, soc0=0.6, max_steps=6, max_actions=20):
    """Exhaustive minimum over every action sequence, nearest-node SOC dynamics.

    Independent of the DP kernel: transitions come from scalar
    :func:`powertrain.battery_step` calls and every sequence is costed in
    full. Costs are summed last step first, matching the DP's association.
    """
    model = model or pt.VehicleModel()
    cfg = cfg or DpConfig()
    gears = cfg.gear_list(model)
    torques = cfg.torque_grid
    actions = [(float(T), g) for g in gears for T in torques]
    n_t, n_a = len(cycle), len(actions)
    if n_t > max_steps or n_a > max_actions:
        raise TooLarge(f"{n_a} actions over {n_t} steps exceeds the brute-force guard")
    grid = cfg.soc_grid
    lo, hi = cfg.soc_window(model)
    kin = kinematics(cycle)
    p, b, m = model.params, model.battery, model.motor

    nxt = np.full((n_t, len(grid), n_a), -1, dtype=np.int64)
    fuel = np.zeros((n_t, n_a))
    for t in range(n_t):
        v, a = float(kin.speeds[t]), float(kin.accels[t])
        T_w = float(pt.wheel_torque_demand(v, a, p))
        for j, (T_req, g) in enumerate(actions):
            s = split_torques(v, T_w, T_req, g, model)
            omega, T_e, T_m = float(s.omega), float(s.T_e), float(s.T_m)
            fuel[t, j] = float(pt.fuel_rate(omega, T_e, model.engine)) * p.dt
            if bool(s.omega_violation) or bool(s.motor_violation):
                continue
            for i, soc in enumerate(grid):
                try:
                    soc2, _, _ = pt.battery_step(float(soc), T_m, omega, b, m, p.dt)
                except PowerInfeasible:
                    continue
                if lo <= soc2 <= hi:
                    nxt[t, i, j] = _nearest_node(soc2, grid)

    # node index len(grid) is an absorbing dead state
    dead = len(grid)
    trans = np.full((n_t, dead + 1, n_a), dead, dtype=np.int64)
    trans[:, :dead, :] = np.where(nxt >= 0, nxt, dead)
    trans = trans.reshape(n_t, -1)

    start = _nearest_node(soc0, grid)
    best = math.inf
    # enumerate a prefix in Python and the tail as a vectorized product
    tail = n_t
    while tail > 0 and n_a ** tail > 1 << 20:
        tail -= 1
    head = n_t - tail
    # one contiguous column per tail step
    cols = [c.astype(np.int64) for c in np.unravel_index(np.arange(n_a ** tail), (n_a,) * tail)]
    for prefix in itertools.product(range(n_a), repeat=head):
        node = start
        for t, j in enumerate(prefix):
            node = trans[t, node * n_a + j]
        if node == dead:
            continue
        nodes = np.full(len(cols[0]) if tail else 1, node, dtype=np.int64)
        for c in range(tail):
            nodes = trans[head + c].take(nodes * n_a + cols[c])
        alive = nodes != dead
        if not alive.any():
            continue
        # sum fuel from the last step back to the first
        total = np.zeros(len(nodes))
        for c in range(tail - 1, -1, -1):
            total = fuel[head + c].take(cols[c]) + total
        for t in range(head - 1, -1, -1):
            total = fuel[t, prefix[t]] + total
        best = min(best, float(np.min(total[alive])))
    if not math.isfinite(best):
        raise NoFeasiblePath("no feasible action sequence (exhaustive search)")
    return best


def write_value_table(path, sol: DpSolution):
    grid = sol.cfg.soc_grid
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [repr(float(s)) for s in grid])
        for t, row in enumerate(sol.value):
            w.writerow([t] + [repr(float(v)) for v in row])


def write_policy_table(path, sol: DpSolution):
    grid = sol.cfg.soc_grid
    ti, gi = sol.torque_index, sol.gear_index
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "soc", "torque_index", "gear_index"])
        for t in range(sol.policy.shape[0]):
            for i, s in enumerate(grid):
                w.writerow([t, repr(float(s)), int(ti[t, i]), int(gi[t, i])])


def read_value_table(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    grid = np.array([float(x) for x in rows[0][1:]])
    values = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return grid, values
