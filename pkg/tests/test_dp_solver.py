import math
from dataclasses import replace

import numpy as np
import pytest

from miocrl import powertrain as pt
from miocrl.dp_solver import (DpConfig, DpPolicy, DpSolution, brute_force_optimum, dp_rollout, dp_solve,
                              read_value_table, write_policy_table, write_value_table)
from miocrl.drive_cycle import DriveCycle, synth_cycle
from miocrl.errors import InfeasibleRollout, NoFeasiblePath, TooLarge
from miocrl.evaluation import run_episode
from miocrl.hev_env import EnvState

COARSE = DpConfig(soc_points=21, torque_points=7, gears=(1, 3), mode="nearest")


def small_battery_model(capacity=3000.0):
    """A small pack so that single steps move the SOC across grid nodes."""
    m = pt.VehicleModel()
    return replace(m, battery=replace(m.battery, capacity=capacity))


def tiny_cycle(rng, n_steps):
    v = [float(rng.uniform(5, 11))]
    for _ in range(n_steps):
        v.append(max(0.0, v[-1] + float(rng.uniform(-0.8, 1.2))))
    return DriveCycle("tiny", 1.0, v)


def test_config_defaults():
    c = DpConfig()
    g = c.soc_grid
    assert len(g) == 400 and g[0] == 0.4 and g[-1] == 0.8
    t = c.torque_grid
    assert len(t) == 600 and t[0] == 0.0 and t[-1] == 600.0
    assert c.infeasible_cost == 1e9
    assert c.gear_list(pt.VehicleModel()) == tuple(range(6))


def test_zero_cycle(zero_cycle):
    cfg = DpConfig(soc_points=41, torque_points=31)
    sol = dp_solve(zero_cycle, pt.VehicleModel(), cfg, soc0=0.6)
    assert sol.total_fuel == 0.0
    assert sol.terminal_soc == 0.6
    report, rows = dp_rollout(sol, zero_cycle, pt.VehicleModel(), 0.6)
    assert report.total_fuel == 0.0
    assert all(r.T_e == 0.0 and r.T_m == 0.0 for r in rows)


def test_one_step_brute_force_is_single_minimum():
    model = small_battery_model()
    cyc = DriveCycle("one", 1.0, [8.0, 9.0])
    assert brute_force_optimum(cyc, model, COARSE, 0.44) == dp_solve(
        cyc, model, COARSE, 0.44, rollout=False).total_fuel


def test_dp_equals_brute_force_on_tiny_instances():
    rng = np.random.default_rng(7)
    model = small_battery_model()
    fueled = 0
    for _ in range(10):
        cyc = tiny_cycle(rng, int(rng.integers(2, 5)))
        soc0 = float(COARSE.soc_grid[rng.integers(1, 6)])
        try:
            bf = brute_force_optimum(cyc, model, COARSE, soc0)
        except NoFeasiblePath:
            with pytest.raises(NoFeasiblePath):
                dp_solve(cyc, model, COARSE, soc0, rollout=False)
            continue
        assert dp_solve(cyc, model, COARSE, soc0, rollout=False).total_fuel == bf
        fueled += bf > 0
    assert fueled >= 2


def test_brute_force_guard():
    cyc = DriveCycle("long", 1.0, [5.0] * 8)
    with pytest.raises(TooLarge):
        brute_force_optimum(cyc, pt.VehicleModel(), COARSE)
    with pytest.raises(TooLarge):
        brute_force_optimum(DriveCycle("s", 1.0, [5.0, 5.0]), pt.VehicleModel(),
                            DpConfig(soc_points=21, torque_points=11, mode="nearest"))


def test_infeasible_everywhere():
    model = pt.VehicleModel(params=pt.VehicleParams(omega_max=0.0))
    cyc = DriveCycle("c", 1.0, [5.0, 6.0, 7.0])
    with pytest.raises(NoFeasiblePath) as err:
        dp_solve(cyc, model, COARSE, 0.6)
    assert err.value.dead_step == 0
    with pytest.raises(NoFeasiblePath):
        brute_force_optimum(cyc, model, COARSE, 0.6)


def test_value_table_properties():
    cyc = synth_cycle(5, 40, 15.0, 1.0)
    cfg = DpConfig(soc_points=41, torque_points=61)
    sol = dp_solve(cyc, pt.VehicleModel(), cfg, 0.6)
    assert np.all(sol.value[-1] == 0.0)
    assert np.all(sol.value >= 0.0)
    feasible = sol.value < cfg.infeasible_cost
    assert feasible.any(axis=1).all()
    assert sol.policy.shape == (len(cyc), 41)
    assert np.all((sol.policy >= 0) == feasible[:-1])


def test_relaxed_window_never_costs_more():
    cyc = synth_cycle(9, 60, 15.0, 1.0)
    model = small_battery_model(8000.0)
    base = DpConfig(soc_points=61, soc_min=0.3, soc_max=0.9, torque_points=31)
    tight = dp_solve(cyc, model, replace(base, window=(0.5, 0.7)), 0.6, rollout=False)
    wide = dp_solve(cyc, model, replace(base, window=(0.4, 0.8)), 0.6, rollout=False)
    assert wide.total_fuel <= tight.total_fuel
    assert np.all(wide.value[0] <= tight.value[0])


def test_rollout_consistent_with_value():
    cyc = synth_cycle(5, 60, 15.0, 1.0)
    model = pt.VehicleModel()
    cfg = DpConfig(soc_points=201, torque_points=121)
    sol = dp_solve(cyc, model, cfg, 0.6)
    report, rows = dp_rollout(sol, cyc, model, 0.6)
    # the rollout snaps to the nearest node each step; allow one torque-grid
    # step of fuel per step as the interpolation budget
    dT = cfg.torque_grid[1]
    tol = len(cyc) * float(pt.fuel_rate(250.0, dT, model.engine))
    assert abs(report.total_fuel - sol.total_fuel) <= tol
    again, rows2 = dp_rollout(sol, cyc, model, 0.6)
    assert rows2 == rows
    same, _ = run_episode(DpPolicy(sol), cyc, model, 0.6)
    assert same.total_fuel == report.total_fuel


def test_threads_do_not_change_results(monkeypatch):
    cyc = synth_cycle(5, 30, 15.0, 1.0)
    cfg = DpConfig(soc_points=101, torque_points=61)
    one = dp_solve(cyc, pt.VehicleModel(), cfg, 0.6, rollout=False)
    monkeypatch.setenv("MIOCRL_THREADS", "4")
    four = dp_solve(cyc, pt.VehicleModel(), cfg, 0.6, rollout=False)
    np.testing.assert_array_equal(one.value, four.value)
    np.testing.assert_array_equal(one.policy, four.policy)


def test_table_export(tmp_path):
    cyc = synth_cycle(5, 20, 12.0, 1.0)
    cfg = DpConfig(soc_points=11, torque_points=13)
    sol = dp_solve(cyc, pt.VehicleModel(), cfg, 0.6)
    write_value_table(tmp_path / "v.csv", sol)
    write_policy_table(tmp_path / "p.csv", sol)
    grid, values = read_value_table(tmp_path / "v.csv")
    np.testing.assert_array_equal(grid, cfg.soc_grid)
    np.testing.assert_array_equal(values, sol.value)
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert len(lines) == 1 + len(cyc) * 11


def test_action_lookup():
    cyc = synth_cycle(5, 20, 12.0, 1.0)
    cfg = DpConfig(soc_points=11, torque_points=13, gears=(2, 4))
    sol = dp_solve(cyc, pt.VehicleModel(), cfg, 0.6)
    for t in range(len(cyc)):
        for node in range(11):
            a = sol.action(t, node)
            if a is None:
                continue
            T, g = a
            assert g in (2, 4)
            assert T in cfg.torque_grid
            assert sol.gear_index[t, node] == g
            assert math.isclose(cfg.torque_grid[sol.torque_index[t, node]], T)


def test_policy_steps_off_dead_node():
    cfg = DpConfig(soc_points=11, torque_points=7, gears=(1,))
    value = np.zeros((2, 11))
    policy = np.full((1, 11), -1, dtype=np.int32)
    policy[0, 6:] = 4
    sol = DpSolution(value, policy, cfg, (1,), 0.6, 0.0)
    pol = DpPolicy(sol)
    state = EnvState(10.0, 0.0, 0.0, 0.52, 0)  # nearest node 3 is dead; node 6 is the closest live one
    act = pol(state)
    assert act.a_d == 1 and act.a_c == pytest.approx(cfg.torque_grid[4] / 300.0 - 1.0)
    sol.policy[0, :] = -1
    with pytest.raises(InfeasibleRollout):
        pol(state)
