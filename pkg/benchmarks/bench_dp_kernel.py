"""Time the DP stage kernel and a full solve on each available backend.

    python3 benchmarks/bench_dp_kernel.py [--repeat N] [--soc-points N] [--torque-points N]
"""
import argparse
import time

import numpy as np

from miocrl import dp_kernel, powertrain as pt
from miocrl.dp_solver import DpConfig, dp_solve, kinematics, stage_actions
from miocrl.drive_cycle import synth_cycle


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--soc-points", type=int, default=400)
    ap.add_argument("--torque-points", type=int, default=600)
    ap.add_argument("--duration", type=int, default=60, help="cycle length for the full solve (s)")
    args = ap.parse_args(argv)

    model = pt.VehicleModel()
    cfg = DpConfig(soc_points=args.soc_points, torque_points=args.torque_points)
    cycle = synth_cycle(7, args.duration, 20.0, 1.2)
    kin = kinematics(cycle)
    T_w = np.asarray(pt.wheel_torque_demand(kin.speeds, kin.accels, model.params))
    t = int(np.argmax(T_w))  # a driving step with many feasible actions
    grid = np.ascontiguousarray(cfg.soc_grid)
    emf = np.ascontiguousarray(pt.pack_emf(grid, model.battery), dtype=float)
    res = np.ascontiguousarray(pt.pack_resistance(grid, model.battery), dtype=float)
    power, fuel, feas = stage_actions(kin.speeds[t], T_w[t], model, cfg.torque_grid, cfg.gear_list(model))
    v_next = np.linspace(0.3, 0.1, len(grid))
    lo, hi = cfg.soc_window(model)

    print(f"stage: {len(grid)} SOC nodes x {len(power)} actions; full solve: {len(cycle)} steps")
    rows = []
    for name in dp_kernel.available():
        kernel = dp_kernel.get(name)
        v = np.empty_like(grid)
        pol = np.empty(len(grid), dtype=np.int32)

        def stage():
            kernel(grid, emf, res, power, fuel, feas, v_next, model.params.dt, model.battery.capacity,
                   lo, hi, cfg.infeasible_cost, False, v, pol, 1)

        t_stage = best_of(stage, args.repeat)
        t_solve = best_of(lambda: dp_solve(cycle, model, cfg, 0.6, backend=name, rollout=False),
                          max(1, args.repeat // 2))
        rows.append((name, t_stage, t_solve))
    base = dict((n, (s, f)) for n, s, f in rows).get("python")
    print(f"{'backend':<8} {'stage ms':>10} {'solve s':>10} {'speedup':>8}")
    for name, t_stage, t_solve in rows:
        speed = f"{base[0] / t_stage:7.1f}x" if base else "      -"
        print(f"{name:<8} {1e3 * t_stage:10.2f} {t_solve:10.3f} {speed}")


if __name__ == "__main__":
    main()
