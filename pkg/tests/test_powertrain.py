import math

import numpy as np
import pytest

from miocrl import powertrain as pt
from miocrl.errors import PowerInfeasible, ValidationError
from miocrl.maps import Curve, Grid2D, write_curve, write_grid

P = pt.VehicleParams()


def test_defaults_match_vehicle_table():
    assert P.mass == 5000.0
    assert P.frontal_area == 6.73
    assert P.tyre_radius == 0.5715
    assert P.final_drive_ratio == 4.11
    assert P.gear_ratios == (6.25, 3.583, 2.22, 1.36, 1.0, 0.74)
    assert P.omega_max == 250.0
    assert P.brake_torque_min == -6000.0
    b = pt.BatteryModel()
    assert b.capacity == 6.5 * 3600
    assert b.n_cells == 112
    assert (b.soc_low, b.soc_high) == (0.4, 0.8)


@pytest.mark.parametrize("kw", [dict(mass=0.0), dict(final_drive_eff=1.2),
                                dict(gear_ratios=(1.0, 2.0)), dict(brake_torque_min=10.0)])
def test_invalid_params_rejected(kw):
    with pytest.raises(ValidationError):
        pt.VehicleParams(**kw)


def test_wheel_torque_by_hand():
    v, a = 10.0, 0.5
    force = 5000 * 0.5 + 0.5 * 0.65 * 1.1985 * 6.73 * v * v + 0.01 * 5000 * 9.81
    assert pt.wheel_torque_demand(v, a, P) == pytest.approx(force * 0.5715, rel=1e-12)


def test_standstill_has_no_demand():
    assert pt.wheel_torque_demand(0.0, 0.0, P) == 0.0


def test_shaft_speed_and_gain():
    assert pt.shaft_speed(10.0, 0, P) == pytest.approx(10.0 / 0.5715 * 4.11 * 6.25)
    assert pt.drivetrain_gain(5, P) == pytest.approx(4.11 * 0.74 * 0.931 * 0.931)


def test_motor_torque_closes_balance():
    T_w, T_e, g = 2000.0, 150.0, 2
    T_m = pt.motor_torque(T_w, 0.0, T_e, g, P)
    assert (T_m + T_e) * pt.drivetrain_gain(g, P) == pytest.approx(T_w)


def test_engine_off_below_idle():
    m = pt.EngineMap()
    omega = np.array([0.0, 50.0, 99.999, 100.0, 200.0])
    T = pt.engine_torque_feasible(omega, 600.0, m)
    np.testing.assert_array_equal(T[:3], 0.0)
    assert T[3] == 600.0
    assert T[4] == pytest.approx(90000.0 / 200.0)


def test_fuel_zero_without_torque():
    m = pt.EngineMap()
    assert pt.fuel_rate(200.0, 0.0, m) == 0.0
    assert pt.fuel_rate(200.0, 100.0, m) > 0.0


def test_max_fuel_rate_hits_power_ceiling():
    # the surrogate limit caps shaft power at 90 kW between 150 and 250 rad/s
    expected = 1e-4 + 6e-8 * 90000 + 1e-13 * 90000 ** 2
    assert pt.max_fuel_rate(pt.EngineMap(), 250.0) == pytest.approx(expected, rel=1e-12)


def test_battery_power_losses():
    m = pt.MotorMap()
    assert pt.battery_power(100.0, 200.0, m) == pytest.approx(20000.0 / 0.9)
    assert pt.battery_power(-100.0, 200.0, m) == pytest.approx(-20000.0 * 0.9)
    assert pt.battery_power(0.0, 200.0, m) == 0.0


def test_battery_current_matches_textbook_root():
    E, R, P_ = 400.0, 0.3, 50000.0
    textbook = (E - math.sqrt(E * E - 4 * R * P_)) / (2 * R)
    assert pt.battery_current(E, R, P_) == pytest.approx(textbook, rel=1e-12)
    assert pt.battery_current(E, R, 0.0) == 0.0


def test_battery_current_limit():
    E, R = 400.0, 0.3
    with pytest.raises(PowerInfeasible) as err:
        pt.battery_current(E, R, E * E / (4 * R) * 1.001)
    assert err.value.limit == pytest.approx(E * E / (4 * R))


def test_battery_step_directions():
    b, m = pt.BatteryModel(), pt.MotorMap()
    soc_dis, P_dis, I_dis = pt.battery_step(0.6, 200.0, 150.0, b, m, 1.0)
    soc_chg, P_chg, I_chg = pt.battery_step(0.6, -200.0, 150.0, b, m, 1.0)
    assert soc_dis < 0.6 < soc_chg
    assert P_dis > 0 > P_chg
    assert soc_dis == pytest.approx(0.6 - I_dis / b.capacity)


def test_soc_clamped_to_unit_interval():
    b = pt.BatteryModel(capacity=1.0)
    soc, _, _ = pt.battery_step(0.99, -500.0, 200.0, b, pt.MotorMap(), 1.0)
    assert soc == 1.0


def test_vectorized_and_scalar_agree():
    omega = np.linspace(80.0, 260.0, 7)
    T = np.linspace(0.0, 600.0, 7)
    m = pt.EngineMap()
    vec = pt.engine_torque_feasible(omega, T, m)
    for k in range(7):
        assert vec[k] == pt.engine_torque_feasible(omega[k], T[k], m)


def test_csv_maps_replace_surrogates(tmp_path):
    omega = np.linspace(0.0, 300.0, 31)
    write_curve(tmp_path / "lim.csv", omega, pt.surrogate_engine_limit(omega))
    speeds = np.linspace(100.0, 250.0, 16)
    torques = np.linspace(0.0, 600.0, 13)
    fuel = pt.surrogate_fuel(speeds[None, :], torques[:, None])
    write_grid(tmp_path / "fuel.csv", speeds, torques, fuel)
    model = pt.VehicleModel().with_maps(engine_limit=tmp_path / "lim.csv",
                                        engine_fuel=tmp_path / "fuel.csv")
    assert isinstance(model.engine.torque_limit, Curve)
    assert isinstance(model.engine.fuel_rate, Grid2D)
    # tables are sampled at the nodes, so node values come back exactly
    assert model.engine.fuel_rate(150.0, 300.0) == pytest.approx(pt.surrogate_fuel(150.0, 300.0), rel=1e-12)
    assert model.engine.torque_limit(200.0) == pytest.approx(450.0)
