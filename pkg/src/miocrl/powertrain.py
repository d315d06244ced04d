"""Parallel-hybrid powertrain physics.

All functions are pure. The map-level helpers accept numpy arrays as well as
floats so the dynamic-programming solver can evaluate whole action grids with
exactly the same arithmetic the environment uses one step at a time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import PowerInfeasible, ValidationError
from .maps import Curve, Grid2D


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 5000.0
    frontal_area: float = 6.73
    tyre_radius: float = 0.5715
    rolling_coeff: float = 0.01
    air_density: float = 1.1985
    drag_coeff: float = 0.65
    road_grade: float = 0.0
    gravity: float = 9.81
    final_drive_ratio: float = 4.11
    final_drive_eff: float = 0.931
    gearbox_eff: float = 0.931
    gear_ratios: tuple = (6.25, 3.583, 2.22, 1.36, 1.0, 0.74)
    omega_max: float = 250.0
    brake_torque_min: float = -6000.0
    dt: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gear_ratios", tuple(float(g) for g in self.gear_ratios))
        if self.mass <= 0 or self.tyre_radius <= 0 or self.dt <= 0:
            raise ValidationError("mass, tyre_radius and dt must be positive")
        for eff in (self.final_drive_eff, self.gearbox_eff):
            if not 0 < eff <= 1:
                raise ValidationError("efficiencies must lie in (0, 1]")
        g = self.gear_ratios
        if len(g) == 0 or any(a <= b for a, b in zip(g, g[1:])):
            raise ValidationError("gear_ratios must be strictly decreasing")
        if self.brake_torque_min >= 0:
            raise ValidationError("brake_torque_min must be negative")

    @property
    def n_gears(self):
        return len(self.gear_ratios)


# Surrogate maps. The published maps exist only as figures, so these analytic
# stand-ins are calibrated to a plausible 210-260 g/kWh BSFC band.

def surrogate_engine_limit(omega):
    omega = np.asarray(omega, dtype=float)
    lim = np.minimum(600.0, 90000.0 / np.maximum(omega, 1.0))
    return _out(np.where(omega < 100.0, 0.0, lim))


def surrogate_fuel(omega, torque):
    power = np.asarray(omega, dtype=float) * np.asarray(torque, dtype=float)
    return _out(1e-4 + 6.0e-8 * power + 1.0e-13 * power * power)


def surrogate_motor_limit(omega):
    return _out(np.minimum(800.0, 120000.0 / np.maximum(np.asarray(omega, dtype=float), 1.0)))


def surrogate_motor_efficiency(omega, torque):
    shape = np.broadcast(np.asarray(omega), np.asarray(torque)).shape
    return _out(np.full(shape, 0.90))


def surrogate_ocv(soc):
    return _out(3.2 + 0.8 * np.asarray(soc, dtype=float))


def surrogate_resistance(soc):
    return _out(0.002 + 0.001 * (1.0 - np.asarray(soc, dtype=float)))


@dataclass(frozen=True)
class EngineMap:
    torque_limit: Callable = surrogate_engine_limit
    fuel_rate: Callable = surrogate_fuel
    omega_idle: float = 100.0


@dataclass(frozen=True)
class MotorMap:
    torque_limit: Callable = surrogate_motor_limit
    efficiency: Callable = surrogate_motor_efficiency


@dataclass(frozen=True)
class BatteryModel:
    capacity: float = 6.5 * 3600.0  # Coulomb
    n_cells: int = 112
    ocv_cell: Callable = surrogate_ocv
    resistance_cell: Callable = surrogate_resistance
    soc_low: float = 0.4
    soc_high: float = 0.8

    def __post_init__(self):
        if self.capacity <= 0 or self.n_cells <= 0:
            raise ValidationError("capacity and n_cells must be positive")
        if not 0 < self.soc_low < self.soc_high < 1:
            raise ValidationError("need 0 < soc_low < soc_high < 1")


@dataclass(frozen=True)
class VehicleModel:
    params: VehicleParams = field(default_factory=VehicleParams)
    engine: EngineMap = field(default_factory=EngineMap)
    motor: MotorMap = field(default_factory=MotorMap)
    battery: BatteryModel = field(default_factory=BatteryModel)

    def with_maps(self, engine_limit=None, engine_fuel=None, motor_limit=None,
                  motor_efficiency=None, battery_ocv=None, battery_resistance=None):
        """Return a copy with any of the six maps replaced by CSV tables."""
        engine, motor, battery = self.engine, self.motor, self.battery
        if engine_limit:
            engine = replace(engine, torque_limit=Curve.from_csv(engine_limit))
        if engine_fuel:
            engine = replace(engine, fuel_rate=Grid2D.from_csv(engine_fuel))
        if motor_limit:
            motor = replace(motor, torque_limit=Curve.from_csv(motor_limit))
        if motor_efficiency:
            motor = replace(motor, efficiency=Grid2D.from_csv(motor_efficiency))
        if battery_ocv:
            battery = replace(battery, ocv_cell=Curve.from_csv(battery_ocv))
        if battery_resistance:
            battery = replace(battery, resistance_cell=Curve.from_csv(battery_resistance))
        return replace(self, engine=engine, motor=motor, battery=battery)


# ---------------------------------------------------------------------------
# vehicle and driveline

def wheel_torque_demand(v, accel, p: VehicleParams):
    """Quasi-static wheel torque needed to follow ``accel`` at speed ``v``.

    Rolling resistance is switched off at standstill.
    """
    v = np.asarray(v, dtype=float)
    mu = np.where(v > 0, p.rolling_coeff, 0.0)
    force = (p.mass * accel
             + 0.5 * p.drag_coeff * p.air_density * p.frontal_area * v * v
             + mu * p.mass * p.gravity * math.cos(p.road_grade)
             + p.mass * p.gravity * math.sin(p.road_grade))
    return _out(force * p.tyre_radius)


def shaft_speed(v, gear_index, p: VehicleParams):
    ratio = np.asarray(p.gear_ratios)[gear_index]
    return _out(np.asarray(v, dtype=float) / p.tyre_radius * p.final_drive_ratio * ratio)


def drivetrain_gain(gear_index, p: VehicleParams):
    """i_d * i_g * eta_f * eta_g for the selected gear."""
    ratio = np.asarray(p.gear_ratios)[gear_index]
    return _out(p.final_drive_ratio * ratio * p.final_drive_eff * p.gearbox_eff)


def motor_torque(T_w, T_b, T_e, gear_index, p: VehicleParams):
    return _out((np.asarray(T_w, dtype=float) - T_b) / drivetrain_gain(gear_index, p) - T_e)


# ---------------------------------------------------------------------------
# engine

def engine_torque_feasible(omega, T_e_requested, m: EngineMap):
    omega = np.asarray(omega, dtype=float)
    limit = m.torque_limit(omega)
    T_e = np.clip(T_e_requested, 0.0, limit)
    return _out(np.where(omega < m.omega_idle, 0.0, T_e))


def fuel_rate(omega, T_e, m: EngineMap):
    """Fuel mass flow in kg/s; zero whenever the engine delivers no torque."""
    T_e = np.asarray(T_e, dtype=float)
    return _out(np.where(T_e > 0, m.fuel_rate(omega, T_e), 0.0))


def max_fuel_rate(m: EngineMap, omega_max, n_speed=301, n_torque=301):
    """Largest fuel rate over the engine-on operating region [idle, omega_max]."""
    omega = np.linspace(m.omega_idle, omega_max, n_speed)
    frac = np.linspace(0.0, 1.0, n_torque)
    limit = np.asarray(m.torque_limit(omega), dtype=float)
    torque = frac[:, None] * limit[None, :]
    return float(np.max(fuel_rate(omega[None, :], torque, m)))


# ---------------------------------------------------------------------------
# battery

def battery_power(T_m, omega, m: MotorMap):
    """Electrical power drawn by the motor (positive = discharge).

    Motor losses divide the mechanical power when motoring and multiply it
    when generating.
    """
    T_m = np.asarray(T_m, dtype=float)
    eta = m.efficiency(omega, T_m)
    mech = T_m * omega
    return _out(np.where(T_m > 0, mech / eta, np.where(T_m < 0, mech * eta, 0.0)))


def pack_emf(soc, b: BatteryModel):
    return _out(b.n_cells * np.asarray(b.ocv_cell(soc), dtype=float))


def pack_resistance(soc, b: BatteryModel):
    return _out(b.n_cells * np.asarray(b.resistance_cell(soc), dtype=float))


def battery_power_limit(soc, b: BatteryModel):
    """Largest dischargeable power: where the current quadratic has a double root."""
    E = pack_emf(soc, b)
    R = pack_resistance(soc, b)
    return E * E / (4.0 * R)


def battery_current(E, R, P):
    """Physical root of E*I = I^2*R + P, in the cancellation-free form.

    ``2P / (E + sqrt(E^2 - 4RP))`` equals ``(E - sqrt(E^2 - 4RP)) / 2R``
    exactly in real arithmetic and tends to P/E as R -> 0.
    """
    disc = E * E - 4.0 * R * P
    if disc < 0:
        raise PowerInfeasible(P, E * E / (4.0 * R))
    return 2.0 * P / (E + math.sqrt(disc))


def battery_step(soc, T_m, omega, b: BatteryModel, m: MotorMap, dt):
    """Advance the state of charge by one interval.

    Returns ``(soc_next, P_b, I_b)``. Raises :class:`PowerInfeasible` when the
    pack cannot supply the requested power.
    """
    P = float(battery_power(T_m, omega, m))
    E = float(pack_emf(soc, b))
    R = float(pack_resistance(soc, b))
    I = battery_current(E, R, P)
    soc_next = soc - I * dt / b.capacity
    return min(max(soc_next, 0.0), 1.0), P, I
