"""Energy-management MDP for the parallel hybrid.

State is ``(v, accel, T_w, soc)``; the action pairs a normalized engine torque
request with a gear index. Negative wheel demand is met by regenerative braking
first and the friction brake second.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import powertrain as pt
from .drive_cycle import DriveCycle, kinematics
from .errors import EpisodeOver, PowerInfeasible, ValidationError

ENGINE_TORQUE_MAX = 600.0  # Nm, shared with the DP torque grid
# requests below this are engine-off; a tanh actor only reaches -1 asymptotically.
# Kept under the smallest nonzero DP grid torque (600/599 Nm).
ENGINE_OFF_TORQUE = 1.0


def denormalize_torque(a_c):
    T = (a_c + 1.0) * (0.5 * ENGINE_TORQUE_MAX)
    return 0.0 if T < ENGINE_OFF_TORQUE else T


def normalize_torque(T_e):
    return T_e / (0.5 * ENGINE_TORQUE_MAX) - 1.0


@dataclass(frozen=True)
class EnvState:
    v: float
    accel: float
    T_w: float
    soc: float
    t: int


@dataclass(frozen=True)
class HybridAction:
    a_c: float
    a_d: int


@dataclass(frozen=True)
class RewardBreakdown:
    r_f: float
    p_omega: float
    p_Tm: float
    p_soc: float


@dataclass(frozen=True)
class Violations:
    omega: bool
    motor: bool
    soc: bool


class Realized(NamedTuple):
    T_e: float
    T_m: float
    T_b: float
    omega: float


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: float
    fuel: float
    done: bool
    breakdown: RewardBreakdown
    realized: Realized
    violations: Violations


class TorqueSplit(NamedTuple):
    omega: object
    T_e: object
    T_m: object
    T_b: object
    omega_violation: object
    motor_violation: object


def split_torques(v, T_w, T_e_request, gear, model: pt.VehicleModel) -> TorqueSplit:
    """Resolve an (engine torque, gear) request into applied torques.

    Works elementwise on arrays. A shaft speed above the limit is flagged and
    then clamped so the maps stay defined; likewise a motor torque outside its
    envelope while driving. When braking the engine is idle, the motor
    regenerates up to its limit and the friction brake takes the rest.
    """
    p = model.params
    gain = pt.drivetrain_gain(gear, p)
    omega_raw = np.asarray(pt.shaft_speed(v, gear, p))
    omega_violation = omega_raw > p.omega_max
    omega = np.minimum(omega_raw, p.omega_max)
    T_w = np.asarray(T_w, dtype=float)
    drive = T_w > 0
    T_e = np.where(drive, pt.engine_torque_feasible(omega, T_e_request, model.engine), 0.0)
    tm_max = np.asarray(model.motor.torque_limit(omega), dtype=float)
    tm_min = -tm_max

    regen = T_w / gain
    T_m_brake = np.maximum(tm_min, regen)
    T_b = np.where(regen >= tm_min, 0.0, np.minimum(T_w - tm_min * gain, 0.0))
    T_b = np.where(drive, 0.0, np.maximum(T_b, p.brake_torque_min))

    T_m_raw = np.where(drive, pt.motor_torque(T_w, 0.0, T_e, gear, p), T_m_brake)
    motor_violation = drive & ((T_m_raw > tm_max) | (T_m_raw < tm_min))
    T_m = np.clip(T_m_raw, tm_min, tm_max)
    return TorqueSplit(omega, T_e, T_m, T_b, omega_violation, motor_violation)


def soc_penalty(soc, b: pt.BatteryModel, p_max):
    """Linear penalty outside [soc_low, soc_high], zero inside."""
    if soc > b.soc_high:
        return p_max * abs(soc - b.soc_high) / (1.0 - b.soc_high)
    if soc < b.soc_low:
        return p_max * abs(soc - b.soc_low) / b.soc_low
    return 0.0


class HevEnv:
    """Single-episode simulator. Not safe to share between threads."""

    def __init__(self, model: pt.VehicleModel | None = None):
        self.model = model or pt.VehicleModel()
        p = self.model.params
        self.fuel_rate_max = pt.max_fuel_rate(self.model.engine, p.omega_max)
        self.p_max = 10.0 * self.fuel_rate_max
        self.cycle = None

    @property
    def n_steps(self):
        return len(self.cycle)

    def reset(self, cycle: DriveCycle, soc0: float = 0.6) -> EnvState:
        if not 0.0 < soc0 < 1.0:
            raise ValidationError(f"soc0 must lie in (0, 1), got {soc0}")
        if cycle.dt != self.model.params.dt:
            raise ValidationError("cycle dt does not match the vehicle control interval")
        self.cycle = cycle
        kin = kinematics(cycle)
        self._v = kin.speeds
        self._a = kin.accels
        self._Tw = np.asarray(pt.wheel_torque_demand(kin.speeds, kin.accels, self.model.params))
        return self._state(0, float(soc0))

    def _state(self, t, soc):
        k = min(t, len(self._v) - 1)
        return EnvState(float(self._v[k]), float(self._a[k]), float(self._Tw[k]), soc, t)

    def step(self, state: EnvState, action: HybridAction) -> StepOutcome:
        a_c = min(max(float(action.a_c), -1.0), 1.0)
        return self.step_torque(state, denormalize_torque(a_c), int(action.a_d))

    def step_torque(self, state: EnvState, T_e_request: float, gear: int) -> StepOutcome:
        """Apply a physical engine-torque request (Nm) and gear index."""
        if self.cycle is None or state.t >= self.n_steps:
            raise EpisodeOver(f"step index {state.t} beyond cycle length")
        if not 0 <= gear < self.model.params.n_gears:
            raise ValidationError(f"gear index {gear} out of range")
        m = self.model
        dt = m.params.dt
        s = split_torques(state.v, state.T_w, T_e_request, gear, m)
        omega, T_e, T_m, T_b = float(s.omega), float(s.T_e), float(s.T_m), float(s.T_b)
        motor_bad = bool(s.motor_violation)
        try:
            soc_next, _, _ = pt.battery_step(state.soc, T_m, omega, m.battery, m.motor, dt)
        except PowerInfeasible as exc:
            # run the pack at its power limit and charge the motor penalty
            motor_bad = True
            eta = float(m.motor.efficiency(omega, T_m))
            T_m = exc.limit * eta / omega
            E = float(pt.pack_emf(state.soc, m.battery))
            R = float(pt.pack_resistance(state.soc, m.battery))
            soc_next = min(max(state.soc - E / (2.0 * R) * dt / m.battery.capacity, 0.0), 1.0)

        mdot = float(pt.fuel_rate(omega, T_e, m.engine))
        half = 0.5 * self.p_max
        br = RewardBreakdown(
            r_f=-mdot,
            p_omega=half if bool(s.omega_violation) else 0.0,
            p_Tm=half if motor_bad else 0.0,
            p_soc=soc_penalty(soc_next, m.battery, self.p_max),
        )
        reward = br.r_f - br.p_omega - br.p_Tm - br.p_soc
        t1 = state.t + 1
        return StepOutcome(
            next_state=self._state(t1, soc_next),
            reward=reward,
            fuel=mdot * dt,
            done=t1 == self.n_steps,
            breakdown=br,
            realized=Realized(T_e, T_m, T_b, omega),
            violations=Violations(bool(s.omega_violation), motor_bad, br.p_soc > 0.0),
        )

    @staticmethod
    def observe(state: EnvState) -> np.ndarray:
        return np.array([state.v / 30.0, state.accel / 3.0, state.T_w / 3000.0,
                         2.0 * (state.soc - 0.6) / 0.4])


# ---------------------------------------------------------------------------
# episode traces

@dataclass(frozen=True)
class TraceRow:
    t: int
    v: float
    accel: float
    T_w: float
    gear: int
    T_e: float
    T_m: float
    T_b: float
    omega: float
    soc: float
    soc_next: float
    fuel: float
    reward: float
    p_omega: float
    p_Tm: float
    p_soc: float
    omega_violation: int
    motor_violation: int
    soc_violation: int

    @classmethod
    def from_step(cls, state: EnvState, gear: int, out: StepOutcome):
        r, b, vi = out.realized, out.breakdown, out.violations
        return cls(state.t, state.v, state.accel, state.T_w, gear, r.T_e, r.T_m, r.T_b,
                   r.omega, state.soc, out.next_state.soc, out.fuel, out.reward,
                   b.p_omega, b.p_Tm, b.p_soc, int(vi.omega), int(vi.motor), int(vi.soc))


TRACE_COLUMNS = [f.name for f in fields(TraceRow)]
_INT_COLUMNS = {"t", "gear", "omega_violation", "motor_violation", "soc_violation"}


def write_trace(path, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in rows:
            d = asdict(row)
            w.writerow([d[c] if c in _INT_COLUMNS else repr(float(d[c])) for c in TRACE_COLUMNS])


def read_trace(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [TraceRow(**{c: int(r[c]) if c in _INT_COLUMNS else float(r[c]) for c in TRACE_COLUMNS})
                for r in reader]
