"""Drive cycles: CSV I/O, validation, synthesis and per-step kinematics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

KMH_PER_MPS = 3.6


@dataclass(frozen=True)
class DriveCycle:
    name: str
    dt: float
    speeds: tuple

    def __post_init__(self):
        object.__setattr__(self, "speeds", tuple(float(v) for v in self.speeds))
        if self.dt <= 0:
            raise ValidationError("dt must be positive")
        if len(self.speeds) < 2:
            raise ValidationError("a cycle needs at least 2 samples")
        for i, v in enumerate(self.speeds):
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"speed at sample {i} is {v!r}; speeds must be finite and >= 0")

    def __len__(self):
        return len(self.speeds)

    @property
    def duration(self):
        return (len(self.speeds) - 1) * self.dt


@dataclass(frozen=True)
class KinematicTrace:
    speeds: np.ndarray
    accels: np.ndarray


def kinematics(c: DriveCycle) -> KinematicTrace:
    """Forward-difference accelerations; the final sample gets zero."""
    v = np.asarray(c.speeds, dtype=float)
    a = np.zeros_like(v)
    a[:-1] = (v[1:] - v[:-1]) / c.dt
    return KinematicTrace(v, a)


def load_cycle(path) -> DriveCycle:
    """Read a ``t,v_mps`` or ``t,v_kmh`` CSV with one row per second."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header == ["t", "v_mps"]:
        scale = 1.0
    elif header == ["t", "v_kmh"]:
        scale = KMH_PER_MPS
    else:
        raise ParseError(f"{path}: header must be 't,v_mps' or 't,v_kmh', got {','.join(header)!r}")
    times, speeds = [], []
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ParseError(f"{path}:{k}: expected 2 columns")
        try:
            t, v = float(row[0]), float(row[1])
        except ValueError as exc:
            raise ParseError(f"{path}:{k}: non-numeric cell") from exc
        times.append(t)
        speeds.append(v / scale)
    if len(times) < 2:
        raise ValidationError(f"{path}: need at least 2 rows")
    steps = np.diff(times)
    if np.any(steps != 1.0) or times[0] != int(times[0]):
        raise ValidationError(f"{path}: time column must be ascending integers with 1 s spacing")
    return DriveCycle(path.stem, 1.0, speeds)


def save_cycle(c: DriveCycle, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "v_mps"])
        for i, v in enumerate(c.speeds):
            w.writerow([i, repr(v)])


def synth_cycle(seed: int, duration: int, v_max: float, a_max: float, name=None) -> DriveCycle:
    """Stop-and-go cycle of idle, accelerate, cruise and brake phases.

    The result has ``duration + 1`` one-second samples, starts and ends at
    standstill, and never changes speed by more than ``a_max`` per second.
    """
    if duration < 10 or v_max <= 0 or a_max <= 0:
        raise ValidationError("need duration >= 10, v_max > 0, a_max > 0")
    rng = np.random.default_rng(seed)
    n = int(duration) + 1
    v = [0.0]
    while len(v) < n:
        remaining = n - len(v)
        idle = min(int(rng.integers(2, 9)), remaining)
        v.extend([0.0] * idle)
        remaining -= idle
        if remaining < 4:
            v.extend([0.0] * remaining)
            break
        target = float(rng.uniform(0.35, 1.0)) * v_max
        up = math.ceil(target / (float(rng.uniform(0.5, 1.0)) * a_max))
        # braking rate capped at 0.9 a_max leaves room for the cruise ripple
        down = math.ceil(target / (float(rng.uniform(0.5, 0.9)) * a_max))
        cruise = int(rng.integers(5, 60))
        if up + down > remaining:
            up = remaining // 2
            down = remaining - up
            target = min(target, a_max * up, a_max * down)
            cruise = 0
        cruise = min(cruise, remaining - up - down)
        v.extend(target * k / up for k in range(1, up + 1))
        # gentle speed ripple while cruising, bounded well inside a_max
        amp = min(0.04 * target, 0.25 * a_max)
        phase = float(rng.uniform(0, 2 * math.pi))
        cruise_v = [target + amp * (math.sin(phase + 0.2 * k) - math.sin(phase)) for k in range(1, cruise + 1)]
        v.extend(cruise_v)
        top = v[-1]
        v.extend(top * (1.0 - k / down) for k in range(1, down + 1))
    v = v[:n]
    v[-1] = 0.0
    return DriveCycle(name or f"synth-{seed}", 1.0, [max(0.0, x) for x in v])
