"""Episode metrics, violation rates and the SOC-corrected fuel comparison."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateFit, FormatError
from .hev_env import HevEnv, TraceRow

log = logging.getLogger(__name__)

# three starting points above the nominal 0.6 and three below it
CORRECTION_SOCS = (0.65, 0.70, 0.75, 0.45, 0.50, 0.55)


@dataclass
class EvalReport:
    name: str
    cycle: str
    total_fuel: float
    terminal_soc: float
    converted_fuel: float
    nu_Tm: float
    nu_omega: float
    nu_soc: float
    total_return: float = 0.0
    n_steps: int = 0
    gap: float | None = None
    trace: str = ""


@dataclass
class SocCorrection:
    """Least-squares line fuel = intercept + slope * (terminal_soc - soc0).

    ``slope`` is the equivalent factor in kg per unit of SOC stored.
    """
    slope: float
    intercept: float
    samples: list = field(default_factory=list)


def violation_rates(rows):
    n = len(rows)
    if n == 0:
        return 0.0, 0.0, 0.0
    return (sum(r.motor_violation for r in rows) / n,
            sum(r.omega_violation for r in rows) / n,
            sum(r.soc_violation for r in rows) / n)


def report_from_trace(rows, name, cycle_name):
    nu_tm, nu_w, nu_soc = violation_rates(rows)
    fuel = 0.0
    ret = 0.0
    for r in rows:
        fuel += r.fuel
        ret += r.reward
    terminal = rows[-1].soc_next if rows else float("nan")
    return EvalReport(name, cycle_name, fuel, terminal, fuel, nu_tm, nu_w, nu_soc,
                      total_return=ret, n_steps=len(rows))


def run_episode(policy, cycle, model, soc0=0.6, env=None, name="policy"):
    """Roll a deterministic policy through one cycle.

    ``policy`` is any callable mapping an :class:`EnvState` to a
    :class:`HybridAction`. Returns ``(report, trace_rows)``.
    """
    env = env or HevEnv(model)
    state = env.reset(cycle, soc0)
    rows = []
    while True:
        action = policy(state)
        out = env.step(state, action)
        rows.append(TraceRow.from_step(state, int(action.a_d), out))
        if out.done:
            break
        state = out.next_state
    return report_from_trace(rows, name, cycle.name), rows


def fit_line(samples):
    """Ordinary least squares through ``(x, y)`` pairs; returns (slope, intercept)."""
    x = np.array([s[0] for s in samples], dtype=float)
    y = np.array([s[1] for s in samples], dtype=float)
    if len(x) < 2 or np.ptp(x) == 0.0:
        raise DegenerateFit("need at least two distinct SOC deltas")
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    slope = float(np.dot(dx, y - ym) / np.dot(dx, dx))
    return slope, float(ym - slope * xm)


def fit_soc_correction(policy, cycle, model, socs=CORRECTION_SOCS, runner=None):
    """Run the policy from several initial SOCs and fit fuel against stored charge."""
    runner = runner or run_episode
    samples = []
    for soc0 in socs:
        report, _ = runner(policy, cycle, model, soc0)
        samples.append((report.terminal_soc - soc0, report.total_fuel))
    slope, intercept = fit_line(samples)
    if slope <= 0:
        log.warning("SOC correction slope %.4g is not positive; the policy may not trade fuel for charge", slope)
    return SocCorrection(slope, intercept, samples)


def convert_cost(report: EvalReport, corr: SocCorrection | float, reference_terminal_soc):
    """Fuel referred to the reference terminal SOC.

    Charge left in the battery beyond the reference is credited at the
    equivalent factor; a deficit is charged at the same rate.
    """
    slope = corr.slope if isinstance(corr, SocCorrection) else float(corr)
    return report.total_fuel - slope * (report.terminal_soc - reference_terminal_soc)


def compare(reports, reference: EvalReport):
    """Attach relative gaps to converted fuel; positive means worse than the reference."""
    base = reference.converted_fuel
    out = []
    for r in reports:
        out.append(replace(r, gap=(r.converted_fuel - base) / base))
    return out


# ---------------------------------------------------------------------------
# report CSV

REPORT_COLUMNS = ["name", "cycle", "fuel", "terminal_soc", "converted", "gap",
                  "nu_Tm", "nu_omega", "nu_soc", "return", "n_steps", "trace"]


def _fmt(x):
    return "" if x is None else repr(float(x))


def write_reports(path, reports, blank_gap_for=()):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            gap = "" if r.name in blank_gap_for else _fmt(r.gap)
            w.writerow([r.name, r.cycle, _fmt(r.total_fuel), _fmt(r.terminal_soc),
                        _fmt(r.converted_fuel), gap, _fmt(r.nu_Tm), _fmt(r.nu_omega),
                        _fmt(r.nu_soc), _fmt(r.total_return), r.n_steps, r.trace])


def read_reports(path):
    try:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != REPORT_COLUMNS:
                raise FormatError(f"{path}: unexpected report columns {reader.fieldnames}")
            out = []
            for row in reader:
                out.append(EvalReport(
                    name=row["name"], cycle=row["cycle"], total_fuel=float(row["fuel"]),
                    terminal_soc=float(row["terminal_soc"]), converted_fuel=float(row["converted"]),
                    nu_Tm=float(row["nu_Tm"]), nu_omega=float(row["nu_omega"]),
                    nu_soc=float(row["nu_soc"]), total_return=float(row["return"]),
                    n_steps=int(row["n_steps"]),
                    gap=float(row["gap"]) if row["gap"] else None, trace=row["trace"]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed report row") from exc
    return out


def write_correction(path, corr: SocCorrection, socs=CORRECTION_SOCS):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# slope={corr.slope!r} intercept={corr.intercept!r}\n")
        w = csv.writer(fh)
        w.writerow(["soc0", "delta_soc", "fuel"])
        for soc0, (d, f) in zip(socs, corr.samples):
            w.writerow([repr(float(soc0)), repr(float(d)), repr(float(f))])


def read_correction(path):
    with Path(path).open(encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# slope="):
            raise FormatError(f"{path}: missing slope header")
        parts = dict(kv.split("=") for kv in first[2:].split())
        rows = list(csv.DictReader(fh))
    samples = [(float(r["delta_soc"]), float(r["fuel"])) for r in rows]
    return SocCorrection(float(parts["slope"]), float(parts["intercept"]), samples)
