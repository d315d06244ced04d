"""Command-line entry point: ``miocrl {train,dp,eval,compare,correct}``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import dp_solver as dps
from .config import RunConfig, load_config
from .errors import (ConfigError, FormatError, InfeasibleRollout, NoFeasiblePath, ParseError,
                     ShapeMismatch, ValidationError)
from .evaluation import (compare, convert_cost, fit_soc_correction, read_correction, read_reports,
                         run_episode, write_correction, write_reports)
from .hev_env import HevEnv, read_trace, write_trace
from .neural import load_checkpoint, save_checkpoint
from .td3aq import GreedyPolicy, TD3AQAgent, train

log = logging.getLogger("miocrl")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INFEASIBLE, EXIT_FORMAT = 0, 2, 3, 4, 5

METRIC_COLUMNS = ["step", "episode", "return", "fuel", "terminal_soc", "epsilon",
                  "critic1_loss", "critic2_loss", "actor_objective"]
EVAL_COLUMNS = ["step", "return", "fuel", "terminal_soc"]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def _write_rows(path, columns, rows, header_lines=()):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_metrics(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    run = cfg.run
    if getattr(args, "seed", None) is not None:
        run = replace(run, seed=args.seed)
    if getattr(args, "steps", None) is not None:
        if args.steps < 0:
            raise ConfigError("--steps must be non-negative")
        run = replace(run, steps=args.steps)
    if getattr(args, "out", None) is not None:
        run = replace(run, out=args.out)
    cfg = replace(cfg, run=run)
    if getattr(args, "cycle", None):
        cfg = replace(cfg, cycle=replace(cfg.cycle, path=args.cycle))
    return cfg


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed_header(cfg: RunConfig):
    return [f"seed={cfg.run.seed} streams=env,agent,noise derivation=SeedSequence.spawn(3)"]


# ---------------------------------------------------------------------------
# verbs

def cmd_train(args):
    cfg = _load(args)
    cycle = cfg.build_cycle()
    model = cfg.build_model()
    out = _outdir(cfg)
    streams = cfg.seed_streams()
    agent = TD3AQAgent(cfg.agent, rng=streams["agent"])
    result = train(agent, HevEnv(model), cycle, cfg.run.steps, soc0=cfg.run.soc0,
                   eval_interval=cfg.run.eval_interval, explore_rng=streams["noise"],
                   learn_rng=streams["env"],
                   on_eval=lambda r: log.info("step %d return %.4f fuel %.4f", r["step"], r["return"], r["fuel"]))
    header = _seed_header(cfg)
    _write_rows(out / "metrics.csv", METRIC_COLUMNS, result.episodes, header)
    _write_rows(out / "evals.csv", EVAL_COLUMNS, result.evaluations, header)
    extra = {"agent": cfg.agent.to_dict(), "seed": cfg.run.seed, "steps": cfg.run.steps,
             "cycle": cycle.name}
    save_checkpoint(out / "final.ckpt.json", {"actor": agent.actor, "critic1": agent.critic1}, extra)
    best = result.best or agent.snapshot()
    save_checkpoint(out / "best.ckpt.json", best, {**extra, "best_return": _fmt(result.best_return)
                                                   if result.best else None})
    print(f"trained {cfg.run.steps} steps, {len(result.episodes)} episodes -> {out}")
    return EXIT_OK


def cmd_dp(args):
    cfg = _load(args)
    cycle = cfg.build_cycle()
    model = cfg.build_model()
    out = _outdir(cfg)
    sol = dps.dp_solve(cycle, model, cfg.dp, soc0=cfg.run.soc0, rollout=False)
    report, rows = dps.dp_rollout(sol, cycle, model, cfg.run.soc0)
    dps.write_value_table(out / "dp_value.csv", sol)
    dps.write_policy_table(out / "dp_policy.csv", sol)
    write_trace(out / "dp_trace.csv", rows)
    report = replace(report, trace="dp_trace.csv")
    write_reports(out / "dp_report.csv", [report])
    print(f"DP fuel {report.total_fuel:.6f} kg (V0 {sol.total_fuel:.6f}), "
          f"terminal SOC {report.terminal_soc:.4f} -> {out}")
    return EXIT_OK


def _policy_from_checkpoint(path, cfg: RunConfig):
    nets, _ = load_checkpoint(path)
    if "actor" not in nets or "critic1" not in nets:
        raise FormatError(f"{path}: checkpoint lacks actor/critic1 networks")
    actor, critic = nets["actor"], nets["critic1"]
    h, k = cfg.agent.hidden, cfg.agent.n_actions
    if actor.sizes != (4, h, h, 1) or critic.sizes != (5, h, h, k):
        raise ShapeMismatch(f"{path}: network sizes {actor.sizes}/{critic.sizes} do not match "
                            f"agent.hidden={h}, agent.n_actions={k}")
    return GreedyPolicy(actor, critic)


def _reference_soc(path):
    reps = read_reports(path)
    if not reps:
        raise FormatError(f"{path}: empty report")
    return reps[0]


def cmd_eval(args):
    if not args.checkpoint:
        raise ConfigError("eval needs --checkpoint")
    cfg = _load(args)
    cycle = cfg.build_cycle()
    model = cfg.build_model()
    policy = _policy_from_checkpoint(args.checkpoint, cfg)
    out = _outdir(cfg)
    report, rows = run_episode(policy, cycle, model, cfg.run.soc0, name="TD3AQ")
    write_trace(out / "eval_trace.csv", rows)
    report = replace(report, trace="eval_trace.csv")
    if args.fit_correction:
        corr = fit_soc_correction(policy, cycle, model)
        write_correction(out / "correction.csv", corr)
        print(f"SOC correction slope {corr.slope:.6g} kg/SOC, intercept {corr.intercept:.6g} kg")
        if args.reference:
            ref = _reference_soc(args.reference)
            report = replace(report, converted_fuel=convert_cost(report, corr, ref.terminal_soc))
            report = compare([report], ref)[0]
    write_reports(out / "eval_report.csv", [report])
    print(f"fuel {report.total_fuel:.6f} kg, terminal SOC {report.terminal_soc:.4f}, "
          f"nu_Tm {report.nu_Tm:.4f}, nu_omega {report.nu_omega:.4f}, nu_soc {report.nu_soc:.4f}")
    return EXIT_OK


def cmd_correct(args):
    """Refer report fuel to the reference terminal SOC."""
    if not args.reference:
        raise ConfigError("correct needs --reference")
    if not args.correction and not args.checkpoint:
        raise ConfigError("correct needs --correction or --checkpoint")
    cfg = _load(args)
    ref = _reference_soc(args.reference)
    if args.correction:
        corr = read_correction(args.correction)
    else:
        policy = _policy_from_checkpoint(args.checkpoint, cfg)
        corr = fit_soc_correction(policy, cfg.build_cycle(), cfg.build_model())
    out = _outdir(cfg)
    write_correction(out / "correction.csv", corr)
    reports = [r for p in args.reports for r in read_reports(p)]
    converted = [replace(r, converted_fuel=convert_cost(r, corr, ref.terminal_soc)) for r in reports]
    write_reports(out / "converted.csv", compare(converted, ref))
    for r in converted:
        print(f"{r.name}: {r.total_fuel:.6f} kg at SOC {r.terminal_soc:.4f} -> {r.converted_fuel:.6f} kg")
    return EXIT_OK


def _trace_path(report_path, trace):
    p = Path(trace)
    return p if p.is_absolute() else Path(report_path).parent / p


def cmd_compare(args):
    if not args.reference:
        raise ConfigError("compare needs --reference")
    ref_path = Path(args.reference)
    ref = _reference_soc(ref_path)
    sources = [(ref_path, ref)]
    for p in args.reports:
        for r in read_reports(p):
            sources.append((Path(p), r))
    cycles = {r.cycle for _, r in sources}
    if len(cycles) > 1:
        raise ConfigError(f"reports come from different cycles: {sorted(cycles)}")
    # the reference may also be listed among the reports; keep one copy
    seen, unique = set(), []
    for p, r in sources:
        key = (p.resolve(), r.name)
        if key not in seen:
            seen.add(key)
            unique.append((p, r))
    rows = compare([r for _, r in unique], ref)
    order = sorted(range(len(rows)), key=lambda i: rows[i].gap)
    rows = [rows[i] for i in order]
    unique = [unique[i] for i in order]
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    blank = (ref.name,) if len(rows) > 1 else ()
    write_reports(out / "comparison.csv", rows, blank_gap_for=blank)
    for r in rows:
        gap = "" if r.name in blank else f"{100.0 * r.gap:+.2f}%"
        print(f"{r.name:>12s}  fuel {r.total_fuel:.4f}  soc {r.terminal_soc:.4f}  "
              f"converted {r.converted_fuel:.4f}  {gap}")
    traces = {}
    for p, r in unique:
        if r.trace:
            traces[r.name] = read_trace(_trace_path(p, r.trace))
    if traces:
        _write_overlay(out / "soc_overlay.csv", traces)
        if args.svg:
            render_svg(out / "soc_overlay.csv", out / "soc_overlay.svg")
    return EXIT_OK


def _write_overlay(path, traces):
    names = list(traces)
    n = max(len(rows) for rows in traces.values())
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + names)
        # row t holds the SOC at the start of step t; the last row is terminal
        for t in range(n + 1):
            line = [t]
            for name in names:
                rows = traces[name]
                if t < len(rows):
                    line.append(repr(rows[t].soc))
                elif t == len(rows):
                    line.append(repr(rows[-1].soc_next))
                else:
                    line.append("")
            w.writerow(line)


def render_svg(csv_path, svg_path):
    """Line chart of every column against the first; needs matplotlib."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not installed; skipping %s", svg_path)
        return False
    with Path(csv_path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for j, name in enumerate(head[1:], start=1):
        pts = [(float(r[0]), float(r[j])) for r in body if r[j] != ""]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=name, linewidth=1.0)
    ax.set_xlabel(head[0])
    ax.set_ylabel("SOC")
    ax.legend()
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    plt.close(fig)
    return True


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="miocrl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--cycle", help="drive cycle CSV (overrides the config)")

    sp = sub.add_parser("train", help="train a TD3AQ agent")
    common(sp)
    sp.add_argument("--steps", type=int)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("dp", help="solve the cycle by dynamic programming")
    common(sp)
    sp.set_defaults(func=cmd_dp)

    sp = sub.add_parser("eval", help="greedy episode from a checkpoint")
    common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--reference", help="reference report CSV (usually the DP report)")
    sp.add_argument("--fit-correction", action="store_true",
                    help="fit the six-start SOC correction line")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("correct", help="convert report fuel to the reference terminal SOC")
    common(sp)
    sp.add_argument("reports", nargs="+")
    sp.add_argument("--reference")
    sp.add_argument("--correction", help="correction CSV written by eval --fit-correction")
    sp.add_argument("--checkpoint", help="fit the correction from this policy instead")
    sp.set_defaults(func=cmd_correct)

    sp = sub.add_parser("compare", help="gap table and SOC overlay")
    sp.add_argument("reports", nargs="*")
    sp.add_argument("--reference")
    sp.add_argument("--out")
    sp.add_argument("--svg", action="store_true", help="also render SVG charts")
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoFeasiblePath, InfeasibleRollout) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FormatError, ShapeMismatch) as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (OSError, ParseError, ValidationError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
