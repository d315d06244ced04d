"""Flat ``section.key = value`` run configuration."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .dp_solver import DpConfig
from .drive_cycle import load_cycle, synth_cycle
from .errors import ConfigError
from .powertrain import VehicleModel, VehicleParams
from .td3aq import AgentConfig


@dataclass
class CycleSection:
    path: str = ""
    synth_seed: int = 7
    synth_duration: int = 300
    synth_v_max: float = 20.0
    synth_a_max: float = 1.2


@dataclass
class MapsSection:
    engine_limit: str = ""
    engine_fuel: str = ""
    motor_limit: str = ""
    motor_efficiency: str = ""
    battery_ocv: str = ""
    battery_resistance: str = ""


@dataclass
class RunSection:
    seed: int = 0
    steps: int = 400_000
    eval_interval: int = 10_000
    out: str = "runs"
    soc0: float = 0.6


@dataclass
class RunConfig:
    cycle: CycleSection = field(default_factory=CycleSection)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    maps: MapsSection = field(default_factory=MapsSection)
    agent: AgentConfig = field(default_factory=AgentConfig)
    dp: DpConfig = field(default_factory=DpConfig)
    run: RunSection = field(default_factory=RunSection)

    def build_model(self) -> VehicleModel:
        m = self.maps
        return VehicleModel(params=self.vehicle).with_maps(
            m.engine_limit or None, m.engine_fuel or None, m.motor_limit or None,
            m.motor_efficiency or None, m.battery_ocv or None, m.battery_resistance or None)

    def build_cycle(self):
        c = self.cycle
        if c.path:
            return load_cycle(c.path)
        return synth_cycle(c.synth_seed, c.synth_duration, c.synth_v_max, c.synth_a_max)

    def seed_streams(self):
        """Independent generators for the env, agent and noise streams."""
        env, agent, noise = np.random.SeedSequence(self.run.seed).spawn(3)
        return {"env": np.random.default_rng(env), "agent": np.random.default_rng(agent),
                "noise": np.random.default_rng(noise)}

    def to_lines(self):
        lines = []
        for sec in fields(self):
            obj = getattr(self, sec.name)
            for f in fields(obj):
                val = getattr(obj, f.name)
                if isinstance(val, tuple):
                    val = ",".join(str(v) for v in val)
                elif val is None:
                    val = ""
                lines.append(f"{sec.name}.{f.name}={val}")
        return lines


# keys whose default is None need an explicit element type
_TUPLE_INT = {("dp", "gears")}
_TUPLE_FLOAT = {("dp", "window"), ("vehicle", "gear_ratios")}


def _convert(section, key, default, text):
    text = text.strip()
    try:
        if (section, key) in _TUPLE_INT:
            return tuple(int(x) for x in text.split(",")) if text else None
        if (section, key) in _TUPLE_FLOAT:
            return tuple(float(x) for x in text.split(",")) if text else None
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0"):
                raise ValueError(text)
            return text.lower() in ("true", "1")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {text!r}") from None


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    updates: dict[str, dict] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key {key!r} has no section")
        section, name = key.split(".", 1)
        if section not in {f.name for f in fields(cfg)}:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        obj = getattr(cfg, section)
        known = {f.name: getattr(obj, f.name) for f in fields(obj)}
        if name not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        updates.setdefault(section, {})[name] = _convert(section, name, known[name], value)
    try:
        for section, vals in updates.items():
            cfg = replace(cfg, **{section: replace(getattr(cfg, section), **vals)})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError:
        raise
    return parse_config(text)
