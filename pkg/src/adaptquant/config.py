"""TOML experiment configuration with strict key checking.

Every section maps to a frozen dataclass; unknown keys, wrong types and
out-of-range values raise :class:`ConfigError` before anything runs.
"""
from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError


@dataclass(frozen=True)
class ProblemConfig:
    kind: str = "quadratic"  # quadratic | synthetic | csv
    n_nodes: int = 10
    dim: int = 5
    mu: float = 1.0
    L: float = 10.0
    m: int = 2000
    rho: float = 1.0
    path: Optional[str] = None
    seed: Optional[int] = None


@dataclass(frozen=True)
class TopologyConfig:
    kind: str = "master"  # master | edgelist | geometric
    path: Optional[str] = None
    radius: float = 0.3
    seed: Optional[int] = None


@dataclass(frozen=True)
class AlgorithmConfig:
    name: str = "gd"  # gd | pgd | dual
    bits: object = 16  # int, "auto" or "sweep LO..HI"
    horizon: int = 200
    eps: float = 1e-3
    D: Optional[float] = None
    alpha: Optional[float] = None


@dataclass(frozen=True)
class ChannelConfig:
    rate: str = "constant"  # constant | finite_blocklength | bell
    C: float = 0.6931471805599453
    V: float = 1.5
    max_rate: float = 0.36787944117144233
    A: float = 5.0
    theta: float = 0.0
    p: float = 0.0
    p_grid: tuple = (0.01, 0.05, 0.1, 0.2, 0.3)
    link_count: Optional[int] = None
    policy: str = "until_success"  # until_success | fixed_rounds
    delta: float = 0.9
    replicas: int = 1000


@dataclass(frozen=True)
class SweepConfig:
    b_min: Optional[int] = None
    b_max: int = 24
    empirical: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out: str = "results"
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def bit_range(self):
        """``(lo, hi)`` when ``bits`` is a sweep spec, else ``None``."""
        return _parse_sweep(self.algorithm.bits)


_SWEEP_RE = re.compile(r"^sweep\s+(\d+)\s*\.\.\s*(\d+)$")
_CHOICES = {
    ("problem", "kind"): ("quadratic", "synthetic", "csv"),
    ("topology", "kind"): ("master", "edgelist", "geometric"),
    ("algorithm", "name"): ("gd", "pgd", "dual"),
    ("channel", "rate"): ("constant", "finite_blocklength", "bell"),
    ("channel", "policy"): ("until_success", "fixed_rounds"),
}


def _parse_sweep(bits):
    if isinstance(bits, str):
        m = _SWEEP_RE.match(bits.strip())
        if m:
            return int(m.group(1)), int(m.group(2))
    return None


def _coerce(section, name, value, default):
    where = f"{section}.{name}" if section else name
    kind = type(default)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if isinstance(default, int) and not isinstance(default, bool) and name != "bits":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float) or name in ("D", "alpha"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{where} must be a list of numbers")
        return tuple(float(v) for v in value)
    if isinstance(default, str) or name == "path":
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if name in ("seed", "link_count", "b_min"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if name == "bits":
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if value == "auto" or _parse_sweep(value):
            return value
        raise ConfigError(f"{where} must be an integer, \"auto\" or \"sweep LO..HI\"")
    return value


def _build(cls, raw, section):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{section}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    defaults = cls()
    values = {}
    for name, value in raw.items():
        values[name] = _coerce(section, name, value, getattr(defaults, name))
        choices = _CHOICES.get((section, name))
        if choices and values[name] not in choices:
            raise ConfigError(f"{section}.{name} must be one of {', '.join(choices)}, got {value!r}")
    return cls(**values)


def _validate(cfg: ExperimentConfig) -> None:
    pr, al, ch, sw = cfg.problem, cfg.algorithm, cfg.channel, cfg.sweep
    checks = [
        (pr.n_nodes >= 1, "problem.n_nodes must be positive"),
        (pr.dim >= 1, "problem.dim must be positive"),
        (0 < pr.mu <= pr.L, "problem needs 0 < mu <= L"),
        (pr.rho > 0, "problem.rho must be positive"),
        (pr.m >= pr.n_nodes, "problem.m must be at least n_nodes"),
        (pr.kind != "csv" or pr.path, "problem.path is required for kind = \"csv\""),
        (cfg.topology.kind != "edgelist" or cfg.topology.path, "topology.path is required for kind = \"edgelist\""),
        (cfg.topology.radius > 0, "topology.radius must be positive"),
        ((al.name == "dual") == (cfg.topology.kind != "master"),
         "algorithm \"dual\" needs a graph topology; gd and pgd need topology.kind = \"master\""),
        (al.horizon >= 1, "algorithm.horizon must be positive"),
        (al.eps > 0, "algorithm.eps must be positive"),
        (al.D is None or al.D > 0, "algorithm.D must be positive"),
        (al.alpha is None or 0 < al.alpha < 1, "algorithm.alpha must lie in (0, 1)"),
        (not isinstance(al.bits, int) or 1 <= al.bits <= 64, "algorithm.bits must lie in 1..64"),
        (0 <= ch.p < 1, "channel.p must lie in [0, 1)"),
        (all(0 < p < 1 for p in ch.p_grid), "channel.p_grid entries must lie in (0, 1)"),
        (ch.theta >= 0, "channel.theta must be non-negative"),
        (0 <= ch.delta < 1, "channel.delta must lie in [0, 1)"),
        (ch.replicas >= 0, "channel.replicas must be non-negative"),
        (ch.link_count is None or ch.link_count >= 1, "channel.link_count must be positive"),
        (cfg.seed >= 0, "seed must be non-negative"),
        (sw.b_min is None or 1 <= sw.b_min <= sw.b_max <= 64, "sweep needs 1 <= b_min <= b_max <= 64"),
    ]
    rng = cfg.bit_range()
    if rng:
        checks.append((1 <= rng[0] <= rng[1] <= 64, "bit sweep range must satisfy 1 <= LO <= HI <= 64"))
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)


def parse_config(raw: dict) -> ExperimentConfig:
    sections = {"problem": ProblemConfig, "topology": TopologyConfig, "algorithm": AlgorithmConfig,
                "channel": ChannelConfig, "sweep": SweepConfig}
    unknown = sorted(set(raw) - set(sections) - {"seed", "out"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    top = {}
    for name in ("seed", "out"):
        if name in raw:
            top[name] = _coerce("", name, raw[name], getattr(ExperimentConfig, name))
    for name, cls in sections.items():
        top[name] = _build(cls, raw.get(name, {}), name)
    cfg = ExperimentConfig(**top)
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw)
