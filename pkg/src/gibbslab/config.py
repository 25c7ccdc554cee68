"""Run configuration: INI-style sectioned key-value files plus validation."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

MAX_QUANTUM_MODES = 12
MAX_SECTOR_STATES = 20_000


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class ModelConfig:
    dimension: int = 1
    potential: str = "power"  # power | box
    s: float = 4.0
    half_width: float = 6.0
    points: int = 512
    modes: int = 4
    nu: float = 0.0
    num_eigs: int = 0  # 0 means max(modes, 32)


@dataclass
class InteractionConfig:
    kind: str = "gaussian-bump"  # gaussian-bump | grid-delta | tabulated
    amplitude: float = 0.2
    sigma: float = 0.5
    table_path: str = ""
    renormalized: bool = False


@dataclass
class ClassicalConfig:
    samples: int = 200_000
    seed: int = 7


@dataclass
class QuantumConfig:
    n_max: int = 14
    t_schedule: tuple = (2.0, 4.0, 8.0, 16.0)
    coupling_c: float = 1.0


@dataclass
class HartreeConfig:
    kappa: float = 4.0
    damping: float = 0.3
    tol: float = 1e-8
    max_iter: int = 200
    t_schedule: tuple = (4.0, 8.0, 16.0, 32.0)
    coupling_c: float = 1.0
    shared_modes: int = 32
    points: int = 40  # grid resolution for the self-consistent solves
    momentum_measure: str = "unit"  # unit | 2pi


@dataclass
class OutputConfig:
    directory: str = "out"
    format: str = "json"  # json | csv


@dataclass
class StudyConfig:
    k_schedule: tuple = (8, 16, 32, 64)
    cauchy_samples: int = 20_000


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    interaction: InteractionConfig = field(default_factory=InteractionConfig)
    classical: ClassicalConfig = field(default_factory=ClassicalConfig)
    quantum: QuantumConfig = field(default_factory=QuantumConfig)
    hartree: HartreeConfig = field(default_factory=HartreeConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    study: StudyConfig = field(default_factory=StudyConfig)

    def echo(self) -> dict:
        return asdict(self)


_SECTION_TYPES = {
    "model": ModelConfig,
    "interaction": InteractionConfig,
    "classical": ClassicalConfig,
    "quantum": QuantumConfig,
    "hartree": HartreeConfig,
    "output": OutputConfig,
    "study": StudyConfig,
}


def _coerce(name: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "yes", "1", "on"):
                return True
            if raw.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p for p in raw.replace(",", " ").split() if p]
            elem = float if (default and isinstance(default[0], float)) else float
            if default and isinstance(default[0], int):
                elem = int
            return tuple(elem(p) for p in parts)
        return raw
    except ValueError as exc:
        raise ConfigError(f"field {name}: cannot parse {raw!r}") from exc


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser()
    text = Path(path).read_text(encoding="utf-8")
    parser.read_string(text)
    cfg = RunConfig()
    for section in parser.sections():
        if section not in _SECTION_TYPES:
            raise ConfigError(f"unknown section [{section}]")
        target = getattr(cfg, section)
        for key, raw in parser.items(section):
            if not hasattr(target, key):
                raise ConfigError(f"unknown field {section}.{key}")
            default = getattr(target, key)
            setattr(target, key, _coerce(f"{section}.{key}", raw, default))
    validate(cfg)
    return cfg


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def validate(cfg: RunConfig) -> None:
    m, i, q, h = cfg.model, cfg.interaction, cfg.quantum, cfg.hartree
    _require(m.dimension in (1, 2), "model.dimension must be 1 or 2")
    _require(m.potential in ("power", "box"),
             "model.potential must be power or box")
    if m.potential == "power":
        _require(m.s > 1, "model.s must exceed 1 for a power trap")
    _require(m.half_width > 0, "model.half_width must be positive")
    _require(m.points >= 8, "model.points must be at least 8")
    _require(m.modes >= 1, "model.modes must be at least 1")
    _require(i.kind in ("gaussian-bump", "grid-delta", "tabulated"),
             "interaction.kind unknown")
    if i.kind == "grid-delta":
        _require(m.dimension == 1,
                 "interaction.kind=grid-delta requires model.dimension=1")
        _require(not i.renormalized or m.dimension == 1,
                 "interaction.renormalized with grid-delta needs model.dimension=1")
    if i.renormalized and m.dimension == 2:
        _require(i.kind != "grid-delta",
                 "interaction.renormalized forbids grid-delta in model.dimension=2")
    if i.kind == "tabulated":
        _require(bool(i.table_path), "interaction.table_path required for tabulated kind")
    _require(cfg.classical.samples > 0, "classical.samples must be positive")
    _require(q.n_max >= 0, "quantum.n_max must be nonnegative")
    _require(m.modes <= MAX_QUANTUM_MODES or q.n_max == 0,
             f"quantum runs require model.modes <= {MAX_QUANTUM_MODES}")
    top_sector = math.comb(q.n_max + m.modes - 1, m.modes - 1)
    _require(top_sector <= MAX_SECTOR_STATES,
             f"quantum.n_max with model.modes gives a {top_sector}-state "
             f"sector, over the {MAX_SECTOR_STATES} cap")
    for name, sched in (("quantum.t_schedule", q.t_schedule),
                        ("hartree.t_schedule", h.t_schedule),
                        ("study.k_schedule", cfg.study.k_schedule)):
        _require(len(sched) > 0, f"{name} must not be empty")
        _require(all(b > a for a, b in zip(sched[:-1], sched[1:])),
                 f"{name} must be strictly increasing")
    _require(all(t > 0 for t in q.t_schedule), "quantum.t_schedule must be positive")
    _require(h.kappa > 0, "hartree.kappa must be positive")
    _require(0 < h.damping <= 1, "hartree.damping must be in (0, 1]")
    _require(h.tol > 0, "hartree.tol must be positive")
    _require(h.momentum_measure in ("unit", "2pi"),
             "hartree.momentum_measure must be unit or 2pi")
    _require(cfg.output.format in ("json", "csv"),
             "output.format must be json or csv")
