"""Experiment configuration: typed sections, TOML/JSON loading, strict keys.

A config file describes one end-to-end experiment — which case to load, how
long a load history to simulate, attack magnitudes, detector budget, search
settings and evaluation protocol. Unknown keys are rejected outright so a
typo cannot silently fall back to a default, and the fully resolved config
(defaults included) is serialized into the results for provenance.
"""
from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version-dependent import
    import tomli as tomllib

from .attacks import AttackConfig
from .exceptions import ConfigError, GridsenseError
from .nsga2 import GaConfig
from .placement import ConstraintConfig
from .powerflow import LoadProfile


@dataclass(frozen=True)
class SimulationSection:
    horizon: int = 200
    period: int = 96
    amplitude: float = 0.1
    noise: float = 0.08
    low: float = 0.8
    high: float = 1.2

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"simulation.horizon must be at least 1, got {self.horizon}")
        if self.period < 1:
            raise ConfigError(f"simulation.period must be at least 1, got {self.period}")
        if self.amplitude < 0 or self.noise < 0:
            raise ConfigError("simulation.amplitude and simulation.noise must be non-negative")
        if not 0 < self.low <= self.high:
            raise ConfigError(f"need 0 < low <= high, got low={self.low}, high={self.high}")

    def profile(self, n_buses: int, seed: int) -> LoadProfile:
        return LoadProfile.daily(n_buses, self.horizon, seed=seed, period=self.period,
                                 amplitude=self.amplitude, noise=self.noise,
                                 low=self.low, high=self.high)


@dataclass(frozen=True)
class AttackSection:
    alpha: float = 0.1
    target_fraction: float = 0.3
    channels: tuple[str, ...] = ("P", "Q")
    tau_max: float = 0.20
    magnitude_floor: float = 0.05

    def config(self, kind: str, seed: int) -> AttackConfig:
        return AttackConfig(kind=kind, alpha=self.alpha,
                            target_fraction=self.target_fraction,
                            channels=tuple(self.channels), tau_max=self.tau_max,
                            magnitude_floor=self.magnitude_floor, seed=seed)


@dataclass(frozen=True)
class DetectorSection:
    hidden: int = 32
    layers: int = 2
    epochs: int = 150
    batch_size: int = 16
    learning_rate: float = 0.01
    data_weight: float = 1.0
    physics_weight: float = 0.2
    recon_weight: float = 0.1
    reactive_residual: str = "sin"
    val_fraction: float = 0.3

    def __post_init__(self):
        for name in ("hidden", "layers", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"detector.{name} must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError(f"detector.learning_rate must be positive, got {self.learning_rate}")
        for name in ("data_weight", "physics_weight", "recon_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"detector.{name} must be non-negative")
        if self.reactive_residual not in ("sin", "cos"):
            raise ConfigError(
                f"detector.reactive_residual must be 'sin' or 'cos', got {self.reactive_residual!r}")
        if not 0 < self.val_fraction < 1:
            raise ConfigError(f"detector.val_fraction must be in (0, 1), got {self.val_fraction}")

    def params(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GaSection:
    n_pop: int = 30
    generations: int = 40
    k: int | None = None
    radius: int = 1
    h_frac: float = 0.2
    d_frac: float = 0.3
    d_min: float = 0.2
    indpb: float = 0.1
    bias: float = 0.8
    crossover_prob: float = 0.9

    def config(self, seed: int) -> GaConfig:
        return GaConfig(seed=seed, **asdict(self))


@dataclass(frozen=True)
class ConstraintSection:
    radius: int = 1
    redundancy_min: int = 2
    w_connectivity: float = 1.0
    w_coverage: float = 1.0
    w_redundancy: float = 1.0

    def config(self) -> ConstraintConfig:
        return ConstraintConfig(**asdict(self))


@dataclass(frozen=True)
class EvaluationSection:
    test_fraction: float = 0.3
    attack_fraction: float = 0.5
    val_fraction: float = 0.3
    trials: int = 30
    max_levels: int = 8
    psse_trials: int = 10
    psse_sigma: float = 0.01

    def __post_init__(self):
        if not 0 < self.test_fraction < 1 or not 0 < self.val_fraction < 1:
            raise ConfigError("evaluation.test_fraction and val_fraction must be in (0, 1)")
        if not 0 <= self.attack_fraction <= 1:
            raise ConfigError(
                f"evaluation.attack_fraction must be in [0, 1], got {self.attack_fraction}")
        for name in ("trials", "max_levels", "psse_trials"):
            if getattr(self, name) < 1:
                raise ConfigError(f"evaluation.{name} must be at least 1")
        if self.psse_sigma <= 0:
            raise ConfigError(f"evaluation.psse_sigma must be positive, got {self.psse_sigma}")


_SECTIONS = {
    "simulation": SimulationSection,
    "attacks": AttackSection,
    "detector": DetectorSection,
    "ga": GaSection,
    "constraints": ConstraintSection,
    "evaluation": EvaluationSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    case: str = "case14"
    output: str = "results"
    seed: int = 0
    workers: int | None = None
    simulation: SimulationSection = field(default_factory=SimulationSection)
    attacks: AttackSection = field(default_factory=AttackSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    ga: GaSection = field(default_factory=GaSection)
    constraints: ConstraintSection = field(default_factory=ConstraintSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)

    def __post_init__(self):
        if self.workers is not None and self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")

    def as_dict(self) -> dict:
        data = asdict(self)
        data["attacks"]["channels"] = list(data["attacks"]["channels"])
        return data


def _build_section(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {path!r} must be a table/object")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {path!r}: {', '.join(unknown)}")
    coerced = dict(data)
    if cls is AttackSection and "channels" in coerced:
        coerced["channels"] = tuple(coerced["channels"])
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value in {path!r}: {exc}") from exc


def config_from_mapping(data: dict) -> ExperimentConfig:
    """Build a validated config from a plain mapping (unknown keys rejected)."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table/object")
    scalars = {f.name for f in fields(ExperimentConfig)} - set(_SECTIONS)
    unknown = sorted(set(data) - scalars - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs = {key: data[key] for key in scalars if key in data}
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build_section(cls, data[name], name)
    try:
        cfg = ExperimentConfig(**kwargs)
        # exercise the derived constructors so bad values fail at load time,
        # not generations deep into a run
        cfg.ga.config(cfg.seed)
        cfg.constraints.config()
        for kind in ("random", "general", "lr"):
            cfg.attacks.config(kind, cfg.seed)
    except ConfigError:
        raise
    except (TypeError, ValueError, GridsenseError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read a TOML or JSON experiment config (dispatch on file suffix)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        elif suffix == ".json":
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        else:
            raise ConfigError(f"unsupported config format {suffix!r}; use .toml or .json")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    return config_from_mapping(data)
