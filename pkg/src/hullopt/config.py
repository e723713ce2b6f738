"""Run configuration: flat `key = value` sections with strict validation.

Defaults correspond to the desk-scale towing-basin setup (rho = 1000, g =
9.81, L = 2 m, T = 0.2 m, V = 0.03 m^3, C_d = 1e-2, 100x20 grid, 80 nodes
per quadrature octave).  Unknown sections or keys are hard errors so typos
cannot silently fall back to defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, asdict

from .geometry import FlowParams

__all__ = ["RunConfig", "parse_config", "default_config", "ConfigError"]


class ConfigError(ValueError):
    """Invalid configuration file or option values."""


@dataclass(frozen=True)
class PhysicalConfig:
    rho: float = 1000.0
    g: float = 9.81
    length: float = 2.0
    draft: float = 0.2
    volume: float = 0.03
    drag_coefficient: float = 1e-2

    def validate(self) -> None:
        for name in ("rho", "g", "length", "draft", "volume"):
            if not (getattr(self, name) > 0.0):
                raise ConfigError(f"physical.{name} must be positive, got {getattr(self, name)}")
        if not (self.drag_coefficient > 0.0):
            raise ConfigError(
                f"physical.drag_coefficient must be positive, got {self.drag_coefficient}")


@dataclass(frozen=True)
class GridConfig:
    nx: int = 100
    nz: int = 20

    def validate(self) -> None:
        if self.nx < 2 or self.nz < 2:
            raise ConfigError(f"grid.nx and grid.nz must be >= 2, got {self.nx}, {self.nz}")


@dataclass(frozen=True)
class QuadratureConfig:
    n_per_octave: int = 80
    k_lambda_max: int = 14
    tol: float = 1e-12

    def validate(self) -> None:
        if self.n_per_octave < 1:
            raise ConfigError(f"quadrature.n_per_octave must be >= 1, got {self.n_per_octave}")
        if self.k_lambda_max < 1:
            raise ConfigError(f"quadrature.k_lambda_max must be >= 1, got {self.k_lambda_max}")
        if not (self.tol > 0.0):
            raise ConfigError(f"quadrature.tol must be positive, got {self.tol}")


@dataclass(frozen=True)
class SolverConfig:
    dr1: float | None = None      # None: estimated from the spectrum of Q^{-1}
    dr2: float | None = None
    tol: float = 1e-8
    max_iter: int = 400_000
    init: str = "flat"            # flat | wigley | file
    init_file: str | None = None

    def validate(self) -> None:
        for name in ("dr1", "dr2"):
            value = getattr(self, name)
            if value is not None and not (value > 0.0):
                raise ConfigError(f"solver.{name} must be positive, got {value}")
        if not (self.tol > 0.0):
            raise ConfigError(f"solver.tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"solver.max_iter must be >= 1, got {self.max_iter}")
        if self.init not in ("flat", "wigley", "file"):
            raise ConfigError(f"solver.init must be flat, wigley or file, got {self.init!r}")
        if self.init == "file" and not self.init_file:
            raise ConfigError("solver.init = file requires solver.init_file")


@dataclass(frozen=True)
class ExperimentConfig:
    froude: float | None = None
    speed: float | None = None
    froude_list: tuple[float, ...] = (0.1, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0, 1.5, 2.0)
    eps_factors: tuple[float, ...] = (1.0, 1e-1, 1e-2, 1e-3, 1e-4)
    fr_design: float = 0.6
    thresholds: tuple[float, ...] = (1e-15, 1e-12)

    def validate(self) -> None:
        if self.froude is not None and self.speed is not None:
            raise ConfigError("give experiment.froude or experiment.speed, not both")
        for name in ("froude", "speed", "fr_design"):
            value = getattr(self, name)
            if value is not None and not (value > 0.0):
                raise ConfigError(f"experiment.{name} must be positive, got {value}")
        for name in ("froude_list", "eps_factors", "thresholds"):
            values = getattr(self, name)
            if not values or any(not (x > 0.0) for x in values):
                raise ConfigError(f"experiment.{name} entries must be positive")


@dataclass(frozen=True)
class RunConfig:
    physical: PhysicalConfig = field(default_factory=PhysicalConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def validate(self) -> None:
        self.physical.validate()
        self.grid.validate()
        self.quadrature.validate()
        self.solver.validate()
        self.experiment.validate()

    def flow_params(self, froude: float | None = None, speed: float | None = None) -> FlowParams:
        """Resolve the velocity (CLI arguments win over the experiment block)."""
        if froude is None and speed is None:
            froude = self.experiment.froude
            speed = self.experiment.speed
        if froude is not None and speed is not None:
            raise ConfigError("give a Froude number or a speed, not both")
        phys = self.physical
        if froude is not None:
            return FlowParams.from_froude(froude, phys.length, rho=phys.rho, g=phys.g,
                                          drag_coefficient=phys.drag_coefficient,
                                          volume=phys.volume)
        if speed is not None:
            return FlowParams.from_speed(speed, phys.length, rho=phys.rho, g=phys.g,
                                         drag_coefficient=phys.drag_coefficient,
                                         volume=phys.volume)
        raise ConfigError("no velocity given: set experiment.froude, experiment.speed or --fr/--speed")

    def resolved(self) -> dict:
        """Plain-dict snapshot of every option, for output provenance."""
        out = asdict(self)
        for section in out.values():
            for key, value in section.items():
                if isinstance(value, tuple):
                    section[key] = list(value)
        return out


def default_config() -> RunConfig:
    return RunConfig()


_PARSERS = {
    PhysicalConfig: {"rho": float, "g": float, "length": float, "draft": float,
                     "volume": float, "drag_coefficient": float},
    GridConfig: {"nx": int, "nz": int},
    QuadratureConfig: {"n_per_octave": int, "k_lambda_max": int, "tol": float},
    SolverConfig: {"dr1": float, "dr2": float, "tol": float, "max_iter": int,
                   "init": str, "init_file": str},
    ExperimentConfig: {"froude": float, "speed": float, "froude_list": "floats",
                       "eps_factors": "floats", "fr_design": float, "thresholds": "floats"},
}

_SECTIONS = {
    "physical": PhysicalConfig,
    "grid": GridConfig,
    "quadrature": QuadratureConfig,
    "solver": SolverConfig,
    "experiment": ExperimentConfig,
}


def _convert(section: str, key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind == "floats":
            return tuple(float(tok) for tok in raw.replace(",", " ").split())
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from exc


def parse_config(path) -> RunConfig:
    """Parse and validate an INI-style configuration file."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case sensitive
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    sections = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        cls = _SECTIONS[section]
        schema = _PARSERS[cls]
        values = {}
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key {section}.{key}")
            values[key] = _convert(section, key, raw, schema[key])
        sections[section] = cls(**values)
    config = RunConfig(**{name: sections.get(name, cls()) for name, cls in _SECTIONS.items()})
    config.validate()
    return config
