"""Experiment configuration: one YAML file, overridable from the command line."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import DomainError, FraccapError
from .fractional import CircuitModel, CpeParams, CycleProtocol
from .morrison import MorrisonNetwork, MorrisonSpec, read_network, simulation_band, synthesize

#: Discharge currents (A) of the reference cycling experiment, in run order.
REFERENCE_LADDER = (5.0, 2.0, 1.0, 0.5, 0.2, 0.1, 0.05)

#: Time step (s) used to place the ladder when no band or network is given.
REFERENCE_DT = 1.0

#: Impedance grid of the reference spectrum: 5 points per decade, 0.5 uHz to 2 Hz.
REFERENCE_FREQUENCIES = tuple(float(f) for f in np.geomspace(5e-7, 2.0, 34))


class ConfigError(FraccapError, ValueError):
    pass


@dataclass
class ExperimentConfig:
    # defaults describe the 4.8 Ah NCA reference cell
    alpha: float = 0.9711
    c_f: float = 9203.0
    r_s: float = 0.0631
    network: str | None = None
    n_half: int = 30
    k_f: float = 1.4
    f_min: float | None = None
    f_max: float | None = None
    v_h: float = 4.30
    v_l: float = 3.00
    currents: list[float] = field(default_factory=lambda: list(REFERENCE_LADDER))
    n_cycles: int = 2
    dt: float | None = None
    carry_history: bool = True
    output_dir: str = "out"
    seed: int = 0

    @property
    def cpe(self) -> CpeParams:
        return CpeParams(self.alpha, self.c_f)

    @property
    def model(self) -> CircuitModel:
        return CircuitModel(self.cpe, self.r_s)

    @property
    def spec(self) -> MorrisonSpec:
        return MorrisonSpec(self.cpe, self.n_half, self.k_f)

    @property
    def band(self) -> tuple[float, float] | None:
        if self.f_min is None and self.f_max is None:
            return None
        return (self.f_min, self.f_max)

    def protocol(self, i0: float = 1.0) -> CycleProtocol:
        return CycleProtocol(i0, self.v_h, self.v_l)

    def validate(self) -> "ExperimentConfig":
        """Check every precondition before anything runs or is written."""
        try:
            self.model
            self.spec
            self.protocol()
        except (DomainError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        if (self.f_min is None) != (self.f_max is None):
            raise ConfigError("f_min and f_max must be given together")
        if self.band is not None and not 0 < self.f_min < self.f_max:
            raise ConfigError(f"band must satisfy 0 < f_min < f_max, got {self.band}")
        if not self.currents:
            raise ConfigError("current ladder is empty")
        if any(not (isinstance(i, (int, float)) and i > 0 and math.isfinite(i)) for i in self.currents):
            raise ConfigError(f"currents must be positive numbers, got {self.currents}")
        if len(set(self.currents)) != len(self.currents):
            raise ConfigError("currents must be distinct")
        for i in self.currents:
            if 2.0 * i * self.r_s >= self.v_h - self.v_l:
                raise ConfigError(
                    f"resistive window exhausted at {i:g} A: 2*I*R_s >= v_h - v_l "
                    f"(capacity vanishes at {(self.v_h - self.v_l) / (2 * self.r_s):.4g} A)"
                )
        if int(self.n_cycles) != self.n_cycles or self.n_cycles < 1:
            raise ConfigError(f"n_cycles must be an integer >= 1, got {self.n_cycles}")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.network is not None and not Path(self.network).is_file():
            raise ConfigError(f"network file not found: {self.network}")
        return self

    def resolve_network(self) -> MorrisonNetwork:
        """Network from file, from the configured band, or placed for ``dt``."""
        if self.network is not None:
            return read_network(self.network)
        if self.band is not None:
            return synthesize(self.spec, self.band)
        return synthesize(self.spec, simulation_band(self.spec, self.dt or REFERENCE_DT))


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}

_FLOAT_KEYS = ("alpha", "c_f", "r_s", "k_f", "f_min", "f_max", "v_h", "v_l", "dt")
_INT_KEYS = ("n_half", "n_cycles", "seed")


def _coerce(values: dict[str, Any]) -> None:
    for key in _FLOAT_KEYS + _INT_KEYS:
        value = values.get(key)
        if value is None:
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        if key in _INT_KEYS:
            if int(value) != value:
                raise ConfigError(f"{key} must be an integer, got {value!r}")
            values[key] = int(value)
        else:
            values[key] = float(value)


def load_config(path=None, **overrides: Any) -> ExperimentConfig:
    """Read ``path`` (YAML mapping) then apply non-None ``overrides``."""
    values: dict[str, Any] = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a mapping")
        values.update(loaded)
    values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(values) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    if "currents" in values:
        currents = values["currents"]
        if not isinstance(currents, (list, tuple)):
            raise ConfigError("currents must be a list")
        values["currents"] = list(currents)
    _coerce(values)
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
