"""Closed-form fractional calculus for the CPE-R battery model.

A constant-phase element (CPE) with exponent ``alpha`` and fractional
capacitance ``c_f`` obeys ``I = c_f * d^alpha V / dt^alpha``. Everything here is
in SI units; ampere-hours appear only in presentation helpers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ResistiveWindowExhausted

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class CpeParams:
    """Exponent and fractional capacitance (A s^alpha / V) of a CPE."""

    alpha: float
    c_f: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if not (self.c_f > 0.0 and math.isfinite(self.c_f)):
            raise DomainError(f"c_f must be positive and finite, got {self.c_f!r}")


@dataclass(frozen=True)
class CircuitModel:
    """CPE in series with a resistor ``r_s`` (ohm)."""

    cpe: CpeParams
    r_s: float = 0.0

    def __post_init__(self):
        if not (self.r_s >= 0.0 and math.isfinite(self.r_s)):
            raise DomainError(f"r_s must be non-negative and finite, got {self.r_s!r}")

    @classmethod
    def from_values(cls, alpha: float, c_f: float, r_s: float = 0.0) -> "CircuitModel":
        return cls(CpeParams(alpha, c_f), r_s)


@dataclass(frozen=True)
class StepCurrentProfile:
    """Piecewise-constant current: ``(start_time, current)`` segments.

    Each segment holds its current until the next start time; the last one
    holds forever. The element is relaxed before ``t = 0``.
    """

    segments: tuple[tuple[float, float], ...]

    def __init__(self, segments: Iterable[tuple[float, float]]):
        segs = tuple((float(t), float(i)) for t, i in segments)
        if not segs:
            raise DomainError("profile needs at least one segment")
        if segs[0][0] != 0.0:
            raise DomainError("first segment must start at t = 0")
        starts = [t for t, _ in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise DomainError("segment start times must be strictly increasing")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def charge_then_discharge(cls, i0: float, duration: float) -> "StepCurrentProfile":
        return cls([(0.0, i0), (duration, -i0)])

    @property
    def start_times(self) -> np.ndarray:
        return np.array([t for t, _ in self.segments])

    @property
    def currents(self) -> np.ndarray:
        return np.array([i for _, i in self.segments])

    def current_steps(self) -> np.ndarray:
        """Jump in current at each segment start (the first jump is from zero)."""
        return np.diff(self.currents, prepend=0.0)

    def scaled(self, factor: float) -> "StepCurrentProfile":
        return StepCurrentProfile((t, factor * i) for t, i in self.segments)

    def current_at(self, t: float) -> float:
        idx = np.searchsorted(self.start_times, t, side="right") - 1
        if idx < 0:
            raise DomainError(f"t = {t} precedes the profile start")
        return self.segments[idx][1]


@dataclass(frozen=True)
class CycleProtocol:
    """Constant-current cycling between ``v_l`` and ``v_h`` at ``+/- i0``."""

    i0: float
    v_h: float
    v_l: float

    def __post_init__(self):
        if not self.i0 > 0.0:
            raise DomainError(f"i0 must be positive, got {self.i0!r}")
        if not self.v_h > self.v_l:
            raise DomainError(f"v_h ({self.v_h}) must exceed v_l ({self.v_l})")

    @property
    def delta_v(self) -> float:
        return self.v_h - self.v_l


@dataclass(frozen=True)
class CapacityPoint:
    """Charge ``capacity`` (A s) drawn at constant ``current`` (A)."""

    current: float
    capacity: float

    def __post_init__(self):
        if not self.current > 0.0:
            raise DomainError(f"current must be positive, got {self.current!r}")
        if not self.capacity >= 0.0:
            raise DomainError(f"capacity must be non-negative, got {self.capacity!r}")

    @property
    def capacity_ah(self) -> float:
        return self.capacity / SECONDS_PER_HOUR

    @property
    def duration(self) -> float:
        """Discharge time T = Q / I0 in seconds."""
        return self.capacity / self.current


def _positive_frequency(frequency):
    f = np.asarray(frequency, dtype=float)
    if np.any(~(f > 0.0)):
        raise DomainError("frequency must be strictly positive")
    return f


def cpe_impedance(cpe: CpeParams, frequency):
    """Impedance ``1 / (c_f (j w)^alpha)`` at ``frequency`` in Hz.

    Evaluated in polar form so the phase is exactly ``-alpha * pi / 2``.
    Accepts scalars or arrays.
    """
    f = _positive_frequency(frequency)
    omega = 2.0 * np.pi * f
    magnitude = 1.0 / (cpe.c_f * omega**cpe.alpha)
    z = magnitude * np.exp(-0.5j * np.pi * cpe.alpha)
    return z if z.ndim else complex(z)


def model_impedance(model: CircuitModel, frequency):
    return model.r_s + cpe_impedance(model.cpe, frequency)


def rl_voltage(cpe: CpeParams, profile: StepCurrentProfile, t):
    """Riemann-Liouville voltage of a relaxed CPE driven by ``profile``.

    For piecewise-constant current the fractional integral reduces to
    ``sum_k dI_k (t - t_k)^alpha / (c_f Gamma(alpha + 1))`` over segment starts
    ``t_k <= t``. Accepts scalar or array ``t``.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0) or np.any(np.isnan(t_arr)):
        raise DomainError("t must be >= 0 (the profile starts at t = 0)")
    starts = profile.start_times
    steps = profile.current_steps()
    lag = t_arr[..., None] - starts
    powered = np.where(lag > 0.0, np.abs(lag) ** cpe.alpha, 0.0)
    v = powered @ steps / (cpe.c_f * math.gamma(cpe.alpha + 1.0))
    return v if v.ndim else float(v)


def cycle_voltage_swing(model: CircuitModel, i0: float, duration: float) -> float:
    """Voltage swing V_h - V_l for charge at ``i0`` for ``duration``, then discharge.

    Starts from a relaxed element; the discharge lasts as long as the charge.
    """
    if not i0 > 0.0:
        raise DomainError(f"i0 must be positive, got {i0!r}")
    if not duration > 0.0:
        raise DomainError(f"duration must be positive, got {duration!r}")
    a = model.cpe.alpha
    cpe_part = (3.0 - 2.0**a) * i0 * duration**a / (model.cpe.c_f * math.gamma(a + 1.0))
    return cpe_part + 2.0 * i0 * model.r_s


def analytic_capacity(model: CircuitModel, protocol: CycleProtocol) -> CapacityPoint:
    """Charge drawn over the window ``protocol.delta_v`` at current ``protocol.i0``.

    Inverse of :func:`cycle_voltage_swing`. Raises
    :class:`ResistiveWindowExhausted` when ``2 i0 r_s >= delta_v``.
    """
    a = model.cpe.alpha
    i0 = protocol.i0
    window = protocol.delta_v - 2.0 * i0 * model.r_s
    if window <= 0.0:
        raise ResistiveWindowExhausted(i0, model.r_s, protocol.delta_v)
    # log form keeps I0^(1 - 1/alpha) well conditioned for small alpha
    log_q = (
        math.log(model.cpe.c_f * math.gamma(a + 1.0) / (3.0 - 2.0**a) * window) / a
        + (1.0 - 1.0 / a) * math.log(i0)
    )
    return CapacityPoint(i0, math.exp(log_q))


def capacity_curve_values(
    model: CircuitModel, currents: Sequence[float], v_h: float, v_l: float
) -> np.ndarray:
    """Vector of :func:`analytic_capacity` charges for several currents."""
    return np.array(
        [analytic_capacity(model, CycleProtocol(i, v_h, v_l)).capacity for i in currents]
    )


def peukert_exponent(cpe: CpeParams) -> float:
    """Peukert exponent ``n`` in ``T I0^n = const`` (low-current limit)."""
    return 1.0 / cpe.alpha
