"""Finite Morrison RC ladders that approximate a constant-phase element.

Branch ``i`` (``i = -N..N``) is a series RC with ``R_i = R_0 k^i`` and
``C_i = C_0 (k^(1/alpha - 1))^i`` where ``k = k_f^alpha``. Time constants then
grow by ``k_f`` per branch. A lumped capacitor ``c_t`` in parallel stands in for
the infinite tail of faster branches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DataFormatError,
    DegenerateNetworkError,
    DomainError,
    InsufficientBranchesError,
)
from .fractional import CpeParams, cpe_impedance

#: Designed band used when none is given, in Hz.
DEFAULT_BAND = (5e-7, 2.0)

#: Explicit Euler step as a fraction of the fastest branch time constant.
STEP_FRACTION = 0.25

_CALIBRATION_POINTS = 21
_FORMAT_TAG = "morrison-network v1"


@dataclass(frozen=True)
class MorrisonSpec:
    target: CpeParams
    n_half: int = 30
    k_f: float = 1.4

    def __post_init__(self):
        if int(self.n_half) != self.n_half or self.n_half < 1:
            raise DomainError(f"n_half must be an integer >= 1, got {self.n_half!r}")
        if not self.k_f > 1.0:
            raise DomainError(f"k_f must exceed 1, got {self.k_f!r}")

    @property
    def k(self) -> float:
        """Resistance ratio between neighbouring branches."""
        return self.k_f**self.target.alpha

    @property
    def capacitance_ratio(self) -> float:
        """``k^(1/alpha - 1)``, equal to ``k_f^(1 - alpha)``."""
        return self.k ** (1.0 / self.target.alpha - 1.0)


@dataclass(frozen=True, eq=False)
class MorrisonNetwork:
    """Immutable ladder: branch resistances/capacitances for ``i = -N..N``."""

    resistances: np.ndarray
    capacitances: np.ndarray
    c_t: float
    target: CpeParams
    band: tuple[float, float] | None = field(default=None)

    def __post_init__(self):
        r = np.array(self.resistances, dtype=float)
        c = np.array(self.capacitances, dtype=float)
        if r.ndim != 1 or r.shape != c.shape or r.size % 2 != 1:
            raise DomainError("need an odd number of branches with matching R and C")
        if np.any(~(r > 0)) or np.any(~(c > 0)) or not self.c_t > 0:
            raise DomainError("all resistances and capacitances must be positive")
        r.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "resistances", r)
        object.__setattr__(self, "capacitances", c)
        object.__setattr__(self, "c_t", float(self.c_t))

    @property
    def n_half(self) -> int:
        return self.resistances.size // 2

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.n_half, self.n_half + 1)

    @property
    def time_constants(self) -> np.ndarray:
        return self.resistances * self.capacitances

    @property
    def tau_min(self) -> float:
        return float(self.time_constants.min())

    @property
    def r_0(self) -> float:
        return float(self.resistances[self.n_half])

    @property
    def c_0(self) -> float:
        return float(self.capacitances[self.n_half])

    @property
    def total_capacitance(self) -> float:
        return float(self.capacitances.sum()) + self.c_t

    def stable_time_step(self, fraction: float = STEP_FRACTION) -> float:
        return fraction * self.tau_min


def terminating_capacitance(c_fastest: float, capacitance_ratio: float) -> float:
    """Lumped capacitance of all branches faster than the ladder's fastest one.

    Geometric sum ``C_-N * r / (r - 1)`` with ``r = k^(1/alpha - 1)``.
    """
    if capacitance_ratio <= 1.0:
        raise DegenerateNetworkError(
            "degenerate: alpha = 1 gives equal branch capacitors and an infinite "
            "terminating capacitor; use an ideal capacitor instead"
        )
    return c_fastest * capacitance_ratio / (capacitance_ratio - 1.0)


def build_network(
    spec: MorrisonSpec,
    r_0: float,
    c_0: float,
    c_t: float | None = None,
    band: tuple[float, float] | None = None,
) -> MorrisonNetwork:
    """Ladder from the branch laws; ``c_t`` defaults to the geometric tail sum."""
    i = np.arange(-spec.n_half, spec.n_half + 1)
    r = r_0 * spec.k**i
    c = c_0 * spec.capacitance_ratio**i
    if c_t is None:
        c_t = terminating_capacitance(c[0], spec.capacitance_ratio)
    return MorrisonNetwork(r, c, c_t, spec.target, band)


def _tau_of(frequency: float) -> float:
    return 1.0 / (2.0 * math.pi * frequency)


def minimum_half_count(band: tuple[float, float], k_f: float) -> int:
    """Smallest N whose +/-N branch time constants span ``band`` around its centre."""
    f_min, f_max = band
    half_span = 0.5 * math.log(f_max / f_min) / math.log(k_f)
    return max(1, math.ceil(half_span - 1e-9))


def simulation_band(
    spec: MorrisonSpec, dt: float, step_fraction: float = STEP_FRACTION
) -> tuple[float, float]:
    """Band whose centred ladder has fastest time constant ``dt / step_fraction``.

    Use this to place a ladder for time-domain work at a given Euler step.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt!r}")
    tau_min = dt / step_fraction
    tau_max = tau_min * spec.k_f ** (2 * spec.n_half)
    return (1.0 / (2.0 * math.pi * tau_max), 1.0 / (2.0 * math.pi * tau_min))


def synthesize(spec: MorrisonSpec, band: tuple[float, float] = DEFAULT_BAND) -> MorrisonNetwork:
    """Ladder approximating ``spec.target`` over ``band`` (Hz).

    The centre branch time constant sits at the geometric centre of the band.
    The remaining scale (``C_0`` with ``R_0 = tau_0 / C_0``) is the least-squares
    match of ``log|Z|`` to the target over the central decade, which has a
    closed form because scaling ``C_0`` scales the whole admittance.
    """
    f_min, f_max = (float(b) for b in band)
    if not (0.0 < f_min < f_max):
        raise DomainError(f"band must satisfy 0 < f_min < f_max, got {band!r}")
    if spec.target.alpha >= 1.0:
        raise DegenerateNetworkError(
            "degenerate: alpha = 1 is an ideal capacitor; use an ideal capacitor model"
        )
    needed = minimum_half_count((f_min, f_max), spec.k_f)
    if spec.n_half < needed:
        raise InsufficientBranchesError(spec.n_half, needed)

    f_centre = math.sqrt(f_min * f_max)
    tau_0 = _tau_of(f_centre)
    unit = build_network(spec, r_0=tau_0, c_0=1.0)
    grid = f_centre * np.logspace(-0.5, 0.5, _CALIBRATION_POINTS)
    log_ratio = np.log(np.abs(network_impedance(unit, grid))) - np.log(
        np.abs(cpe_impedance(spec.target, grid))
    )
    c_0 = float(np.exp(log_ratio.mean()))
    return build_network(spec, r_0=tau_0 / c_0, c_0=c_0, band=(f_min, f_max))


def network_impedance(net: MorrisonNetwork, frequency):
    """Exact impedance ``1 / (j w C_t + sum_i 1 / (R_i + 1 / (j w C_i)))``."""
    f = np.asarray(frequency, dtype=float)
    if np.any(~(f > 0.0)):
        raise DomainError("frequency must be strictly positive")
    jw = 2j * np.pi * f[..., None]
    r = net.resistances
    c = net.capacitances
    # branch admittance jwC / (1 + jwRC) avoids 1/(jwC) overflow at tiny f
    y = jw[..., 0] * net.c_t + np.sum(jw * c / (1.0 + jw * r * c), axis=-1)
    z = 1.0 / y
    return z if z.ndim else complex(z)


@dataclass(frozen=True, eq=False)
class ApproximationReport:
    frequency: np.ndarray
    mag_net: np.ndarray
    mag_cpe: np.ndarray
    phase_net_deg: np.ndarray
    phase_cpe_deg: np.ndarray

    @property
    def mag_err_pct(self) -> np.ndarray:
        return 100.0 * (self.mag_net / self.mag_cpe - 1.0)

    @property
    def phase_err_deg(self) -> np.ndarray:
        return self.phase_net_deg - self.phase_cpe_deg

    @property
    def max_mag_err_pct(self) -> float:
        return float(np.max(np.abs(self.mag_err_pct)))

    @property
    def max_phase_err_deg(self) -> float:
        return float(np.max(np.abs(self.phase_err_deg)))

    columns = (
        "f_Hz",
        "abs_z_net_ohm",
        "abs_z_cpe_ohm",
        "phase_net_deg",
        "phase_cpe_deg",
        "mag_err_pct",
        "phase_err_deg",
    )

    def rows(self):
        return zip(
            self.frequency,
            self.mag_net,
            self.mag_cpe,
            self.phase_net_deg,
            self.phase_cpe_deg,
            self.mag_err_pct,
            self.phase_err_deg,
        )


def approximation_report(
    net: MorrisonNetwork, band: tuple[float, float] | None = None, grid_points: int = 50
) -> ApproximationReport:
    """Compare the ladder with its target CPE on a log-spaced grid."""
    if band is None:
        band = net.band if net.band is not None else DEFAULT_BAND
    f = np.geomspace(band[0], band[1], grid_points)
    z_net = network_impedance(net, f)
    z_cpe = cpe_impedance(net.target, f)
    return ApproximationReport(
        frequency=f,
        mag_net=np.abs(z_net),
        mag_cpe=np.abs(z_cpe),
        phase_net_deg=np.degrees(np.angle(z_net)),
        phase_cpe_deg=np.degrees(np.angle(z_cpe)),
    )


def central_band(band: tuple[float, float], fraction: float = 0.8) -> tuple[float, float]:
    """Central ``fraction`` of ``band`` on a log scale."""
    lo, hi = math.log(band[0]), math.log(band[1])
    trim = 0.5 * (1.0 - fraction) * (hi - lo)
    return (math.exp(lo + trim), math.exp(hi - trim))


def write_network(net: MorrisonNetwork, path) -> None:
    """Write the ladder as a plain-text table.

    ``#`` header lines carry the format tag, ``c_t`` and the target CPE; the body
    is CSV with columns ``index,r_ohm,c_farad``.
    """
    Path(path).write_text(format_network(net), encoding="utf-8", newline="\n")


def format_network(net: MorrisonNetwork) -> str:
    lines = [
        f"# {_FORMAT_TAG}",
        f"# c_t={net.c_t!r}",
        f"# alpha={net.target.alpha!r}",
        f"# c_f={net.target.c_f!r}",
    ]
    if net.band is not None:
        lines.append(f"# band={net.band[0]!r},{net.band[1]!r}")
    lines.append("index,r_ohm,c_farad")
    for i, r, c in zip(net.indices, net.resistances, net.capacitances):
        lines.append(f"{i},{float(r)!r},{float(c)!r}")
    return "\n".join(lines) + "\n"


def read_network(path) -> MorrisonNetwork:
    text = Path(path).read_text(encoding="utf-8")
    header: dict[str, str] = {}
    rows = []
    saw_columns = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                header[key.strip()] = value.strip()
            continue
        if not saw_columns:
            if [s.strip() for s in line.split(",")] != ["index", "r_ohm", "c_farad"]:
                raise DataFormatError("expected header 'index,r_ohm,c_farad'", path, lineno)
            saw_columns = True
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DataFormatError(f"expected 3 fields, got {len(parts)}", path, lineno)
        try:
            rows.append((int(parts[0]), float(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise DataFormatError(str(exc), path, lineno) from None
    for key in ("c_t", "alpha", "c_f"):
        if key not in header:
            raise DataFormatError(f"missing '# {key}=' header line", path)
    if not rows:
        raise DataFormatError("no branch rows", path)
    rows.sort()
    n = len(rows) // 2
    if [r[0] for r in rows] != list(range(-n, n + 1)):
        raise DataFormatError("branch indices must run -N..N without gaps", path)
    band = None
    if "band" in header:
        lo, hi = header["band"].split(",")
        band = (float(lo), float(hi))
    try:
        return MorrisonNetwork(
            np.array([r[1] for r in rows]),
            np.array([r[2] for r in rows]),
            float(header["c_t"]),
            CpeParams(float(header["alpha"]), float(header["c_f"])),
            band,
        )
    except (ValueError, DomainError) as exc:
        raise DataFormatError(str(exc), path) from None
