"""Turn cycler / power-supply logs into capacity curves.

A log is rows of ``(timestamp s, voltage V, current A)`` with positive current
charging the cell. Vendor formats plug in through :data:`LOG_READERS`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

from .errors import DataFormatError, DomainError
from .fitting import CapacityCurve
from .tables import read_numeric_csv

DEFAULT_THRESHOLD = 0.10
DEFAULT_REST_CURRENT = 1e-4
DEFAULT_GAP_FACTOR = 10.0


class IngestWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class InstrumentLog:
    t: np.ndarray
    v: np.ndarray
    i: np.ndarray
    gaps: tuple[int, ...] = field(default=())

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if not (t.shape == np.shape(self.v) == np.shape(self.i)) or t.ndim != 1:
            raise DomainError("log columns must be 1-D and of equal length")
        if np.any(np.diff(t) < 0):
            bad = int(np.argmax(np.diff(t) < 0)) + 1
            raise DomainError(f"timestamps decrease at row {bad}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        object.__setattr__(self, "i", np.asarray(self.i, dtype=float))

    @classmethod
    def from_columns(cls, t, v, i, gap_factor: float = DEFAULT_GAP_FACTOR) -> "InstrumentLog":
        """Build a log and flag sampling gaps.

        An interval is a gap when it exceeds ``gap_factor`` times the median of
        the positive intervals within 10 rows on either side.
        """
        t = np.asarray(t, dtype=float)
        gaps: tuple[int, ...] = ()
        if t.size > 2:
            dt = np.diff(t)
            half = 10
            padded = np.pad(np.where(dt > 0, dt, np.nan), half, constant_values=np.nan)
            windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * half + 1).copy()
            windows[:, half] = np.nan  # exclude the interval itself
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                local = np.nanmedian(windows, axis=1)
            flagged = np.flatnonzero(np.isfinite(local) & (dt > gap_factor * local))
            gaps = tuple(int(k) + 1 for k in flagged)
        log = cls(t, v, i, gaps)
        if gaps:
            warnings.warn(
                f"{len(gaps)} sampling gap(s) flagged (first before row {gaps[0]}); "
                "not interpolated",
                IngestWarning,
                stacklevel=2,
            )
        return log


def read_generic_log(path) -> InstrumentLog:
    """Three-column CSV with header ``t_s,v_V,i_A``."""
    cols = read_numeric_csv(path, ("t_s", "v_V", "i_A"))
    try:
        return InstrumentLog.from_columns(cols["t_s"], cols["v_V"], cols["i_A"])
    except DomainError as exc:
        raise DataFormatError(str(exc), path) from None


#: Adapter point for vendor log formats: name -> reader(path) -> InstrumentLog.
LOG_READERS: dict[str, Callable[..., InstrumentLog]] = {"generic": read_generic_log}


def read_log(path, fmt: str = "generic") -> InstrumentLog:
    try:
        reader = LOG_READERS[fmt]
    except KeyError:
        raise DomainError(f"unknown log format {fmt!r}; known: {sorted(LOG_READERS)}") from None
    return reader(path)


@dataclass(frozen=True)
class Segment:
    start: int  # first row
    stop: int  # one past the last row
    current: float  # median current over the rows

    @property
    def kind(self) -> str:
        if self.current > 0:
            return "charge"
        if self.current < 0:
            return "discharge"
        return "rest"


def segment_log(
    log: InstrumentLog,
    threshold: float = DEFAULT_THRESHOLD,
    rest_current: float = DEFAULT_REST_CURRENT,
) -> list[Segment]:
    """Split at current-setpoint changes.

    A new segment starts when ``|dI|`` between consecutive rows exceeds
    ``threshold`` times the larger magnitude. Currents below ``rest_current``
    count as zero.
    """
    if log.t.size == 0:
        return []
    i = np.where(np.abs(log.i) < rest_current, 0.0, log.i)
    jump = np.abs(np.diff(i)) > threshold * np.maximum(np.abs(i[1:]), np.abs(i[:-1]))
    edges = np.concatenate([[0], np.flatnonzero(jump) + 1, [i.size]])
    return [
        Segment(int(a), int(b), float(np.median(i[a:b]))) for a, b in zip(edges[:-1], edges[1:])
    ]


def _group_key(current: float, keys: list[float], threshold: float) -> float:
    for k in keys:
        if abs(current - k) <= threshold * max(current, k):
            return k
    keys.append(current)
    return current


def ingest_log(
    log: InstrumentLog,
    v_h: float,
    v_l: float,
    *,
    threshold: float = DEFAULT_THRESHOLD,
    rest_current: float = DEFAULT_REST_CURRENT,
    voltage_tol: float = 0.02,
) -> CapacityCurve:
    """Capacity of the final discharge at each current setpoint.

    A discharge counts as complete when the log continues after it and its
    last voltage is within ``voltage_tol`` of ``v_l``. Charge is the
    trapezoidal integral of ``|I|`` over the segment's timestamps. A current
    whose final discharge is incomplete is omitted with a warning.
    """
    if not v_h > v_l:
        raise DomainError(f"v_h ({v_h}) must exceed v_l ({v_l})")
    segments = segment_log(log, threshold, rest_current)
    keys: list[float] = []
    final: dict[float, Segment] = {}
    for seg in segments:
        if seg.kind != "discharge":
            continue
        final[_group_key(-seg.current, keys, threshold)] = seg

    currents, capacities = [], []
    for key, seg in final.items():
        last_row = seg.stop - 1
        complete = seg.stop < log.t.size and log.v[last_row] <= v_l + voltage_tol
        if not complete:
            warnings.warn(
                f"final discharge at {key:.6g} A (rows {seg.start}-{last_row}) is "
                "incomplete; current omitted",
                IngestWarning,
                stacklevel=2,
            )
            continue
        rows = slice(seg.start, seg.stop)
        charge = float(trapezoid(np.abs(log.i[rows]), log.t[rows]))
        currents.append(-seg.current)
        capacities.append(charge)
    if not currents:
        warnings.warn("no complete discharge found in log", IngestWarning, stacklevel=2)
    return CapacityCurve(np.array(currents), np.array(capacities), v_h - v_l)
