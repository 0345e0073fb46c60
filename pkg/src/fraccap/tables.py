"""CSV readers and writers for curves, spectra, traces and fit results.

Dialect: comma separated, one header row, UTF-8, LF line endings. Floats are
written with ``repr`` so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataFormatError
from .fitting import CapacityCurve, CrossValidation, FitResult, ImpedanceSpectrum, format_uncertainty
from .fractional import SECONDS_PER_HOUR


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value))


def render_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    Path(path).write_text(render_csv(header, rows), encoding="utf-8", newline="\n")


def read_numeric_csv(path, required: Sequence[str]) -> dict[str, np.ndarray]:
    """Read named float columns; errors name the offending line."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"not UTF-8 text ({exc.reason})", path) from None
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataFormatError("empty file", path, 1) from None
    missing = [c for c in required if c not in header]
    if missing:
        raise DataFormatError(f"missing column(s) {', '.join(missing)}", path, 1)
    idx = [header.index(c) for c in required]
    data: list[list[float]] = [[] for _ in required]
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataFormatError(
                f"expected {len(header)} fields, got {len(row)}", path, line
            )
        for col, j in zip(data, idx):
            try:
                value = float(row[j])
            except ValueError:
                raise DataFormatError(
                    f"column {header[j]!r}: cannot parse {row[j]!r} as a number", path, line
                ) from None
            if not math.isfinite(value):
                raise DataFormatError(f"column {header[j]!r}: non-finite value", path, line)
            col.append(value)
    return {name: np.array(col) for name, col in zip(required, data)}


CAPACITY_COLUMNS = ("i_A", "q_As", "q_Ah")


def capacity_rows(curve: CapacityCurve):
    return [(i, q, q / SECONDS_PER_HOUR) for i, q in zip(curve.currents, curve.capacities)]


def write_capacity_curve(curve: CapacityCurve, path) -> None:
    write_csv(path, CAPACITY_COLUMNS, capacity_rows(curve))


def read_capacity_curve(path, delta_v: float) -> CapacityCurve:
    cols = read_numeric_csv(path, ("i_A", "q_As"))
    try:
        return CapacityCurve(cols["i_A"], cols["q_As"], delta_v)
    except ValueError as exc:
        raise DataFormatError(str(exc), path) from None


SPECTRUM_COLUMNS = ("f_Hz", "re_ohm", "im_ohm")


def write_spectrum(spectrum: ImpedanceSpectrum, path) -> None:
    z = spectrum.impedances
    write_csv(path, SPECTRUM_COLUMNS, zip(spectrum.frequencies, z.real, z.imag))


def read_spectrum(path) -> ImpedanceSpectrum:
    cols = read_numeric_csv(path, SPECTRUM_COLUMNS)
    try:
        return ImpedanceSpectrum(cols["f_Hz"], cols["re_ohm"] + 1j * cols["im_ohm"])
    except ValueError as exc:
        raise DataFormatError(str(exc), path) from None


TRACE_COLUMNS = ("t_s", "v_terminal_V", "i_A")


def write_trace(t, v, i, path) -> None:
    write_csv(path, TRACE_COLUMNS, zip(t, v, i))


FIT_COLUMNS = (
    "method",
    "alpha",
    "alpha_err",
    "c_f",
    "c_f_err",
    "r_s",
    "r_s_err",
    "n_points_used",
    "residual_rms",
    "overshoot",
)


def fit_row(fit: FitResult) -> list:
    return [getattr(fit, name) for name in FIT_COLUMNS]


def fit_block(fit: FitResult, prefix: str = "") -> str:
    """Flat ``key = value`` lines for one fit."""
    lines = [
        f"{prefix}method = {fit.method}",
        f"{prefix}alpha = {format_uncertainty(fit.alpha, fit.alpha_err)}",
        f"{prefix}c_f_As^a/V = {format_uncertainty(fit.c_f, fit.c_f_err)}",
        f"{prefix}r_s_ohm = {format_uncertainty(fit.r_s, fit.r_s_err)}",
        f"{prefix}n_points_used = {fit.n_points_used}",
        f"{prefix}residual_rms = {fit.residual_rms:.3g}",
    ]
    if fit.overshoot:
        lines.append(f"{prefix}warning = alpha exceeds 1")
    return "\n".join(lines)


def cross_validation_block(cv: CrossValidation) -> str:
    return "\n".join(
        [
            f"cross.alpha_diff = {cv.alpha_diff:.6g}",
            f"cross.alpha_combined_sigma = {cv.alpha_sigma:.6g}",
            f"cross.alpha_diff_in_sigma = {cv.alpha_z:.3g}",
            f"cross.r_s_rel_diff = {cv.r_s_rel_diff:.4g}",
            f"cross.c_f_ratio_capacity_over_impedance = {cv.c_f_ratio:.4g}",
        ]
    )
