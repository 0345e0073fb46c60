"""Extraction of (alpha, c_f, r_s) from capacity curves and impedance spectra.

Two independent routes: the capacity-vs-current curve of constant-current
cycling, and the low-frequency power law of an impedance spectrum. Reported
uncertainties are standard uncertainties with a Student-t coverage factor, so
the +/-1 sigma interval is a 68.27 % interval even for 4-point fits.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special, stats

from .errors import DomainError, ExtrapolationError, NonPhysicalFitError, ResistiveWindowExhausted
from .fractional import CapacityPoint, CircuitModel, CycleProtocol, analytic_capacity, model_impedance

#: Upper bound on a fitted alpha; values in (1, ALPHA_CEILING] are flagged.
ALPHA_CEILING = 1.05
_ONE_SIGMA = stats.norm.cdf(1.0) - stats.norm.cdf(-1.0)


class FitWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class CapacityCurve:
    """Capacities (A s) against discharge currents (A) for one voltage window.

    Points are stored sorted by current. An empty curve is allowed so that
    ingestion can report "nothing found"; fitting needs at least two points.
    """

    currents: np.ndarray
    capacities: np.ndarray
    delta_v: float

    def __post_init__(self):
        i = np.array(self.currents, dtype=float).ravel()
        q = np.array(self.capacities, dtype=float).ravel()
        if i.shape != q.shape:
            raise DomainError("currents and capacities must have equal length")
        if np.any(~(i > 0)):
            raise DomainError("currents must be strictly positive")
        if np.any(~(q >= 0)):
            raise DomainError("capacities must be non-negative")
        order = np.argsort(i, kind="stable")
        i, q = i[order], q[order]
        if np.any(np.diff(i) <= 0):
            raise DomainError("currents must be distinct")
        if not self.delta_v > 0:
            raise DomainError(f"delta_v must be positive, got {self.delta_v!r}")
        object.__setattr__(self, "currents", i)
        object.__setattr__(self, "capacities", q)
        object.__setattr__(self, "delta_v", float(self.delta_v))

    @classmethod
    def from_points(cls, points: Iterable[CapacityPoint], delta_v: float) -> "CapacityCurve":
        pts = list(points)
        return cls(
            np.array([p.current for p in pts]), np.array([p.capacity for p in pts]), delta_v
        )

    @property
    def points(self) -> list[CapacityPoint]:
        return [CapacityPoint(float(i), float(q)) for i, q in zip(self.currents, self.capacities)]

    def __len__(self) -> int:
        return self.currents.size

    def scaled(self, current_factor: float = 1.0, capacity_factor: float = 1.0) -> "CapacityCurve":
        return CapacityCurve(
            self.currents * current_factor, self.capacities * capacity_factor, self.delta_v
        )


@dataclass(frozen=True, eq=False)
class ImpedanceSpectrum:
    frequencies: np.ndarray
    impedances: np.ndarray

    def __post_init__(self):
        f = np.array(self.frequencies, dtype=float).ravel()
        z = np.array(self.impedances, dtype=complex).ravel()
        if f.shape != z.shape:
            raise DomainError("frequencies and impedances must have equal length")
        if np.any(~(f > 0)):
            raise DomainError("frequencies must be strictly positive")
        if np.any(np.diff(f) <= 0):
            raise DomainError("frequencies must be strictly increasing")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "impedances", z)

    def __len__(self) -> int:
        return self.frequencies.size


@dataclass(frozen=True)
class FitResult:
    alpha: float
    alpha_err: float
    c_f: float
    c_f_err: float
    r_s: float
    n_points_used: int
    residual_rms: float
    method: str
    r_s_err: float = math.nan
    overshoot: bool = False

    def model(self) -> CircuitModel:
        return CircuitModel.from_values(min(self.alpha, 1.0), self.c_f, self.r_s)


@dataclass(frozen=True)
class _Line:
    slope: float
    intercept: float
    cov: np.ndarray  # covariance of (intercept, slope), coverage-scaled
    residual_rms: float
    dof: int


def coverage_factor(dof: int) -> float:
    """Student-t factor turning a standard error into a 68.27 % half-width."""
    if dof <= 0:
        return math.nan
    return float(stats.t.ppf(0.5 + 0.5 * _ONE_SIGMA, dof))


def _ols(x: np.ndarray, y: np.ndarray) -> _Line:
    n = x.size
    design = np.column_stack([np.ones(n), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = n - 2
    rms = float(np.sqrt(np.mean(resid**2)))
    if dof > 0:
        s2 = float(resid @ resid) / dof
        k = coverage_factor(dof)
        cov = s2 * k**2 * np.linalg.inv(design.T @ design)
    else:
        cov = np.full((2, 2), math.nan)
    return _Line(float(coef[1]), float(coef[0]), cov, rms, dof)


def _check_alpha(alpha: float, what: str) -> bool:
    if not (0.0 < alpha <= ALPHA_CEILING) or not math.isfinite(alpha):
        raise NonPhysicalFitError(f"non-physical {what}: fitted alpha = {alpha:.6g}")
    if alpha > 1.0:
        warnings.warn(f"fitted alpha {alpha:.6g} exceeds 1", FitWarning, stacklevel=3)
        return True
    return False


def _intercept_rs(curve: CapacityCurve, n_high_points: int, alpha: float) -> float:
    i = curve.currents[-n_high_points:]
    q = curve.capacities[-n_high_points:]
    y = q if alpha == 1.0 else q**alpha * i ** (1.0 - alpha)
    line = _ols(i, y)
    # a drop below rounding level across the window counts as flat
    if not -line.slope * np.ptp(i) > 1e-12 * np.max(np.abs(y)):
        raise ExtrapolationError(
            "extrapolation invalid: capacity does not fall with current "
            f"(slope {line.slope:.6g})"
        )
    i_x = -line.intercept / line.slope
    if not i_x > i.max():
        raise ExtrapolationError(
            f"extrapolation invalid: intercept I_x = {i_x:.6g} A is not beyond "
            f"the highest measured current {i.max():.6g} A"
        )
    return curve.delta_v / (2.0 * i_x)


def fit_rs_intercept(
    curve: CapacityCurve,
    n_high_points: int = 2,
    alpha: float | None = None,
    n_low_points: int = 4,
    max_iter: int = 100,
) -> float:
    """Series resistance from the current-axis intercept of the linear Q(I) plot.

    A straight line through the ``n_high_points`` highest currents meets
    ``Q = 0`` at ``I_x``; the capacity law vanishes at ``I_x = dV / (2 R_s)``.

    The ordinate is ``Q^alpha I^(1 - alpha)``, which the capacity law makes
    exactly linear in ``I`` with the same intercept. ``alpha = 1`` is the plain
    linear-scale rule. With ``alpha=None`` the exponent comes from the
    ``n_low_points`` lowest currents, alternating with the intercept until both
    settle; the plain rule is the starting point.
    """
    if n_high_points < 2 or n_high_points > len(curve):
        raise DomainError(
            f"n_high_points must lie in [2, {len(curve)}], got {n_high_points}"
        )
    if alpha is not None:
        if not 0.0 < alpha <= ALPHA_CEILING:
            raise DomainError(f"alpha must lie in (0, {ALPHA_CEILING}], got {alpha!r}")
        return _intercept_rs(curve, n_high_points, alpha)
    n_low = min(n_low_points, len(curve))
    r_s = _intercept_rs(curve, n_high_points, 1.0)
    for _ in range(max_iter):
        _, fitted = _power_law_fit(curve, n_low, r_s)
        updated = _intercept_rs(curve, n_high_points, fitted)
        converged = abs(updated - r_s) <= 1e-13 * r_s
        r_s = updated
        if converged:
            break
    return r_s


def _power_law_fit(curve: CapacityCurve, n_low_points: int, r_s: float) -> tuple[_Line, float]:
    i = curve.currents[:n_low_points]
    q = curve.capacities[:n_low_points]
    if np.any(q <= 0):
        raise NonPhysicalFitError("non-physical curve: zero capacity in the fit window")
    window = curve.delta_v - 2.0 * i * r_s
    if np.any(window <= 0):
        raise ResistiveWindowExhausted(float(i[window <= 0][0]), r_s, curve.delta_v)
    log_i = np.log(i)
    line = _ols(np.log(window) - log_i, np.log(q) - log_i)
    b = line.slope
    if abs(b - 1.0) <= 1e-12:  # flat curve: an ideal capacitor, not an overshoot
        b = 1.0
        line = dataclasses.replace(line, slope=1.0)
    if not b > 0 or 1.0 / b > ALPHA_CEILING:
        alpha = 1.0 / b if b > 0 else math.inf
        raise NonPhysicalFitError(
            f"non-physical curve: capacity rises with current (alpha = {alpha:.6g})"
        )
    return line, 1.0 / b


def fit_capacity_curve(
    curve: CapacityCurve,
    n_low_points: int = 4,
    r_s: float | None = None,
    n_high_points: int = 2,
    max_iter: int = 100,
) -> FitResult:
    """Fit alpha and c_f to the ``n_low_points`` lowest currents.

    Taking the ``alpha``-th power of the capacity law gives
    ``log Q - log I = a + b (log(dV - 2 I R_s) - log I)`` with ``b = 1/alpha``
    and ``a = log(K) / alpha``, ``K = c_f Gamma(alpha + 1) / (3 - 2^alpha)``.
    This is linear, so ordinary least squares on those coordinates fits the
    full law, series-resistance term included. With ``R_s = 0`` it is the
    plain log-log line whose slope is ``1 - 1/alpha``.

    When ``r_s`` is None it comes from :func:`fit_rs_intercept` on the
    ``n_high_points`` highest currents, with the exponent estimated jointly.
    If no intercept exists (flat curve) ``R_s = 0`` is used, with a warning. Pass ``r_s=0`` for the pure power-law fit.
    """
    if len(curve) < 2:
        raise DomainError("need at least two capacity points")
    if n_low_points < 2 or n_low_points > len(curve):
        raise DomainError(f"n_low_points must lie in [2, {len(curve)}], got {n_low_points}")
    if r_s is None:
        try:
            r_s = fit_rs_intercept(
                curve, min(n_high_points, len(curve)), n_low_points=n_low_points, max_iter=max_iter
            )
        except ExtrapolationError as exc:
            warnings.warn(f"{exc}; using R_s = 0", FitWarning, stacklevel=2)
            r_s = 0.0
    line, alpha = _power_law_fit(curve, n_low_points, r_s)
    b, a = line.slope, line.intercept
    overshoot = _check_alpha(alpha, "capacity curve")

    log_k = a * alpha
    c_f = math.exp(log_k) * (3.0 - 2.0**alpha) / math.gamma(alpha + 1.0)
    # d log c_f / d alpha at fixed K
    dlog_dalpha = -(2.0**alpha) * math.log(2.0) / (3.0 - 2.0**alpha) - float(
        special.digamma(alpha + 1.0)
    )
    grad = np.array([1.0 / b, -a / b**2 + dlog_dalpha * (-1.0 / b**2)])
    var_log_cf = float(grad @ line.cov @ grad)
    alpha_err = math.sqrt(line.cov[1, 1]) / b**2
    return FitResult(
        alpha=alpha,
        alpha_err=alpha_err,
        c_f=c_f,
        c_f_err=c_f * math.sqrt(var_log_cf),
        r_s=float(r_s),
        n_points_used=int(n_low_points),
        residual_rms=line.residual_rms,
        method="capacity",
        overshoot=overshoot,
    )


def fit_impedance_spectrum(
    spectrum: ImpedanceSpectrum,
    n_low_freqs: int = 7,
    n_high_freqs: int = 3,
    subtract_rs: bool = True,
) -> FitResult:
    """Fit the CPE power law at low frequency and R_s at high frequency.

    ``R_s`` is the mean ``|Z|`` of the ``n_high_freqs`` highest frequencies. The
    ``n_low_freqs`` lowest points give ``log|Z'| = -log c_f - alpha log(2 pi f)``
    by ordinary least squares, where ``Z' = Z - R_s`` when ``subtract_rs``.
    """
    n = len(spectrum)
    if n_low_freqs < 2 or n_high_freqs < 1 or n_low_freqs > n or n_high_freqs > n:
        raise DomainError(
            f"spectrum of {n} points is shorter than the requested windows "
            f"({n_low_freqs} low, {n_high_freqs} high)"
        )
    high = np.abs(spectrum.impedances[-n_high_freqs:])
    r_s = float(high.mean())
    if n_high_freqs > 1:
        r_s_err = float(high.std(ddof=1) / math.sqrt(n_high_freqs)) * coverage_factor(
            n_high_freqs - 1
        )
    else:
        r_s_err = math.nan

    f = spectrum.frequencies[:n_low_freqs]
    z = spectrum.impedances[:n_low_freqs]
    if np.min(np.abs(z)) <= 2.0 * r_s:
        raise NonPhysicalFitError(
            "non-physical spectrum: low-frequency |Z| is not CPE-dominated "
            f"(min {np.min(np.abs(z)):.6g} ohm vs R_s {r_s:.6g} ohm)"
        )
    mag = np.abs(z - r_s) if subtract_rs else np.abs(z)
    line = _ols(np.log(f), np.log(mag))
    alpha = -line.slope
    overshoot = _check_alpha(alpha, "spectrum")
    two_pi = math.log(2.0 * math.pi)
    log_cf = -line.intercept + line.slope * two_pi
    grad = np.array([-1.0, two_pi])
    var_log_cf = float(grad @ line.cov @ grad)
    c_f = math.exp(log_cf)
    return FitResult(
        alpha=alpha,
        alpha_err=math.sqrt(line.cov[1, 1]),
        c_f=c_f,
        c_f_err=c_f * math.sqrt(var_log_cf),
        r_s=r_s,
        n_points_used=int(n_low_freqs),
        residual_rms=line.residual_rms,
        method="impedance",
        r_s_err=r_s_err,
        overshoot=overshoot,
    )


@dataclass(frozen=True)
class CrossValidation:
    alpha_diff: float
    alpha_sigma: float
    r_s_rel_diff: float
    c_f_ratio: float

    @property
    def alpha_z(self) -> float:
        """alpha difference in units of the combined standard uncertainty."""
        if self.alpha_diff == 0.0:
            return 0.0
        if not self.alpha_sigma > 0:
            return math.inf
        return abs(self.alpha_diff) / self.alpha_sigma

    def alpha_agrees(self, n_sigma: float = 1.0) -> bool:
        return self.alpha_z <= n_sigma


def cross_validate(cap_fit: FitResult, imp_fit: FitResult) -> CrossValidation:
    """Compare a capacity-route fit with an impedance-route fit.

    ``c_f_ratio`` is capacity-derived over impedance-derived; ``r_s_rel_diff``
    is relative to the impedance value.
    """
    errs = [e for e in (cap_fit.alpha_err, imp_fit.alpha_err) if math.isfinite(e)]
    sigma = math.sqrt(sum(e * e for e in errs)) if errs else math.nan
    r_ref = imp_fit.r_s
    r_rel = (cap_fit.r_s - r_ref) / r_ref if r_ref > 0 else (
        0.0 if cap_fit.r_s == r_ref else math.inf
    )
    return CrossValidation(
        alpha_diff=cap_fit.alpha - imp_fit.alpha,
        alpha_sigma=sigma,
        r_s_rel_diff=r_rel,
        c_f_ratio=cap_fit.c_f / imp_fit.c_f,
    )


def format_uncertainty(value: float, err: float, digits: int = 2) -> str:
    """Compact notation, e.g. ``format_uncertainty(0.97113, 0.0017) == '0.9711(17)'``."""
    if not (math.isfinite(err) and err > 0):
        return f"{value:.6g}"
    exponent = math.floor(math.log10(err)) - (digits - 1)
    err_digits = round(err / 10.0**exponent)
    if err_digits >= 10**digits:  # rounding carried into a new digit
        exponent += 1
        err_digits = round(err / 10.0**exponent)
    if exponent >= 0:
        return f"{round(value / 10.0**exponent) * 10**exponent:.0f}({err_digits * 10**exponent:.0f})"
    return f"{value:.{-exponent}f}({err_digits})"


def synthetic_capacity_curve(
    model: CircuitModel, currents: Sequence[float], v_h: float, v_l: float
) -> CapacityCurve:
    """Noise-free curve from the closed-form capacity law."""
    pts = [analytic_capacity(model, CycleProtocol(i, v_h, v_l)) for i in currents]
    return CapacityCurve.from_points(pts, v_h - v_l)


def synthetic_spectrum(model: CircuitModel, frequencies) -> ImpedanceSpectrum:
    f = np.asarray(frequencies, dtype=float)
    return ImpedanceSpectrum(f, model_impedance(model, f))
