"""Seeded Monte Carlo checks of the fit uncertainties."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fitting import (
    CapacityCurve,
    ImpedanceSpectrum,
    fit_capacity_curve,
    fit_impedance_spectrum,
    synthetic_capacity_curve,
    synthetic_spectrum,
)
from .fractional import CircuitModel


@dataclass(frozen=True)
class Coverage:
    """Fraction of trials whose +/-1 sigma interval held the true value."""

    trials: int
    alpha: float
    c_f: float
    r_s: float | None = None


def _within(value, err, truth):
    return abs(value - truth) <= err


def capacity_coverage(
    model: CircuitModel,
    currents: Sequence[float],
    v_h: float,
    v_l: float,
    *,
    n_low_points: int = 4,
    noise: float = 0.01,
    trials: int = 200,
    seed: int = 0,
    known_r_s: bool = True,
) -> Coverage:
    """Multiplicative Gaussian noise on every capacity, then refit.

    With ``known_r_s`` the true series resistance is passed to the fit so the
    check isolates the power-law uncertainties.
    """
    rng = np.random.default_rng(seed)
    clean = synthetic_capacity_curve(model, currents, v_h, v_l)
    hits_a = hits_c = 0
    for _ in range(trials):
        q = clean.capacities * (1.0 + noise * rng.standard_normal(len(clean)))
        fit = fit_capacity_curve(
            CapacityCurve(clean.currents, q, clean.delta_v),
            n_low_points,
            r_s=model.r_s if known_r_s else None,
        )
        hits_a += _within(fit.alpha, fit.alpha_err, model.cpe.alpha)
        hits_c += _within(fit.c_f, fit.c_f_err, model.cpe.c_f)
    return Coverage(trials, hits_a / trials, hits_c / trials)


def impedance_coverage(
    model: CircuitModel,
    frequencies: Sequence[float],
    *,
    n_low_freqs: int = 7,
    n_high_freqs: int = 3,
    noise: float = 0.01,
    trials: int = 200,
    seed: int = 0,
) -> Coverage:
    """Multiplicative Gaussian noise on every impedance magnitude, then refit."""
    rng = np.random.default_rng(seed)
    clean = synthetic_spectrum(model, frequencies)
    hits_a = hits_c = hits_r = 0
    for _ in range(trials):
        z = clean.impedances * (1.0 + noise * rng.standard_normal(len(clean)))
        fit = fit_impedance_spectrum(
            ImpedanceSpectrum(clean.frequencies, z), n_low_freqs, n_high_freqs
        )
        hits_a += _within(fit.alpha, fit.alpha_err, model.cpe.alpha)
        hits_c += _within(fit.c_f, fit.c_f_err, model.cpe.c_f)
        hits_r += _within(fit.r_s, fit.r_s_err, model.r_s)
    return Coverage(trials, hits_a / trials, hits_c / trials, hits_r / trials)
