"""Regenerate the two reference fixtures in tests/fixtures/.

Both are reconstructions of a measured NCA cell (not digitized raw data): the
closed-form model evaluated at the reference parameters, with a deterministic
residual pattern added to the points that enter each fit. The pattern is
orthogonal to the fit's design matrix, so the fitted values equal the
reference parameters exactly while the reported 1-sigma uncertainties take
the reference values below.

    python scripts/make_reference_fixtures.py [output_dir]
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from fraccap.config import REFERENCE_FREQUENCIES, REFERENCE_LADDER
from fraccap.fitting import (
    CapacityCurve,
    ImpedanceSpectrum,
    fit_capacity_curve,
    fit_impedance_spectrum,
    synthetic_capacity_curve,
)
from fraccap.fractional import CircuitModel, cpe_impedance
from fraccap.tables import write_capacity_curve, write_spectrum

CAPACITY_MODEL = CircuitModel.from_values(0.9711, 9203.0, 0.0631)
CAPACITY_ALPHA_ERR = 0.0017
V_H, V_L = 4.30, 3.00
N_LOW = 4

IMPEDANCE_MODEL = CircuitModel.from_values(0.976, 1.54e4, 0.057)
IMPEDANCE_ALPHA_ERR = 0.008
N_LOW_FREQS = 7


def orthogonal_pattern(x: np.ndarray) -> np.ndarray:
    """Unit vector orthogonal to [1, x], taken from the alternating sign pattern."""
    design = np.column_stack([np.ones_like(x), x])
    k = np.arange(x.size)
    raw = (-1.0) ** k * (1.0 + 0.3 * (k % 2))
    q, _ = np.linalg.qr(design)
    resid = raw - q @ (q.T @ raw)
    return resid / np.linalg.norm(resid)


def capacity_fixture() -> CapacityCurve:
    clean = synthetic_capacity_curve(CAPACITY_MODEL, sorted(REFERENCE_LADDER), V_H, V_L)
    i = clean.currents[:N_LOW]
    dv = clean.delta_v - 2.0 * i * CAPACITY_MODEL.r_s
    pattern = orthogonal_pattern(np.log(dv) - np.log(i))

    def build(scale: float) -> CapacityCurve:
        # the fit regresses log Q, so a multiplicative pattern is a residual
        q = clean.capacities.copy()
        q[:N_LOW] *= np.exp(scale * pattern / CAPACITY_MODEL.cpe.alpha)
        return CapacityCurve(clean.currents, q, clean.delta_v)

    unit = fit_capacity_curve(build(1e-3), N_LOW)
    return build(1e-3 * CAPACITY_ALPHA_ERR / unit.alpha_err)


def impedance_fixture() -> ImpedanceSpectrum:
    f = np.asarray(REFERENCE_FREQUENCIES)
    z_cpe = cpe_impedance(IMPEDANCE_MODEL.cpe, f)
    pattern = orthogonal_pattern(np.log(f[:N_LOW_FREQS]))

    def build(scale: float) -> ImpedanceSpectrum:
        factor = np.ones(f.size)
        factor[:N_LOW_FREQS] = np.exp(scale * pattern)
        return ImpedanceSpectrum(f, IMPEDANCE_MODEL.r_s + z_cpe * factor)

    unit = fit_impedance_spectrum(build(1e-3), N_LOW_FREQS)
    return build(1e-3 * IMPEDANCE_ALPHA_ERR / unit.alpha_err)


def main(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    curve = capacity_fixture()
    spectrum = impedance_fixture()
    write_capacity_curve(curve, out_dir / "capacity_reference.csv")
    write_spectrum(spectrum, out_dir / "impedance_reference.csv")
    cap = fit_capacity_curve(curve, N_LOW)
    imp = fit_impedance_spectrum(spectrum, N_LOW_FREQS)
    print(f"capacity:  alpha={cap.alpha:.6f}({cap.alpha_err:.4f}) c_f={cap.c_f:.1f} r_s={cap.r_s:.5f}")
    print(f"impedance: alpha={imp.alpha:.6f}({imp.alpha_err:.4f}) c_f={imp.c_f:.1f} r_s={imp.r_s:.5f}")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parents[1] / "tests" / "fixtures")
