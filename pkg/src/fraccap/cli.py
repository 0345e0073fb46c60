"""``fraccap`` command line: synthesize, cycle, fit, ingest, report, montecarlo.

Exit codes: 0 success, 2 usage/config/input error, 3 numerical or model error.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import click
import numpy as np

from .config import REFERENCE_FREQUENCIES, ConfigError, ExperimentConfig, load_config
from .errors import DataFormatError, DomainError, FraccapError, InsufficientBranchesError
from .fitting import cross_validate, fit_capacity_curve, fit_impedance_spectrum
from .fractional import CpeParams, model_impedance
from .ingest import LOG_READERS, ingest_log, read_log
from .montecarlo import capacity_coverage, impedance_coverage
from .morrison import (
    DEFAULT_BAND,
    approximation_report,
    format_network,
    network_impedance,
    read_network,
    simulation_band,
    synthesize,
)
from .simulator import capacity_sweep
from . import tables

EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UsageFailure(click.ClickException):
    exit_code = EXIT_USAGE


class NumericalFailure(click.ClickException):
    exit_code = EXIT_NUMERICAL


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (ConfigError, DataFormatError, DomainError) as exc:
            raise UsageFailure(str(exc)) from None
        except InsufficientBranchesError as exc:
            raise NumericalFailure(f"{exc} (hint: use --n-half {exc.minimum})") from None
        except FraccapError as exc:
            raise NumericalFailure(str(exc)) from None


def _config(config_path, **overrides) -> ExperimentConfig:
    return load_config(config_path, **overrides).validate()


def _write_all(outputs: dict[Path, str]) -> None:
    """Write prepared file contents; nothing is written until all are ready."""
    for path, text in outputs.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")


config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False),
    help="YAML experiment config; flags override its values.",
)
model_options = [
    click.option("--alpha", type=float, help="CPE exponent in (0, 1]."),
    click.option("--c-f", "c_f", type=float, help="Fractional capacitance, A s^alpha / V."),
]


def _apply(options):
    def decorate(f):
        for option in reversed(options):
            f = option(f)
        return f
    return decorate


@click.group(cls=_Group)
def main():
    """Fractional (CPE-R) battery capacity modelling."""


@main.command("synthesize")
@config_option
@_apply(model_options)
@click.option("--n-half", type=int, help="Branch half-count N (2N+1 branches).")
@click.option("--k-f", "k_f", type=float, help="Time-constant ratio between branches.")
@click.option("--f-min", type=float, help="Designed band lower edge, Hz.")
@click.option("--f-max", type=float, help="Designed band upper edge, Hz.")
@click.option("--dt", type=float, help="Place the ladder for this Euler step instead of a band.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Network file to write.")
def synthesize_cmd(config_path, alpha, c_f, n_half, k_f, f_min, f_max, dt, out):
    """Synthesize a Morrison ladder and write its table."""
    cfg = _config(config_path, alpha=alpha, c_f=c_f, n_half=n_half, k_f=k_f,
                  f_min=f_min, f_max=f_max, dt=dt)
    if cfg.band is not None:
        band = cfg.band
    elif cfg.dt is not None:
        band = simulation_band(cfg.spec, cfg.dt)
    else:
        band = DEFAULT_BAND
    net = synthesize(cfg.spec, band)
    _write_all({Path(out): format_network(net)})
    report = approximation_report(net, band)
    click.echo(f"branches = {net.resistances.size}")
    click.echo(f"r_0_ohm = {net.r_0:.6g}")
    click.echo(f"c_0_F = {net.c_0:.6g}")
    click.echo(f"c_t_F = {net.c_t:.6g}")
    click.echo(f"tau_min_s = {net.tau_min:.6g}")
    click.echo(f"band_Hz = {band[0]:.6g}..{band[1]:.6g}")
    click.echo(f"max_mag_err_pct = {report.max_mag_err_pct:.3g}")
    click.echo(f"max_phase_err_deg = {report.max_phase_err_deg:.3g}")


@main.command("cycle")
@config_option
@_apply(model_options)
@click.option("--r-s", "r_s", type=float, help="Series resistance, ohm.")
@click.option("--network", type=click.Path(dir_okay=False), help="Network file from 'synthesize'.")
@click.option("--v-h", type=float, help="Upper voltage limit, V.")
@click.option("--v-l", type=float, help="Lower voltage limit, V.")
@click.option("--current", "currents", type=float, multiple=True, help="Ladder current, A (repeatable, run in order).")
@click.option("--n-cycles", type=int, help="Cycles per current; capacity from the last discharge.")
@click.option("--dt", type=float, help="Euler step, s.")
@click.option("--output-dir", type=click.Path(file_okay=False), help="Directory for CSV output.")
def cycle_cmd(config_path, alpha, c_f, r_s, network, v_h, v_l, currents, n_cycles, dt, output_dir):
    """Simulate constant-current cycling over a current ladder."""
    cfg = _config(config_path, alpha=alpha, c_f=c_f, r_s=r_s, network=network,
                  v_h=v_h, v_l=v_l, currents=list(currents) if currents else None,
                  n_cycles=n_cycles, dt=dt, output_dir=output_dir)
    net = cfg.resolve_network()
    sweep = capacity_sweep(
        net, cfg.r_s, cfg.protocol(), cfg.currents, cfg.n_cycles, cfg.dt,
        carry_history=cfg.carry_history,
    )
    out = Path(cfg.output_dir)
    files = {
        out / f"trace_{run.protocol.i0:g}A.csv": tables.render_csv(
            tables.TRACE_COLUMNS, zip(run.trace_t, run.trace_v, run.trace_i)
        )
        for run in sweep.runs
    }
    files[out / "capacity.csv"] = tables.render_csv(
        tables.CAPACITY_COLUMNS, tables.capacity_rows(sweep.curve)
    )
    _write_all(files)
    for run in sweep.runs:
        click.echo(f"I0 = {run.protocol.i0:g} A  Q = {run.capacity.capacity:.6g} A s "
                   f"({run.capacity.capacity_ah:.4g} A h)")
    click.echo(f"wrote {len(files)} files to {out}")


@main.command("fit")
@click.option("--capacity", "capacity_csv", type=click.Path(exists=True, dir_okay=False),
              help="Capacity curve CSV (i_A,q_As).")
@click.option("--impedance", "impedance_csv", type=click.Path(exists=True, dir_okay=False),
              help="Impedance spectrum CSV (f_Hz,re_ohm,im_ohm).")
@click.option("--delta-v", type=float, default=1.3, show_default=True, help="Voltage window of the capacity curve, V.")
@click.option("--n-low", type=int, default=4, show_default=True, help="Lowest currents in the capacity fit.")
@click.option("--n-high", type=int, default=2, show_default=True, help="Highest currents for the R_s intercept.")
@click.option("--r-s", "r_s", type=float, help="Use this R_s instead of the intercept estimate.")
@click.option("--n-low-freqs", type=int, default=7, show_default=True, help="Lowest frequencies in the CPE fit.")
@click.option("--n-high-freqs", type=int, default=3, show_default=True, help="Highest frequencies averaged for R_s.")
@click.option("--output-dir", type=click.Path(file_okay=False), help="Also write fit_report.txt and fit_results.csv here.")
def fit_cmd(capacity_csv, impedance_csv, delta_v, n_low, n_high, r_s, n_low_freqs, n_high_freqs, output_dir):
    """Extract alpha, c_f and R_s; cross-validate when both inputs are given."""
    if capacity_csv is None and impedance_csv is None:
        raise UsageFailure("give --capacity and/or --impedance")
    fits = []
    blocks = []
    if capacity_csv is not None:
        curve = tables.read_capacity_curve(capacity_csv, delta_v)
        cap = fit_capacity_curve(curve, n_low, r_s=r_s, n_high_points=n_high)
        fits.append(cap)
        blocks.append(tables.fit_block(cap, "capacity."))
    if impedance_csv is not None:
        spectrum = tables.read_spectrum(impedance_csv)
        imp = fit_impedance_spectrum(spectrum, n_low_freqs, n_high_freqs)
        fits.append(imp)
        blocks.append(tables.fit_block(imp, "impedance."))
    if len(fits) == 2:
        blocks.append(tables.cross_validation_block(cross_validate(*fits)))
    text = "\n".join(blocks) + "\n"
    click.echo(text, nl=False)
    if output_dir is not None:
        out = Path(output_dir)
        _write_all({
            out / "fit_report.txt": text,
            out / "fit_results.csv": tables.render_csv(
                tables.FIT_COLUMNS, [tables.fit_row(f) for f in fits]
            ),
        })


@main.command("ingest")
@click.argument("log_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--v-h", type=float, default=4.30, show_default=True)
@click.option("--v-l", type=float, default=3.00, show_default=True)
@click.option("--format", "fmt", type=click.Choice(sorted(LOG_READERS)), default="generic", show_default=True)
@click.option("--threshold", type=float, default=0.10, show_default=True,
              help="Relative current change that starts a new segment.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Capacity CSV to write.")
def ingest_cmd(log_file, v_h, v_l, fmt, threshold, out):
    """Extract final-discharge capacities from an instrument log."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        log = read_log(log_file, fmt)
        curve = ingest_log(log, v_h, v_l, threshold=threshold)
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
    _write_all({Path(out): tables.render_csv(tables.CAPACITY_COLUMNS, tables.capacity_rows(curve))})
    click.echo(f"{len(curve)} capacity point(s) written to {out}")


@main.command("report")
@config_option
@_apply(model_options)
@click.option("--r-s", "r_s", type=float, help="Series resistance, ohm.")
@click.option("--network", type=click.Path(exists=True, dir_okay=False),
              help="Report this network (plus R_s) instead of the analytic model.")
@click.option("--f-min", type=float, default=5e-7, show_default=True)
@click.option("--f-max", type=float, default=2.0, show_default=True)
@click.option("--points", type=int, default=50, show_default=True)
@click.option("--output-dir", type=click.Path(file_okay=False), help="Directory for the three tables.")
def report_cmd(config_path, alpha, c_f, r_s, network, f_min, f_max, points, output_dir):
    """Bode magnitude, Bode phase and Nyquist tables."""
    cfg = _config(config_path, alpha=alpha, c_f=c_f, r_s=r_s, output_dir=output_dir)
    if not 0 < f_min < f_max or points < 2:
        raise UsageFailure("need 0 < f_min < f_max and points >= 2")
    f = np.geomspace(f_min, f_max, points)
    if network is not None:
        z = cfg.r_s + network_impedance(read_network(network), f)
    else:
        z = model_impedance(cfg.model, f)
    out = Path(cfg.output_dir)
    _write_all({
        out / "bode_magnitude.csv": tables.render_csv(("f_Hz", "abs_z_ohm"), zip(f, np.abs(z))),
        out / "bode_phase.csv": tables.render_csv(("f_Hz", "phase_deg"), zip(f, np.degrees(np.angle(z)))),
        out / "nyquist.csv": tables.render_csv(("f_Hz", "re_ohm", "im_ohm"), zip(f, z.real, z.imag)),
    })
    click.echo(f"wrote bode_magnitude.csv, bode_phase.csv, nyquist.csv to {out}")


@main.command("montecarlo")
@config_option
@click.option("--trials", type=int, default=200, show_default=True)
@click.option("--noise", type=float, default=0.01, show_default=True, help="Relative Gaussian noise.")
@click.option("--seed", type=int, help="RNG seed (default from config, else 0).")
def montecarlo_cmd(config_path, trials, noise, seed):
    """Coverage of the reported 1-sigma intervals on noisy synthetic data."""
    cfg = _config(config_path, seed=seed)
    if trials < 1 or not noise > 0:
        raise UsageFailure("need trials >= 1 and noise > 0")
    cap = capacity_coverage(cfg.model, cfg.currents, cfg.v_h, cfg.v_l,
                            noise=noise, trials=trials, seed=cfg.seed)
    imp = impedance_coverage(cfg.model, REFERENCE_FREQUENCIES,
                             noise=noise, trials=trials, seed=cfg.seed)
    click.echo(f"capacity.alpha_coverage = {cap.alpha:.3f}")
    click.echo(f"capacity.c_f_coverage = {cap.c_f:.3f}")
    click.echo(f"impedance.alpha_coverage = {imp.alpha:.3f}")
    click.echo(f"impedance.c_f_coverage = {imp.c_f:.3f}")
    click.echo(f"impedance.r_s_coverage = {imp.r_s:.3f}")


if __name__ == "__main__":
    main()
