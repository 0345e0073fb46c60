import numpy as np
import pytest

from fraccap.errors import DataFormatError, DomainError
from fraccap.fitting import fit_capacity_curve
from fraccap.ingest import (
    IngestWarning,
    InstrumentLog,
    ingest_log,
    read_generic_log,
    read_log,
    segment_log,
)
from fraccap.tables import write_csv


def log_from_sweep(sweep):
    t = np.concatenate([run.trace_t for run in sweep.runs])
    v = np.concatenate([run.trace_v for run in sweep.runs])
    i = np.concatenate([run.trace_i for run in sweep.runs])
    return t, v, i


@pytest.fixture(scope="module")
def sweep_log(nca_sweep):
    return InstrumentLog.from_columns(*log_from_sweep(nca_sweep))


def test_closed_loop_through_simulator(nca_sweep, sweep_log):
    curve = ingest_log(sweep_log, 4.30, 3.00)
    np.testing.assert_array_equal(curve.currents, nca_sweep.curve.currents)
    np.testing.assert_allclose(curve.capacities, nca_sweep.curve.capacities, rtol=1e-3)
    assert curve.delta_v == pytest.approx(1.3)


def test_ingest_then_fit_recovers_alpha(sweep_log):
    fit = fit_capacity_curve(ingest_log(sweep_log, 4.30, 3.00), 4)
    assert fit.alpha == pytest.approx(0.9711, abs=0.005)


def test_truncated_final_discharge_is_dropped(nca_sweep):
    t, v, i = log_from_sweep(nca_sweep)
    last = nca_sweep.runs[-1].half_cycles[-2]  # final discharge at the last current
    keep = t < last.t_start + 0.5 * last.duration
    log = InstrumentLog.from_columns(t[keep], v[keep], i[keep])
    with pytest.warns(IngestWarning, match="incomplete"):
        curve = ingest_log(log, 4.30, 3.00)
    dropped = nca_sweep.runs[-1].protocol.i0
    assert dropped not in curve.currents
    expected = nca_sweep.curve.capacities[nca_sweep.curve.currents != dropped]
    np.testing.assert_allclose(curve.capacities, expected, rtol=1e-3)


def test_idle_log_gives_empty_curve():
    t = np.arange(0.0, 1000.0, 10.0)
    log = InstrumentLog.from_columns(t, np.full(t.size, 3.7), np.zeros(t.size))
    with pytest.warns(IngestWarning, match="no complete discharge"):
        curve = ingest_log(log, 4.30, 3.00)
    assert len(curve) == 0


def test_trapezoidal_charge_over_timestamps():
    # rest, then an uneven-sampled 2 A discharge reaching v_l, then rest
    t = np.array([0.0, 1.0, 2.0, 3.5, 7.0, 8.0, 9.0])
    v = np.array([4.3, 4.2, 3.8, 3.4, 3.0, 3.2, 3.2])
    i = np.array([0.0, -2.0, -2.0, -2.0, -2.0, 0.0, 0.0])
    curve = ingest_log(InstrumentLog(t, v, i), 4.30, 3.00)
    np.testing.assert_allclose(curve.capacities, [2.0 * 6.0])


def test_segmentation_threshold():
    t = np.arange(6.0)
    i = np.array([-1.0, -1.0, -1.0, -0.95, -0.95, -0.95])
    log = InstrumentLog(t, np.full(6, 3.5), i)
    assert len(segment_log(log, threshold=0.10)) == 1
    assert len(segment_log(log, threshold=0.01)) == 2
    assert [s.kind for s in segment_log(InstrumentLog(t, t, np.array([0, 1, 1, 0, -1, -1.0])))] == [
        "rest",
        "charge",
        "rest",
        "discharge",
    ]


def test_gaps_are_flagged_not_filled():
    t = np.concatenate([np.arange(0.0, 100.0), np.arange(500.0, 600.0)])
    with pytest.warns(IngestWarning, match="sampling gap"):
        log = InstrumentLog.from_columns(t, np.full(t.size, 3.5), np.zeros(t.size))
    assert log.gaps == (100,)
    assert log.t.size == 200


def test_stride_change_is_not_a_gap():
    t = np.concatenate([np.arange(0.0, 100.0), 100.0 + 4.0 * np.arange(100)])
    log = InstrumentLog.from_columns(t, np.zeros(t.size), np.zeros(t.size))
    assert log.gaps == ()


def test_decreasing_timestamps_are_rejected(tmp_path):
    with pytest.raises(DomainError, match="row 2"):
        InstrumentLog(np.array([0.0, 2.0, 1.0]), np.zeros(3), np.zeros(3))
    path = tmp_path / "log.csv"
    write_csv(path, ("t_s", "v_V", "i_A"), [(0.0, 4.0, 0.0), (2.0, 4.0, 0.0), (1.0, 4.0, 0.0)])
    with pytest.raises(DataFormatError, match="decrease"):
        read_generic_log(path)


def test_reader_registry(tmp_path):
    path = tmp_path / "log.csv"
    write_csv(path, ("t_s", "v_V", "i_A"), [(0.0, 4.0, 0.0), (1.0, 4.0, -1.0)])
    assert read_log(path).t.size == 2
    with pytest.raises(DomainError, match="unknown log format"):
        read_log(path, "vendor-x")


def test_bad_window():
    log = InstrumentLog(np.arange(2.0), np.zeros(2), np.zeros(2))
    with pytest.raises(DomainError):
        ingest_log(log, 3.0, 4.3)
