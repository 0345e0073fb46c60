import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from fraccap.config import REFERENCE_LADDER
from fraccap.errors import DomainError, ResistiveWindowExhausted, UnstableTimeStepError
from fraccap.fitting import fit_capacity_curve
from fraccap.fractional import CpeParams, CycleProtocol, StepCurrentProfile, analytic_capacity, rl_voltage
from fraccap.morrison import MorrisonNetwork, MorrisonSpec, simulation_band, synthesize
from fraccap.simulator import SimState, capacity_sweep, ideal_capacity, run_cycles, step

from conftest import NCA_MODEL, NCA_PROTOCOL


def two_state_voltage(r, c, c_t, current, t):
    """Closed-form terminal voltage of C_t in parallel with one series RC, relaxed at 0."""
    tau_s = r * c * c_t / (c + c_t)
    gap = current * tau_s / c_t * (1.0 - np.exp(-t / tau_s))  # v_ct - v_branch
    return (current * t + c * gap) / (c + c_t)


def ladder_for(alpha, dt=1.0):
    spec = MorrisonSpec(CpeParams(alpha, 9203.0), 30, 1.4)
    return synthesize(spec, simulation_band(spec, dt))


def exact_cycle_charges(cpe, i0, v_h, v_l, n_cycles):
    """Voltage-limited cycling of the exact CPE (no resistor) by root finding."""
    segments, t, charges = [], 0.0, []
    for _ in range(n_cycles):
        for current, limit in ((-i0, v_l), (i0, v_h)):
            segments.append((t, current))
            profile = StepCurrentProfile(segments)

            def gap(x, profile=profile, limit=limit):
                return v_h + rl_voltage(cpe, profile, x) - limit

            lo, hi = t + 1e-9, t + 1.0
            while np.sign(gap(hi)) == np.sign(gap(lo)):
                hi = t + 2.0 * (hi - t)
            crossing = brentq(gap, lo, hi, xtol=1e-9, rtol=1e-14)
            charges.append(i0 * (crossing - t))
            t = crossing
    return np.array(charges)


# --- step -------------------------------------------------------------------


def test_equilibrium_is_a_fixed_point(nca_net):
    state = SimState.relaxed(nca_net, 3.7)
    after = step(nca_net, state, 0.0, 1.0)
    np.testing.assert_array_equal(after.v_branch, state.v_branch)
    assert after.v_ct == state.v_ct
    assert after.t == 1.0


def test_step_rejects_unstable_dt(nca_net):
    state = SimState.relaxed(nca_net)
    with pytest.raises(UnstableTimeStepError, match="unstable time step"):
        step(nca_net, state, 1.0, 0.51 * nca_net.tau_min)
    with pytest.raises(DomainError):
        step(nca_net, state, 1.0, 0.0)
    step(nca_net, state, 1.0, 0.5 * nca_net.tau_min)


def test_single_branch_matches_two_state_solution():
    r, c, c_t, current = 2.0, 3.0, 1.5, 0.7
    net = MorrisonNetwork(np.array([r]), np.array([c]), c_t, CpeParams(0.9, 1.0))
    tau = r * c * c_t / (c + c_t)
    dt = 0.005 * tau
    state = SimState.relaxed(net)
    n = int(round(10 * tau / dt))
    for _ in range(n):
        state = step(net, state, current, dt)
    expected = two_state_voltage(r, c, c_t, current, state.t)
    assert state.v_ct == pytest.approx(expected, rel=1e-3)


def test_ladder_ramp_follows_fractional_voltage(nca_net):
    checkpoints = {100, 1_000, 10_000, 100_000}
    state = SimState.relaxed(nca_net)
    got = {}
    for k in range(1, 100_001):
        state = step(nca_net, state, 1.0, 1.0)
        if k in checkpoints:
            got[k] = state.v_ct
    t = np.array(sorted(got), dtype=float)
    expected = rl_voltage(nca_net.target, StepCurrentProfile([(0.0, 1.0)]), t)
    np.testing.assert_allclose([got[k] for k in sorted(got)], expected, rtol=0.01)
    assert abs(state.charge_imbalance(nca_net, SimState.relaxed(nca_net))) < 1e-3 * state.accumulated_charge


@given(st.lists(st.floats(-5.0, 5.0), min_size=1, max_size=30))
@settings(max_examples=30)
def test_step_conserves_charge_and_dissipates(currents):
    net = MorrisonNetwork(np.array([1.0, 3.0, 9.0]), np.array([2.0, 2.5, 3.0]), 1.0, CpeParams(0.9, 1.0))
    start = SimState.relaxed(net, 1.2)
    state = start
    throughput = 0.0
    for i in currents:
        before = state.dissipated_energy
        state = step(net, state, i, 0.5)
        throughput += abs(i) * 0.5
        assert state.dissipated_energy >= before
        assert np.all(np.isfinite(state.v_branch))
    assert abs(state.charge_imbalance(net, start)) <= 1e-12 * max(1.0, throughput)


# --- run_cycles ---------------------------------------------------------------


def test_ideal_capacitor_capacity_is_rate_independent():
    # a branch with negligible capacitance leaves C_t as a pure capacitor
    net = MorrisonNetwork(np.array([1e300]), np.array([1e-300]), 50.0, CpeParams(1.0, 50.0))
    for i0 in (0.1, 1.0, 7.0):
        protocol = CycleProtocol(i0, 4.3, 3.0)
        result = run_cycles(net, 0.0, protocol, dt=0.1)
        assert result.capacity.capacity == pytest.approx(50.0 * 1.3, rel=1e-9)
        assert ideal_capacity(net, protocol) == pytest.approx(50.0 * 1.3)


def test_cycle_result_contract(nca_net):
    result = run_cycles(nca_net, NCA_MODEL.r_s, NCA_PROTOCOL)
    assert result.capacity.current == NCA_PROTOCOL.i0
    assert result.n_cycles_run == 2
    assert [h.kind for h in result.half_cycles] == ["discharge", "charge"] * 2
    assert result.capacity.capacity == result.discharges[-1].charge
    eps = 1e-9
    assert result.trace_v.min() >= NCA_PROTOCOL.v_l - eps
    assert result.trace_v.max() <= NCA_PROTOCOL.v_h + eps
    assert np.all(np.diff(result.trace_t) >= 0)
    assert result.trace_t.size <= 2 * 20_000
    assert result.max_charge_imbalance < 1e-3
    assert result.resistor_energy >= 0


def test_trace_is_uniform_within_each_half_cycle(nca_net):
    result = run_cycles(nca_net, NCA_MODEL.r_s, CycleProtocol(0.1, 4.3, 3.0))
    for half in result.half_cycles:
        inside = (result.trace_t > half.t_start) & (result.trace_t < half.t_start + half.duration)
        gaps = np.diff(result.trace_t[inside])
        assert np.ptp(gaps) < 1e-6 * gaps.mean()


def test_voltage_ramps_are_monotone_and_loop_grows_with_current(nca_net):
    energies = {}
    for i0 in (0.1, 1.0):
        result = run_cycles(nca_net, NCA_MODEL.r_s, CycleProtocol(i0, 4.3, 3.0))
        for half in result.half_cycles:
            inside = (result.trace_t >= half.t_start) & (result.trace_i == half.current)
            inside &= result.trace_t <= half.t_start + half.duration
            dv = np.diff(result.trace_v[inside])
            assert np.all(dv <= 1e-12) if half.kind == "discharge" else np.all(dv >= -1e-12)
        last = result.trace_t >= result.half_cycles[-2].t_start
        # loop area of the final cycle in the (charge, voltage) plane: net energy absorbed
        energies[i0] = np.trapezoid(result.trace_v[last] * result.trace_i[last], result.trace_t[last])
    assert 0 < energies[0.1] < energies[1.0]


@pytest.mark.parametrize("alpha,tol", [(0.9, 0.005), (0.9711, 0.001)])
def test_cycles_match_exact_fractional_element(alpha, tol):
    net = ladder_for(alpha)
    result = run_cycles(net, 0.0, CycleProtocol(1.0, 4.3, 3.0), n_cycles=3)
    simulated = np.array([h.charge for h in result.half_cycles])
    exact = exact_cycle_charges(net.target, 1.0, 4.3, 3.0, 3)
    np.testing.assert_allclose(simulated, exact, rtol=tol)


@pytest.mark.parametrize("alpha", [0.9, 0.95, 0.9711])
def test_reciprocity_after_memory_transient(alpha):
    net = ladder_for(alpha)
    result = run_cycles(net, 0.0, CycleProtocol(1.0, 4.3, 3.0), n_cycles=10)
    assert result.charges[-1].charge == pytest.approx(result.discharges[-1].charge, rel=0.01)


def test_dt_halving_converges(nca_net):
    coarse = run_cycles(nca_net, NCA_MODEL.r_s, NCA_PROTOCOL, dt=1.0).capacity.capacity
    fine = run_cycles(nca_net, NCA_MODEL.r_s, NCA_PROTOCOL, dt=0.5).capacity.capacity
    assert abs(coarse / fine - 1) < 0.002


def test_run_cycles_errors(nca_net):
    with pytest.raises(ResistiveWindowExhausted):
        run_cycles(nca_net, 0.2, CycleProtocol(5.0, 4.3, 3.0))
    with pytest.raises(DomainError):
        run_cycles(nca_net, 0.0631, NCA_PROTOCOL, v_init=4.5)
    with pytest.raises(DomainError):
        run_cycles(nca_net, 0.0631, NCA_PROTOCOL, n_cycles=0)
    with pytest.raises(UnstableTimeStepError):
        run_cycles(nca_net, 0.0631, NCA_PROTOCOL, dt=3.0)


def test_start_at_lower_limit_discharges_immediately(nca_net):
    result = run_cycles(nca_net, 0.0, NCA_PROTOCOL, v_init=3.0, n_cycles=1)
    assert result.half_cycles[0].duration == 0.0
    assert result.half_cycles[1].duration > 0.0


# --- capacity_sweep -------------------------------------------------------------


def test_single_current_sweep_equals_run_cycles(nca_net):
    sweep = capacity_sweep(nca_net, NCA_MODEL.r_s, NCA_PROTOCOL, [1.0])
    single = run_cycles(nca_net, NCA_MODEL.r_s, NCA_PROTOCOL)
    assert sweep.curve.capacities[0] == single.capacity.capacity
    np.testing.assert_array_equal(sweep.runs[0].trace_v, single.trace_v)


def test_sweep_validates_currents_up_front(nca_net):
    with pytest.raises(DomainError):
        capacity_sweep(nca_net, NCA_MODEL.r_s, NCA_PROTOCOL, [])
    with pytest.raises(DomainError):
        capacity_sweep(nca_net, NCA_MODEL.r_s, NCA_PROTOCOL, [1.0, -1.0])
    with pytest.raises(ResistiveWindowExhausted):
        capacity_sweep(nca_net, NCA_MODEL.r_s, NCA_PROTOCOL, [1.0, 20.0])


def test_sweep_monotone_and_conserving(nca_sweep):
    curve = nca_sweep.curve
    assert np.all(np.diff(curve.capacities) < 0)  # sorted by current
    assert nca_sweep.max_charge_imbalance < 1e-3
    assert all(run.resistor_energy >= 0 for run in nca_sweep.runs)


def test_sweep_low_current_slope(nca_sweep):
    fit = fit_capacity_curve(nca_sweep.curve, 4)
    assert 1 - 1 / fit.alpha == pytest.approx(1 - 1 / 0.9711, abs=5e-4)


def test_sweep_close_to_closed_form(nca_sweep):
    for point in nca_sweep.curve.points[:4]:
        expected = analytic_capacity(NCA_MODEL, CycleProtocol(point.current, 4.3, 3.0)).capacity
        assert point.capacity == pytest.approx(expected, rel=0.02)


def test_history_effect_is_small(nca_net, nca_sweep):
    reverse = capacity_sweep(nca_net, NCA_MODEL.r_s, NCA_PROTOCOL, REFERENCE_LADDER[::-1])
    np.testing.assert_allclose(reverse.curve.capacities, nca_sweep.curve.capacities, rtol=0.01)


def test_sweep_without_history_starts_relaxed(nca_net):
    sweep = capacity_sweep(nca_net, NCA_MODEL.r_s, NCA_PROTOCOL, [2.0, 1.0], carry_history=False)
    fresh = run_cycles(nca_net, NCA_MODEL.r_s, NCA_PROTOCOL)
    assert sweep.curve.capacities[0] == fresh.capacity.capacity


def test_sweep_is_deterministic(nca_net):
    a = capacity_sweep(nca_net, NCA_MODEL.r_s, NCA_PROTOCOL, [2.0, 0.5])
    b = capacity_sweep(nca_net, NCA_MODEL.r_s, NCA_PROTOCOL, [2.0, 0.5])
    np.testing.assert_array_equal(a.curve.capacities, b.curve.capacities)
    assert math.isfinite(a.max_charge_imbalance)
