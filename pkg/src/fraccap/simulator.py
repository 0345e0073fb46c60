"""Explicit-Euler time stepping of a Morrison ladder under constant-current cycling.

The ladder node voltage ``v_ct`` is the CPE voltage. The terminal voltage is
``v_offset + v_ct + i * r_s`` with positive ``i`` charging the cell.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .errors import DomainError, ResistiveWindowExhausted, SimulationError, UnstableTimeStepError
from .fitting import CapacityCurve
from .fractional import CapacityPoint, CircuitModel, CycleProtocol, analytic_capacity
from .morrison import MorrisonNetwork

#: Hard stability ceiling on dt relative to the fastest branch.
MAX_STEP_FRACTION = 0.5
DEFAULT_MAX_SAMPLES_PER_CYCLE = 20_000


@dataclass(frozen=True, eq=False)
class SimState:
    t: float
    v_branch: np.ndarray
    v_ct: float
    accumulated_charge: float = 0.0
    dissipated_energy: float = 0.0

    @classmethod
    def relaxed(cls, net: MorrisonNetwork, voltage: float = 0.0) -> "SimState":
        return cls(0.0, np.full(net.resistances.size, float(voltage)), float(voltage))

    def stored_charge(self, net: MorrisonNetwork) -> float:
        """Charge on all capacitors relative to zero volts."""
        return float(net.capacitances @ self.v_branch) + net.c_t * self.v_ct

    def charge_imbalance(self, net: MorrisonNetwork, initial: "SimState") -> float:
        """Stored charge gained minus charge delivered through the terminal."""
        gained = self.stored_charge(net) - initial.stored_charge(net)
        delivered = self.accumulated_charge - initial.accumulated_charge
        return gained - delivered


def _check_dt(net: MorrisonNetwork, dt: float) -> None:
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt!r}")
    if dt > MAX_STEP_FRACTION * net.tau_min:
        raise UnstableTimeStepError(
            f"unstable time step: dt = {dt:g} s exceeds {MAX_STEP_FRACTION} * "
            f"tau_min = {MAX_STEP_FRACTION * net.tau_min:g} s"
        )


def step(net: MorrisonNetwork, state: SimState, i_terminal: float, dt: float) -> SimState:
    """Advance one explicit Euler step under terminal current ``i_terminal``."""
    _check_dt(net, dt)
    i_branch = (state.v_ct - state.v_branch) / net.resistances
    v_branch = state.v_branch + i_branch * dt / net.capacitances
    v_ct = state.v_ct + (i_terminal - i_branch.sum()) * dt / net.c_t
    return SimState(
        t=state.t + dt,
        v_branch=v_branch,
        v_ct=v_ct,
        accumulated_charge=state.accumulated_charge + i_terminal * dt,
        dissipated_energy=state.dissipated_energy
        + float(i_branch**2 @ net.resistances) * dt,
    )


@njit(cache=True)
def _half_cycle(r, c, c_t, v_b, v_ct, current, r_s, v_offset, dt, limit, falling,
                max_steps, t0, buf_t, buf_v):
    # Runs until the terminal voltage crosses ``limit``; v_b is updated in place.
    # Samples are kept uniform in time by halving the buffer when it fills.
    n = v_b.size
    cap = buf_t.size - 1
    old = np.empty(n)
    v_prev = v_offset + v_ct + current * r_s
    buf_t[0] = t0
    buf_v[0] = v_prev
    if (v_prev <= limit) if falling else (v_prev >= limit):
        return v_ct, 0.0, 0.0, 1, True
    n_rec = 1
    stride = 1
    dissipated = 0.0
    k = 0
    while k < max_steps:
        s = 0.0
        d = 0.0
        for j in range(n):
            old[j] = v_b[j]
            ik = (v_ct - v_b[j]) / r[j]
            v_b[j] += ik * dt / c[j]
            s += ik
            d += ik * ik * r[j]
        v_ct_new = v_ct + (current - s) * dt / c_t
        v_new = v_offset + v_ct_new + current * r_s
        k += 1
        crossed = v_new <= limit if falling else v_new >= limit
        if crossed:
            theta = (v_prev - limit) / (v_prev - v_new)
            for j in range(n):
                v_b[j] = old[j] + theta * (v_b[j] - old[j])
            v_ct = v_ct + theta * (v_ct_new - v_ct)
            dissipated += theta * d * dt
            elapsed = (k - 1 + theta) * dt
            buf_t[n_rec] = t0 + elapsed
            buf_v[n_rec] = limit
            return v_ct, elapsed, dissipated, n_rec + 1, True
        v_ct = v_ct_new
        v_prev = v_new
        dissipated += d * dt
        if k % stride == 0:
            buf_t[n_rec] = t0 + k * dt
            buf_v[n_rec] = v_new
            n_rec += 1
            if n_rec == cap:
                half = 0
                for m in range(0, cap, 2):
                    buf_t[half] = buf_t[m]
                    buf_v[half] = buf_v[m]
                    half += 1
                n_rec = half
                stride *= 2
    return v_ct, k * dt, dissipated, n_rec, False


@dataclass(frozen=True)
class HalfCycle:
    kind: str  # "discharge" or "charge"
    t_start: float
    duration: float
    current: float

    @property
    def charge(self) -> float:
        return abs(self.current) * self.duration


@dataclass(frozen=True, eq=False)
class CycleResult:
    protocol: CycleProtocol
    trace_t: np.ndarray
    trace_v: np.ndarray
    trace_i: np.ndarray
    capacity: CapacityPoint
    n_cycles_run: int
    half_cycles: tuple[HalfCycle, ...]
    final_state: SimState
    dt: float
    v_offset: float
    max_charge_imbalance: float = 0.0
    resistor_energy: float = 0.0

    @property
    def discharges(self) -> list[HalfCycle]:
        return [h for h in self.half_cycles if h.kind == "discharge"]

    @property
    def charges(self) -> list[HalfCycle]:
        return [h for h in self.half_cycles if h.kind == "charge"]


def _max_steps(net, r_s, protocol, dt):
    # generous ceiling from the closed-form capacity of the target CPE
    q = analytic_capacity(CircuitModel(net.target, r_s), protocol).capacity
    q = max(q, net.total_capacitance * protocol.delta_v)
    return int(50.0 * q / protocol.i0 / dt) + 100_000


def run_cycles(
    net: MorrisonNetwork,
    r_s: float,
    protocol: CycleProtocol,
    *,
    v_init: float | None = None,
    n_cycles: int = 2,
    dt: float | None = None,
    initial_state: SimState | None = None,
    max_samples_per_cycle: int = DEFAULT_MAX_SAMPLES_PER_CYCLE,
) -> CycleResult:
    """Cycle discharge-to-``v_l`` then charge-to-``v_h``, ``n_cycles`` times.

    The terminal voltage is referenced to ``v_init`` (default ``v_h``), the
    open-circuit voltage of a relaxed ladder. Pass ``initial_state`` to continue
    from an earlier run with the same ``v_init``. Capacity is the charge drawn in
    the final discharge.
    """
    if r_s < 0:
        raise DomainError(f"r_s must be non-negative, got {r_s!r}")
    if n_cycles < 1:
        raise DomainError(f"n_cycles must be >= 1, got {n_cycles!r}")
    v_offset = protocol.v_h if v_init is None else float(v_init)
    if not protocol.v_l <= v_offset <= protocol.v_h:
        raise DomainError(f"v_init = {v_offset} outside [{protocol.v_l}, {protocol.v_h}]")
    if 2.0 * protocol.i0 * r_s >= protocol.delta_v:
        raise ResistiveWindowExhausted(protocol.i0, r_s, protocol.delta_v)
    if dt is None:
        dt = net.stable_time_step()
    _check_dt(net, dt)

    state = initial_state if initial_state is not None else SimState.relaxed(net)
    start = state
    v_b = np.array(state.v_branch, dtype=float)
    v_ct = float(state.v_ct)
    t = float(state.t)
    charge = float(state.accumulated_charge)
    energy = float(state.dissipated_energy)
    r_energy = 0.0
    max_steps = _max_steps(net, r_s, protocol, dt)

    cap = max(4, (max_samples_per_cycle // 2 - 1) // 2 * 2)
    buf_t = np.empty(cap + 1)
    buf_v = np.empty(cap + 1)
    ts, vs, is_ = [], [], []
    halves = []
    worst = 0.0
    for _ in range(n_cycles):
        for kind, current, limit, falling in (
            ("discharge", -protocol.i0, protocol.v_l, True),
            ("charge", protocol.i0, protocol.v_h, False),
        ):
            v_ct, elapsed, diss, n_rec, ok = _half_cycle(
                net.resistances, net.capacitances, net.c_t, v_b, v_ct, current,
                r_s, v_offset, dt, limit, falling, max_steps, t, buf_t, buf_v,
            )
            if not ok:
                raise SimulationError(
                    f"{kind} at {protocol.i0:g} A did not reach {limit:g} V "
                    f"within {max_steps} steps"
                )
            ts.append(buf_t[:n_rec].copy())
            vs.append(buf_v[:n_rec].copy())
            is_.append(np.full(n_rec, current))
            halves.append(HalfCycle(kind, t, elapsed, current))
            t += elapsed
            charge += current * elapsed
            energy += diss + current * current * r_s * elapsed
            r_energy += diss + current * current * r_s * elapsed
            snapshot = SimState(t, v_b.copy(), v_ct, charge, energy)
            throughput = abs(current) * elapsed
            if throughput > 0:
                worst = max(worst, abs(snapshot.charge_imbalance(net, start)) / throughput)

    final = SimState(t, v_b, v_ct, charge, energy)
    last = halves[-2]
    return CycleResult(
        protocol=protocol,
        trace_t=np.concatenate(ts),
        trace_v=np.concatenate(vs),
        trace_i=np.concatenate(is_),
        capacity=CapacityPoint(protocol.i0, last.charge),
        n_cycles_run=n_cycles,
        half_cycles=tuple(halves),
        final_state=final,
        dt=dt,
        v_offset=v_offset,
        max_charge_imbalance=worst,
        resistor_energy=r_energy,
    )


@dataclass(frozen=True, eq=False)
class SweepResult:
    curve: CapacityCurve
    runs: tuple[CycleResult, ...] = field(default=())

    @property
    def max_charge_imbalance(self) -> float:
        return max((r.max_charge_imbalance for r in self.runs), default=0.0)


def capacity_sweep(
    net: MorrisonNetwork,
    r_s: float,
    protocol_template: CycleProtocol,
    currents: Sequence[float],
    n_cycles: int = 2,
    dt: float | None = None,
    *,
    carry_history: bool = True,
    v_init: float | None = None,
    max_samples_per_cycle: int = DEFAULT_MAX_SAMPLES_PER_CYCLE,
) -> SweepResult:
    """Run :func:`run_cycles` for each current in order.

    With ``carry_history`` the ladder state passes from one current to the next,
    as for a single cell cycled through a current ladder. One ``dt`` (default
    a quarter of the fastest branch time constant) is shared by all currents.
    """
    currents = [float(i) for i in currents]
    if not currents:
        raise DomainError("currents must be non-empty")
    if any(not i > 0 for i in currents):
        raise DomainError("currents must all be positive")
    protocols = [dataclasses.replace(protocol_template, i0=i) for i in currents]
    for p in protocols:
        if 2.0 * p.i0 * r_s >= p.delta_v:
            raise ResistiveWindowExhausted(p.i0, r_s, p.delta_v)
    if dt is None:
        dt = net.stable_time_step()
    runs = []
    state = None
    for p in protocols:
        result = run_cycles(
            net, r_s, p, v_init=v_init, n_cycles=n_cycles, dt=dt,
            initial_state=state, max_samples_per_cycle=max_samples_per_cycle,
        )
        runs.append(result)
        if carry_history:
            state = result.final_state
    curve = CapacityCurve.from_points(
        [r.capacity for r in runs], delta_v=protocol_template.delta_v
    )
    return SweepResult(curve, tuple(runs))


def ideal_capacity(net: MorrisonNetwork, protocol: CycleProtocol) -> float:
    """Charge a pure capacitor of the ladder's total capacitance would give."""
    return net.total_capacitance * protocol.delta_v


__all__ = [
    "SimState",
    "HalfCycle",
    "CycleResult",
    "SweepResult",
    "step",
    "run_cycles",
    "capacity_sweep",
    "ideal_capacity",
]
