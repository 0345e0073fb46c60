"""Fractional (constant-phase element) battery model: simulation and fitting."""

from .errors import (
    DataFormatError,
    DegenerateNetworkError,
    DomainError,
    ExtrapolationError,
    FraccapError,
    InsufficientBranchesError,
    NonPhysicalFitError,
    ResistiveWindowExhausted,
    SimulationError,
    UnstableTimeStepError,
)
from .fitting import (
    CapacityCurve,
    FitResult,
    ImpedanceSpectrum,
    cross_validate,
    fit_capacity_curve,
    fit_impedance_spectrum,
    fit_rs_intercept,
)
from .fractional import (
    CapacityPoint,
    CircuitModel,
    CpeParams,
    CycleProtocol,
    StepCurrentProfile,
    analytic_capacity,
    cpe_impedance,
    cycle_voltage_swing,
    model_impedance,
    peukert_exponent,
    rl_voltage,
)
from .morrison import (
    MorrisonNetwork,
    MorrisonSpec,
    approximation_report,
    network_impedance,
    read_network,
    simulation_band,
    synthesize,
    write_network,
)
from .simulator import CycleResult, SimState, capacity_sweep, run_cycles, step

__version__ = "0.1.0"
