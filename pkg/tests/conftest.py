import pytest

from fraccap.config import REFERENCE_LADDER
from fraccap.fractional import CircuitModel, CpeParams, CycleProtocol
from fraccap.morrison import MorrisonSpec, simulation_band, synthesize
from fraccap.simulator import capacity_sweep

NCA_CPE = CpeParams(0.9711, 9203.0)
NCA_MODEL = CircuitModel(NCA_CPE, 0.0631)
NCA_PROTOCOL = CycleProtocol(1.0, 4.30, 3.00)


@pytest.fixture(scope="session")
def nca_spec():
    return MorrisonSpec(NCA_CPE, n_half=30, k_f=1.4)


@pytest.fixture(scope="session")
def nca_net(nca_spec):
    """Ladder placed for a 1 s Euler step (fastest time constant 4 s)."""
    return synthesize(nca_spec, simulation_band(nca_spec, 1.0))


@pytest.fixture(scope="session")
def nca_sweep(nca_net):
    """Full reference ladder, 5 A down to 0.05 A, history carried."""
    return capacity_sweep(nca_net, NCA_MODEL.r_s, NCA_PROTOCOL, REFERENCE_LADDER, n_cycles=2)


# --- one PASS/FAIL line per acceptance criterion -------------------------------

_criteria: dict[str, list[str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    for marker in report.keywords:
        if marker.startswith("criterion_"):
            outcome = "xfailed" if hasattr(report, "wasxfail") else report.outcome
            _criteria.setdefault(marker, []).append(outcome)


def pytest_configure(config):
    for n in range(1, 9):
        config.addinivalue_line("markers", f"criterion_{n}: acceptance criterion {n}")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria, key=lambda m: int(m.split("_")[1])):
        outcomes = _criteria[name]
        status = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        note = ", known failure" if "xfailed" in outcomes else ""
        terminalreporter.write_line(
            f"criterion {name.split('_')[1]}: {status} ({outcomes.count('passed')}/{len(outcomes)} checks{note})"
        )
