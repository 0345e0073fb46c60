"""Exception hierarchy shared by all fraccap modules."""


class FraccapError(Exception):
    """Base class for model and numerical errors."""


class DomainError(FraccapError, ValueError):
    """An argument lies outside the domain of an operation."""


class ResistiveWindowExhausted(FraccapError):
    """The series resistor consumes the whole voltage window.

    Raised when ``2 * i0 * r_s >= v_h - v_l``. ``x_intercept`` is the current
    ``I_x = dV / (2 R_s)`` at which the capacity falls to zero.
    """

    def __init__(self, current, r_s, delta_v):
        self.current = current
        self.r_s = r_s
        self.delta_v = delta_v
        self.x_intercept = delta_v / (2.0 * r_s) if r_s > 0 else float("inf")
        super().__init__(
            f"resistive window exhausted: 2*I0*R_s = {2.0 * current * r_s:.6g} V "
            f">= dV = {delta_v:.6g} V (capacity reaches zero at I_x = "
            f"{self.x_intercept:.6g} A)"
        )


class DegenerateNetworkError(FraccapError):
    """alpha = 1 makes the terminating capacitor formula singular."""


class InsufficientBranchesError(FraccapError):
    def __init__(self, n_half, minimum):
        self.n_half = n_half
        self.minimum = minimum
        super().__init__(
            f"insufficient branches: band needs n_half >= {minimum}, got {n_half}"
        )


class UnstableTimeStepError(FraccapError):
    """Explicit integration step exceeds half the fastest branch time constant."""


class SimulationError(FraccapError):
    """A cycling run could not reach its voltage limit."""


class NonPhysicalFitError(FraccapError):
    """A fit produced parameters outside the physical CPE range."""


class ExtrapolationError(FraccapError):
    """A linear extrapolation to the current axis is not defined."""


class DataFormatError(FraccapError, ValueError):
    """Malformed input table. ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
