"""Exception hierarchy shared across the package."""


class TrilatticeError(Exception):
    """Base class for all domain errors raised by this package."""


class DegenerateVolatility(TrilatticeError):
    """Volatility is zero (or negative), so the model degenerates."""


class SingularDenominator(TrilatticeError):
    """The branch-probability denominator vanished; the completing asset
    carries no information beyond the bond (typically the zero-rate case)."""


class InvalidRiskNeutralMeasure(TrilatticeError):
    """A branch probability left [0, 1]; the inputs admit no consistent
    risk-neutral measure and are treated as infeasible by inversion."""

    def __init__(self, message, q=None, step=None):
        super().__init__(message)
        self.q = q
        self.step = step


class SingularReplication(TrilatticeError):
    """The one-step replication system is singular at this node."""


class ArbitrageBounds(TrilatticeError):
    """The ordering D < r_f*dt < U (with D < 0 < U) is violated."""


class InsufficientData(TrilatticeError):
    """The return window is too short for the requested operation."""


class DegenerateBranch(TrilatticeError):
    """An up or down branch has zero probability; step returns undefined."""


class MomentInfeasible(TrilatticeError):
    """The moment-matching radicand is negative for these parameters."""


class InsufficientTail(TrilatticeError):
    """Too few observations in the requested tail."""


class NoFeasiblePoint(TrilatticeError):
    """Every candidate parameter value was infeasible for this quote."""


class DuplicateQuote(TrilatticeError):
    """An option chain contains two quotes for the same (maturity, strike)."""


class EmptyChain(TrilatticeError):
    """An option chain file contains no data rows."""


class SchemaError(TrilatticeError):
    """A data file does not conform to its declared schema."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row
