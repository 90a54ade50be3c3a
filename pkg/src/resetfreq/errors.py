"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: configuration problems -> 2, analytic
failures (non-Hurwitz interconnections, assumption violations, singular
matrices) -> 3, simulation failures -> 4.
"""


class ResetFreqError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ResetFreqError):
    """Invalid configuration input (bad dimensions, parameters, files)."""


class DimensionError(ConfigError):
    """Incompatible matrix or interconnection dimensions."""


class AnalyticError(ResetFreqError):
    """A frequency-domain computation cannot be carried out."""


class SingularityError(AnalyticError):
    """A matrix that must be inverted is singular or near-singular."""


class ConvergenceError(AnalyticError):
    """An infinite series does not converge (non-Hurwitz dynamics)."""


class StabilityError(AnalyticError):
    """The open-loop reset stability condition is violated."""


class AssumptionError(AnalyticError):
    """An assumption required by the analytical solution fails outright."""

    def __init__(self, message, assumption):
        super().__init__(message)
        self.assumption = assumption


class NoCrossoverError(AnalyticError):
    """No gain crossover found in the searched frequency band."""


class SimulationError(ResetFreqError):
    """The hybrid simulation failed (Zeno guard, no steady state, ...)."""


class UndefinedMetricError(ResetFreqError):
    """A normalized metric has a zero denominator."""
