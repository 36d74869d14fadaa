"""Exception and warning types raised across the package."""


class MdccError(Exception):
    """Base class for all library errors."""


class NonStochasticRow(MdccError, ValueError):
    pass


class EmptyMatrix(MdccError, ValueError):
    pass


class ShapeMismatch(MdccError, ValueError):
    pass


class DomainError(MdccError, ValueError):
    pass


class EmptySequence(MdccError, ValueError):
    pass


class NegativeRho(MdccError, ValueError):
    pass


class NoConvergence(MdccError, RuntimeError):
    """An iterative solver hit its iteration cap.

    ``payload`` carries the best state reached (e.g. the capacity bracket).
    """

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload or {}


class InfeasiblePolytope(MdccError, RuntimeError):
    pass


class AlphabetTooLarge(MdccError, ValueError):
    pass


class ZeroDispersion(MdccError, ValueError):
    """The channel has sigma^2(W) = 0; moderate-deviations analysis does not apply."""


class InvalidSchedule(MdccError, ValueError):
    """Rate schedule does not satisfy eps_n -> 0 and eps_n * sqrt(n) -> inf."""


class InapplicableYet(MdccError, ValueError):
    """Blocklength too small for the bound's preconditions."""


class NonIntegralComposition(MdccError, ValueError):
    pass


class EnumerationTooLarge(MdccError, ValueError):
    pass


class HypothesisFails(MdccError, ValueError):
    pass


class ZeroCorrectProbability(MdccError, ValueError):
    pass


class ZeroDispersionWarning(UserWarning):
    pass
