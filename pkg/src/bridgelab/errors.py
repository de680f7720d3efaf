"""Exception hierarchy shared by all bridgelab modules."""


class BridgeLabError(Exception):
    """Base class for every error raised by bridgelab."""


class ParameterError(BridgeLabError, ValueError):
    """Invalid physical parameters."""


class NonPositiveLength(ParameterError):
    pass


class NegativeCoefficient(ParameterError):
    pass


class XiOutOfRange(ParameterError):
    pass


class NumericalError(BridgeLabError):
    """A numerical procedure could not deliver its contract."""


class SingularShift(NumericalError):
    """The shifted operator is numerically singular.

    Attributes
    ----------
    shift : complex
        The offending shift.
    sigma_min : float
        Estimated smallest singular value (energy norm).
    """

    def __init__(self, msg, shift=None, sigma_min=None):
        super().__init__(msg)
        self.shift = shift
        self.sigma_min = sigma_min


class EigenSolverError(NumericalError):
    pass


class IrrationalXi(BridgeLabError):
    """No exact period is available for a float damping location."""


class IncommensurableXi(BridgeLabError, ValueError):
    """The damping point does not fall on the characteristic grid."""


class DomainError(BridgeLabError, ValueError):
    pass


class NondifferentiableFamily(BridgeLabError):
    pass


class FixedPointDivergence(NumericalError):
    """Fixed-point iteration for the implicit nonlinear stage failed.

    Attributes
    ----------
    contraction : float
        Observed ratio of successive increments at the last iteration.
    """

    def __init__(self, msg, contraction=None):
        super().__init__(msg)
        self.contraction = contraction


class StrideTooCoarse(BridgeLabError, ValueError):
    pass


class ZeroEnergy(NumericalError):
    pass


class ConfigError(BridgeLabError):
    """Configuration problems; ``errors`` lists every violation found."""

    def __init__(self, msg, errors=None):
        super().__init__(msg)
        self.errors = list(errors or [])


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass
