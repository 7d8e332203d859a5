"""Exception types raised by the library."""


class LapScatterError(Exception):
    """Base class for all library errors."""


class ConfigError(LapScatterError, ValueError):
    """Invalid model, rigging or run configuration."""


class ScaleSpaceError(LapScatterError, TypeError):
    """Vectors from incompatible spaces of the Hilbert scale were combined."""


class EdgeOfSpectrumError(LapScatterError, ValueError):
    """Requested energy lies too close to a spectrum or window edge."""


class ResonanceError(LapScatterError, ArithmeticError):
    """The auxiliary-space operator 1 + T0 J is numerically singular."""


class LAPViolation(LapScatterError, ArithmeticError):
    """A boundary value has an imaginary part that is not positive semidefinite."""


class WellDefinednessError(LapScatterError, ArithmeticError):
    """The defining equations of a wave matrix are inconsistent."""


class GluingError(LapScatterError, ArithmeticError):
    """Fiber data of two windows cannot be glued."""


class MissingBlocksError(LapScatterError, ValueError):
    """A direct-integral operator lacks blocks at some grid energies."""


class PropagationError(LapScatterError, ArithmeticError):
    """Time propagation could not certify the requested accuracy."""


class NotConvergedError(LapScatterError, ArithmeticError):
    """A time-dependent limit did not settle within the horizon."""
