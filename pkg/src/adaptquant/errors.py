"""Exception hierarchy shared across the package."""


class AdaptQuantError(Exception):
    """Base class for all package errors."""


class GridOverflow(AdaptQuantError):
    """A communicated vector fell outside the quantization grid.

    Raised by the quantizer when ``||c - center||_inf > r``.  When raised from
    inside a run loop the iteration index, node id and the partial trace are
    attached.
    """

    def __init__(self, message, iteration=None, node=None, trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.node = node
        self.trace = trace


class IndexOutOfRange(AdaptQuantError):
    pass


class LengthMismatch(AdaptQuantError):
    pass


class InvalidSigma(AdaptQuantError):
    pass


class InvalidEps(AdaptQuantError):
    pass


class Divergent(AdaptQuantError):
    """alpha(b) >= 1, so no convergence guarantee exists for this bit width."""

    def __init__(self, message, min_bits=None):
        super().__init__(message)
        self.min_bits = min_bits


class EmptyRange(AdaptQuantError):
    pass


class NonFiniteState(AdaptQuantError):
    pass


class NotInImage(AdaptQuantError):
    pass


class RankDeficiency(AdaptQuantError):
    pass


class NoConvergence(AdaptQuantError):
    pass


class ConnectivityError(AdaptQuantError):
    pass


class ConnectivityTimeout(AdaptQuantError):
    pass


class InnerSolverFailure(AdaptQuantError):
    pass


class EmptySample(AdaptQuantError):
    pass


class KappaTooSmall(AdaptQuantError):
    pass


class ParseError(AdaptQuantError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DimensionMismatch(ParseError):
    pass


class NegativeObjective(AdaptQuantError):
    pass


class NonPositiveRate(AdaptQuantError):
    pass


class DomainError(AdaptQuantError):
    pass


class DegenerateP(AdaptQuantError):
    pass


class ConfigError(AdaptQuantError):
    pass
