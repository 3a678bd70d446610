"""Exception hierarchy shared by all modules."""


class ResidueError(Exception):
    """Base class for every error raised by this package."""


# geometry
class SingularMetric(ResidueError, ValueError):
    pass


class NotPositiveDefinite(ResidueError, ValueError):
    pass


class NonPositiveWarp(ResidueError, ValueError):
    pass


class DerivativeUnavailable(ResidueError):
    pass


# moments / symbols
class DimensionMismatch(ResidueError, ValueError):
    pass


class TruncationTooDeep(ResidueError):
    pass


class NotElliptic(ResidueError, ValueError):
    pass


# residue
class FrameMismatch(ResidueError, ValueError):
    pass


class ImaginaryResidue(ResidueError, ArithmeticError):
    pass


class OddTotalDimension(ResidueError, ValueError):
    pass


class QuadratureUnconverged(ResidueError):
    pass


# exprlang
class ParseError(ResidueError, ValueError):
    """Syntax error with the byte offset where parsing stopped."""

    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(set(expected)))
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)


class UnknownFunction(ParseError):
    pass


class UnknownVariable(ResidueError, NameError):
    pass


class UnboundVariable(ResidueError, NameError):
    pass


class DomainError(ResidueError, ArithmeticError):
    pass


class NonDifferentiable(ResidueError):
    pass


# cli
class ConfigError(ResidueError, ValueError):
    pass
