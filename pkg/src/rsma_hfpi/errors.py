"""Exception types shared across the package."""


class RsmaError(Exception):
    """Base class for package errors."""


class ParameterError(RsmaError, ValueError):
    """A scalar or vector parameter is outside its admissible range."""


class StructuralError(RsmaError, ValueError):
    """Array shapes are inconsistent or a matrix lacks a required structure."""


class FeasibilityError(RsmaError, ValueError):
    """A candidate solution violates a constraint (power, common-rate cap)."""


class NumericalDomainError(RsmaError, ArithmeticError):
    """A dual update would divide by a nonpositive quantity."""


class ParseError(RsmaError, ValueError):
    """Malformed experiment configuration."""
