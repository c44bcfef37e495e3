"""Exception types shared across the package."""


class CongcnError(Exception):
    """Base class for all package errors."""


class ShapeError(CongcnError, ValueError):
    """Operand dimensions are incompatible."""


class DomainError(CongcnError, ValueError):
    """A value lies outside an operation's documented domain."""


class NumericError(CongcnError, ArithmeticError):
    """A computation produced NaN or Inf."""


class ContractError(CongcnError, ValueError):
    """A caller violated an operation's precondition."""


class FormatError(CongcnError, ValueError):
    """A file does not conform to its binary or text format."""


class SplitError(CongcnError, ValueError):
    """Labeled/unlabeled split cannot be constructed."""


class ConfigError(CongcnError, ValueError):
    """Invalid run configuration."""
