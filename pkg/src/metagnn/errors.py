"""Exception types shared across the package."""


class MetaGNNError(Exception):
    """Base class for every error raised by metagnn."""


class DimensionError(MetaGNNError, ValueError):
    """Operand shapes do not conform."""


class NumericError(MetaGNNError, ArithmeticError):
    """A computation produced NaN or Inf."""


class ContractError(MetaGNNError, ValueError):
    """A precondition on an argument was violated."""


class SamplingError(MetaGNNError, RuntimeError):
    """Episode sampling could not satisfy its size constraints."""


class ParseError(MetaGNNError, ValueError):
    """A dataset file is malformed."""
