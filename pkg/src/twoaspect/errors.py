"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class ParseError(ValueError):
    """A data file could not be parsed."""


class ConfigError(ValueError):
    """Invalid model or run configuration."""


class CheckpointError(ValueError):
    """A checkpoint is malformed or does not match the data."""
