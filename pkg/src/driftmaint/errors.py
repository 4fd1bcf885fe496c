class ConfigError(ValueError):
    """Invalid configuration, shapes, or arguments."""


class IngestionError(ValueError):
    """A data file could not be turned into a stream."""


class NumericalError(ArithmeticError):
    """A loss or gradient became non-finite."""
