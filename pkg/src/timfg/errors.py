"""Exception types raised by the solvers."""


class TimfgError(Exception):
    pass


class ConfigError(TimfgError, ValueError):
    """Inconsistent or out-of-range configuration."""


class ModelError(TimfgError):
    """A coefficient function returned something unusable."""


class InvalidDensityError(TimfgError, ValueError):
    pass


class NumericError(TimfgError):
    """A linear solve or scheme invariant failed."""


class SchemeError(NumericError):
    pass


class ConservationError(NumericError):
    pass
