"""Exception hierarchy shared by every module."""


class UnmixingSRError(Exception):
    """Base class for all package errors."""


class ConfigurationError(UnmixingSRError, ValueError):
    """Invalid shapes, hyperparameters or mismatched network/data dimensions."""


class UsageError(UnmixingSRError, RuntimeError):
    """API misuse, e.g. calling backward on a non-scalar root."""


class GenerationError(UnmixingSRError, RuntimeError):
    """Synthetic scene generation could not satisfy its constraints."""


class NumericalError(UnmixingSRError, FloatingPointError):
    """A loss or parameter became non-finite during training."""


class HscError(UnmixingSRError, OSError):
    """Base class for HSC1/ABN1 container errors."""


class BadMagicError(HscError):
    pass


class TruncatedFileError(HscError):
    pass


class NonFiniteDataError(HscError):
    pass


class CheckpointError(UnmixingSRError, OSError):
    """Malformed or incompatible checkpoint file."""


class MetricError(UnmixingSRError, ValueError):
    """A metric is undefined for the given inputs."""
