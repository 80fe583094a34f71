"""Exception hierarchy shared by all modules."""


class PlaaeError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(PlaaeError, ValueError):
    """Tensor shapes disagree with a layer configuration."""


class ConfigError(PlaaeError, ValueError):
    """Invalid configuration value or combination."""


class LengthError(PlaaeError, ValueError):
    """Signal too short (or of mismatched length) for the requested operation."""


class NumericError(PlaaeError, ArithmeticError):
    """A guarded numeric condition (zero norm, non-finite value) was hit."""


class AudioFormatError(PlaaeError, ValueError):
    """Audio file does not match the 16 kHz mono 16-bit PCM contract."""


class TrainingDivergence(PlaaeError, RuntimeError):
    """A training loss became non-finite."""

    def __init__(self, message, batch_seed=None, record=None):
        super().__init__(message)
        self.batch_seed = batch_seed
        self.record = record or {}
