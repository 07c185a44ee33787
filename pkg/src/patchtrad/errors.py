"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`PatchTradError`. The CLI maps each family to its own exit code.
"""


class PatchTradError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(PatchTradError, ValueError):
    """Invalid configuration or hyperparameter combination."""

    exit_code = 2


class DimensionError(ConfigError):
    """Tensor shapes are incompatible for an operation."""


class DataError(PatchTradError, ValueError):
    """Input data is malformed, missing, or too short."""

    exit_code = 3


class UndefinedMetricError(DataError):
    """A metric cannot be computed, e.g. ROC-AUC with a single class."""


class NumericError(PatchTradError, ArithmeticError):
    """A NaN or Inf appeared where finite values are required."""

    exit_code = 4


class TrainingError(NumericError):
    """Optimizer invariants were broken (missing gradients, divergence)."""


class AutodiffError(PatchTradError, RuntimeError):
    """Misuse of the gradient graph (non-scalar root, replayed backward)."""

    exit_code = 4


class CheckpointError(PatchTradError, OSError):
    """Base for checkpoint I/O failures."""

    exit_code = 5


class UnsupportedFormatError(CheckpointError):
    """Wrong magic bytes or an unknown format version."""


class CorruptCheckpointError(CheckpointError):
    """The file is truncated or its payload disagrees with its manifest."""
