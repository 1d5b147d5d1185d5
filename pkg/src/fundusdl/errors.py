"""Exception types shared across the package."""


class FundusError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(FundusError):
    """A config, layer spec, or plan is internally inconsistent."""


class DataError(FundusError):
    """A manifest, feature file, or prediction file is malformed."""


class UnusableImageError(FundusError):
    """An input image cannot be preprocessed (blank, corrupt, too small).

    ``reason`` is a short machine-readable code that ends up in rejected.csv.
    """

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)


class TrainingError(FundusError):
    """Training hit a non-recoverable numeric state (NaN/Inf loss or grads)."""


class CheckpointError(FundusError):
    """A checkpoint file is malformed or does not match the network config."""


class MetricError(FundusError):
    """A metric is undefined for the given inputs (empty class, NaN score)."""
