"""Exception types shared across the package."""


class AntispoofError(Exception):
    """Base class for all library errors."""


class DimensionError(AntispoofError):
    """Tensor shapes are incompatible for the requested operation."""


class ContractError(AntispoofError):
    """An operation was called outside its documented contract."""


class ConfigError(AntispoofError):
    """Invalid or inconsistent configuration."""


class IngestError(AntispoofError):
    """Audio input does not satisfy the ingest contract."""


class ParseError(AntispoofError):
    """A text artifact (score file, manifest) is malformed."""


class MetricError(AntispoofError):
    """Metric preconditions violated (e.g. single-class EER input)."""


class CheckpointError(AntispoofError):
    """Checkpoint file is corrupt or structurally invalid."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version is not supported."""


class TrainingAbort(AntispoofError):
    """Training stopped because of a non-finite loss or gradient."""
