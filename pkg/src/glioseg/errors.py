"""Exception types raised across the package."""


class GliosegError(Exception):
    """Base class for all package errors."""


class ConfigError(GliosegError):
    """Invalid or inconsistent configuration."""


class MissingModality(GliosegError):
    """A case directory or manifest entry lacks one of the four modalities."""


class GeometryMismatch(GliosegError):
    """Shapes or spacings disagree across files belonging to one case."""


class InvalidLabel(GliosegError):
    """A label volume contains a value outside {0, 1, 2, 4}."""


class EmptyVolume(GliosegError):
    """All modalities are identically zero; no foreground to crop."""


class DegenerateIntensity(GliosegError):
    """A modality has constant foreground intensity and cannot be standardized."""


class ShapeError(GliosegError):
    """Tensor shapes violate an operation's contract."""


class NumericalDivergence(GliosegError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, batch_id: str | None = None):
        super().__init__(message)
        self.batch_id = batch_id


class CheckpointError(GliosegError):
    """A checkpoint file is unreadable or has an unsupported schema."""
