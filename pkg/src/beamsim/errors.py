"""Exception hierarchy shared across the package."""


class BeamSimError(Exception):
    """Base class for all package errors."""


class ValidationError(BeamSimError):
    """A config, argument, or precondition failed validation."""


class DegenerateGradientError(BeamSimError):
    """The loss gradient at the input is the zero vector, so no attack
    direction exists."""


class TrainingDivergedError(BeamSimError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch, message=None):
        self.epoch = epoch
        self.batch = batch
        super().__init__(
            message or f"non-finite loss at epoch {epoch}, batch {batch}"
        )


class FileFormatError(BeamSimError):
    """Base class for binary container read failures."""


class FormatVersionError(FileFormatError):
    """File magic or format version does not match this reader."""


class FileTruncatedError(FileFormatError):
    """File ended before all declared bytes could be read."""


class ShapeMismatchError(FileFormatError):
    """A stored array's shape disagrees with the file's own metadata or
    with the shape this package requires."""


class ReportParseError(BeamSimError):
    """A result CSV could not be parsed."""

    def __init__(self, path, line_no, message):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")
