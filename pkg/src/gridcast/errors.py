"""Exception types raised across the gridcast pipeline."""


class GridcastError(Exception):
    """Base class for all gridcast errors."""


class CsvParseError(GridcastError):
    """Malformed row, unknown header, or bad value in an input CSV."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OrderingError(GridcastError):
    """Timestamps out of order or duplicated."""


class AlignmentError(GridcastError):
    """Load and weather series have no overlapping hours."""


class ImputationError(GridcastError):
    """A column cannot be imputed (e.g. entirely missing)."""


class CalibrationError(GridcastError):
    """Envelope or tolerance fit failed (empty segment, rank deficiency)."""


class StandardizerError(GridcastError):
    """Zero-variance column or standardizer misuse."""


class WindowError(GridcastError):
    """Split too short to form any window, or window misalignment."""


class ConfigError(GridcastError):
    """Invalid model or run configuration."""


class ShapeError(GridcastError):
    """Tensor shape incompatible with a layer or operation."""


class TrainingError(GridcastError):
    """Training aborted (e.g. non-finite loss)."""

    def __init__(self, message, epoch=None, batch=None, term=None):
        self.epoch = epoch
        self.batch = batch
        self.term = term
        ctx = ", ".join(
            f"{k}={v}" for k, v in [("epoch", epoch), ("batch", batch), ("term", term)]
            if v is not None
        )
        super().__init__(f"{message} ({ctx})" if ctx else message)


class DegenerateEnsembleError(GridcastError):
    """Member predictions identical; fusion weight is undefined."""


class MapeUndefinedError(GridcastError):
    """MAPE requested with a zero observation; carries the partial report."""

    def __init__(self, message, partial_report=None):
        self.partial_report = partial_report
        super().__init__(message)


class ArtifactError(GridcastError):
    """Missing or mismatched pipeline artifact."""

    def __init__(self, message, producing_stage=None):
        self.producing_stage = producing_stage
        if producing_stage:
            message = f"{message} (produce it with the '{producing_stage}' subcommand)"
        super().__init__(message)
