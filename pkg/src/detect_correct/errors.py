"""Exception types raised across the package."""


class DataFormatError(ValueError):
    """A file does not follow the expected binary or text layout."""


class DataConsistencyError(ValueError):
    """Two inputs that must agree (e.g. image and label counts) do not."""


class CSVParseError(ValueError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class LabelRangeError(ValueError):
    """A class index falls outside ``[0, num_classes - 1]``."""


class MissingCleanLabelsError(RuntimeError):
    """An operation needs ground-truth labels that the dataset lacks."""


class DegenerateInputError(ValueError):
    """The mixture cannot be fitted, e.g. every loss value is identical."""


class DegenerateMixtureError(ValueError):
    """The fitted components are not separated enough to define a threshold.

    Callers should fall back to flagging every sample as clean.
    """


class EmptyEvidenceError(ValueError):
    """No flagged samples were available to estimate a transition matrix.

    Callers should fall back to the (blended) uniform matrix.
    """


class StageError(RuntimeError):
    """Wraps an exception with the name of the pipeline stage that raised it."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
