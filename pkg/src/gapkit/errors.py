"""Exception hierarchy shared by all gapkit modules."""


class GapkitError(Exception):
    """Base class for all gapkit errors."""


class FormatError(GapkitError):
    """The file is not a GAPEMB container (bad magic, version, or header)."""


class TruncatedFileError(GapkitError):
    """The container header promises more bytes than the file holds."""


class DataValidationError(GapkitError):
    """A dataset field violates an invariant; the message names the field."""


class DegenerateEmbeddingError(GapkitError):
    """An embedding row collapsed to (near) zero norm."""


class ParameterError(GapkitError):
    """An argument is outside its documented range."""


class NumericError(GapkitError):
    """A computation produced non-finite values."""


class ConfigurationError(GapkitError):
    """A run configuration is unusable (e.g. empty validation set)."""


class EvaluationError(GapkitError):
    """Evaluation cannot produce a result (e.g. every class excluded)."""
