class ExtractError(Exception):
    """Base class for extraction failures."""


class BackboneUnavailableError(ExtractError):
    """Requested backbone's runtime dependencies are not installed."""


class DatasetError(ExtractError):
    """Dataset folder or metadata is malformed."""


class DimensionMismatchError(ExtractError):
    """Image and text encoders produced different embedding dimensions."""
