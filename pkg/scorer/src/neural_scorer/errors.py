"""Error taxonomy for the scorer service."""


class ScorerServiceError(Exception):
    """Base class for every error this package raises on purpose."""


class BadRequestError(ScorerServiceError):
    """A request line was malformed or violated the protocol's field rules."""


class ModelError(ScorerServiceError):
    """A model file could not be loaded or is internally inconsistent."""


class DataError(ScorerServiceError):
    """Training data could not be produced or parsed."""
