class InvalidParameterError(ValueError):
    """Raised when an argument violates a documented parameter constraint."""


class PreconditionError(ValueError):
    """Raised when a scene violates a modelling assumption (orthogonality, delay spread)."""
