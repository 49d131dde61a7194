"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Inputs violate a documented precondition or file format."""
