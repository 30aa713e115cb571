"""Exception hierarchy shared across the package."""


class SuperposeError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SuperposeError, ValueError):
    """Invalid configuration (empty terminal set, bad probabilities, ...)."""


class InputError(SuperposeError, ValueError):
    """Invalid numeric input (non-finite values, shape mismatch, ...)."""


class IngestionError(InputError):
    """A dataset file violates the column schema or physical plausibility."""


class StructuralError(SuperposeError):
    """Internal structure is corrupt, e.g. an unresolved abstraction id."""


class UndefinedElasticityError(SuperposeError, ArithmeticError):
    """Elasticity requested at a point where the prediction is zero."""
