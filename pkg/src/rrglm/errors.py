"""Exception types raised across the package."""


class InputError(ValueError):
    """Malformed or out-of-domain input (shapes, finiteness, ranges)."""


class RuleUsageError(ValueError):
    """A threshold rule was used in a context it does not support."""


class DescentError(RuntimeError):
    """The objective increased during an iteration that must be monotone."""


class EmptyExtractionError(ValueError):
    """Feature extraction requested from a rank-zero estimate."""
