"""Exception types shared across the toolkit."""


class DomainError(ValueError):
    """A value violates a mathematical or physical precondition."""


class InputError(ValueError):
    """Malformed, inconsistent, or insufficient input data."""


class StateError(RuntimeError):
    """An operation was invoked on an object in the wrong state."""


class ConfigError(InputError):
    """A configuration document failed strict validation."""
