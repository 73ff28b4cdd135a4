"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments that break its contract."""


class ConfigError(ValueError):
    """A configuration object is internally inconsistent."""


class DataValidationError(ValueError):
    """Input data violates a documented invariant (e.g. non-unit field label)."""


class GenerationError(RuntimeError):
    """Procedural scene generation failed; message echoes the seed."""
