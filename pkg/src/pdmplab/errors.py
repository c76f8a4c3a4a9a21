"""Exception types shared across the package."""


class PdmplabError(Exception):
    """Base class for all package errors."""


class ShapeError(PdmplabError):
    """Operands have incompatible dimensions. Message names both shapes."""


class InputError(PdmplabError):
    """An argument value is outside its documented domain."""


class SpecValidationError(InputError):
    """A dataset spec violates one of its bounds. Message names the bound."""


class DegenerateContributionError(PdmplabError):
    """All logit contributions in the denominator are zero."""


class ConfigError(PdmplabError):
    """A run configuration is malformed or inconsistent. CLI exit code 2."""


class DivergenceError(PdmplabError):
    """Training produced a non-finite loss. CLI exit code 3."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class NumericError(PdmplabError):
    """A numeric evaluation returned a non-finite value."""
