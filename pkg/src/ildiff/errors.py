"""Exception hierarchy.

Every error raised by the package derives from :class:`ILDiffError`; the CLI
maps the three families below onto its exit codes.
"""


class ILDiffError(Exception):
    exit_code = 1


class ValidationError(ILDiffError, ValueError):
    """Bad input: wrong shapes, invalid records, out-of-range parameters."""

    exit_code = 2


class ShapeError(ValidationError):
    pass


class GapError(ValidationError):
    pass


class FormatError(ValidationError):
    pass


class ManifestValidationError(ValidationError):
    pass


class SpecError(ValidationError):
    pass


class ParameterError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class EmptyInputError(ValidationError):
    pass


class SizeError(ValidationError):
    pass


class UndefinedMetricError(ValidationError):
    pass


class CompatibilityError(ValidationError):
    pass


class NonConvergenceError(ILDiffError):
    """A training stage failed to reach its configured threshold."""

    exit_code = 3

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class DependencyError(ILDiffError):
    """A stage was asked to run without the checkpoints it depends on."""

    exit_code = 4
