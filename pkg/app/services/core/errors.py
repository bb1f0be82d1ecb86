# app/services/core/errors.py


class LongitError(Exception):
    """Base class for every error raised by the package."""


class CohortParseError(LongitError, ValueError):
    """The cohort CSV cannot be parsed (bad shape or non-numeric cells)."""


class CohortValidationError(LongitError, ValueError):
    """The cohort parses but violates a domain rule."""


class SplitPlanError(LongitError, ValueError):
    pass


class ModelFitError(LongitError, RuntimeError):
    pass


class ResampleError(LongitError, ValueError):
    pass


class DensityError(LongitError, ValueError):
    pass


class ConfigError(LongitError, ValueError):
    pass


class PipelineError(LongitError, RuntimeError):
    pass
