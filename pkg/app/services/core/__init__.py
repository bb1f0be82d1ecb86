# app/services/core/__init__.py
from .config import log, DEFAULT_JOBS, DEFAULT_OUT_DIR, SHOW_PROGRESS
from .errors import (
    LongitError,
    CohortParseError,
    CohortValidationError,
    SplitPlanError,
    ModelFitError,
    ResampleError,
    DensityError,
    ConfigError,
    PipelineError,
)
from .utils import timeit, derive_seed, round_half_up, as_binary_vector, as_matrix
