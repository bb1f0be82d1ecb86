# app/services/core/constants.py
from typing import Dict, Tuple

# CSV column conventions
PATIENT_ID_COLUMN = "patient_id"
LABEL_COLUMNS: Tuple[str, str] = ("y1", "y2")
BASELINE_PREFIX = "base_"
FU1_PREFIX = "fu1_"
MONTHS_FU1 = "months_fu1"
MONTHS_FU2 = "months_fu2"

# Classifier and evaluation defaults
DEFAULT_C = 1.0
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 1000
# Largest first-order optimality violation accepted as converged
KKT_TOL = 1e-4
PROBA_CLIP = 1e-12
DEFAULT_THRESHOLD = 0.5
DEFAULT_K_SAMPLES = 100
LOG_LOSS_EPS = 1e-15
RELIABILITY_BINS = 10
CI_Z = 1.96

# Split plan defaults
DEFAULT_TEST_FRACTION = 0.4
DEFAULT_MIN_OCCURRENCES = 5
DEFAULT_MAX_RETRIES = 20
DEFAULT_N_SPLITS: Dict[str, int] = {"synth": 230, "path": 40}

# Density
KDE_MIN_BANDWIDTH = 0.01
KDE_GRID_POINTS = 101

# Resampling
SMOTE_K = 5

# Delta features: |base| below this falls back to the absolute change
DELTA_ZERO = 1e-12

# Synthetic cohort
SYNTH_N_PATIENTS = 300
SYNTH_ALPHA: Tuple[float, ...] = (0.4, 0.8, 0.5, 0.7, 0.2)
SYNTH_P_EXTREME_LOW_TO_PROGRESSIVE = 0.90
SYNTH_P_MODERATE_POS_TO_STABLE = 0.50
SYNTH_MIN_SEED_ROWS = 10

# Skill score names, in report order
METRICS: Tuple[str, ...] = ("accuracy", "balanced_accuracy", "recall", "specificity", "roc_auc")
