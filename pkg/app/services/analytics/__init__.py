# app/services/analytics/__init__.py
from .calib import (
    IsotonicMap,
    ReliabilityCurve,
    apply_isotonic,
    brier_score,
    calibration_table,
    fit_isotonic,
    log_loss,
    reliability_curve,
)
from .metrics import ScoreSummary, SkillScores, pca_project, roc_auc, skill_scores, summarize_across_splits
