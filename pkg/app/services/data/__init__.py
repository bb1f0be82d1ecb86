# app/services/data/__init__.py
from .tabular import (
    Cohort,
    ColumnSchema,
    Normalizer,
    PatientRecord,
    SplitPlan,
    UnlabeledCohort,
    apply_normalizer,
    filter_by_followup_interval,
    fit_normalizer,
    load_baseline_table,
    load_cohort,
    make_loo_splits,
    make_splits,
    write_cohort,
)
from .synthgen import SynthConfig, TransitionRules, FeatureDistribution, generate, transition_matrix
