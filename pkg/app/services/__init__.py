# app/services/__init__.py
from .data.tabular import Cohort, SplitPlan, load_cohort, make_splits, write_cohort
from .data.synthgen import SynthConfig, generate
from .operations.experiment import ExperimentReport, run_experiment
