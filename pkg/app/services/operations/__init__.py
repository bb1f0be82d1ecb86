# app/services/operations/__init__.py
from .pipeline import (
    ModelSpec,
    PipelineSettings,
    ProbaTable,
    SampledLabelMatrix,
    build_patient_densities,
    evaluate_calibration,
    run_benchmark,
    run_longitudinal,
    run_step1,
    sample_intermediate_labels,
)
from .experiment import ExperimentReport, run_experiment
from .prospective import ProspectiveResult, predict_prospective
from .report import write_report
