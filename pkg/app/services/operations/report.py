# app/services/operations/report.py
"""Serialization of an ExperimentReport into deterministic files.

report.json uses Python's shortest round-trip float repr, CSV files use
``%.17g``; both parse back to the same doubles. NaN is written as ``null``
in JSON and as an empty cell in CSV. Nothing time- or host-dependent is
written.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from .experiment import ExperimentReport
from ..core.config import log
from ..core.constants import METRICS

CSV_FLOAT_FORMAT = "%.17g"


def _clean(value: Any) -> Any:
    """JSON-ready copy: numpy scalars to Python, NaN to None, tuples to lists."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) or math.isinf(value) else value
    return value


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, na_rep="", lineterminator="\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# --- Tables ----------------------------------------------------------------
# ---------------------------------------------------------------------------

def scores_frame(report: ExperimentReport) -> pd.DataFrame:
    rows = []
    for name, rec in report.models.items():
        if not rec.ok:
            continue
        for metric in METRICS:
            m = rec.summary[metric]
            rows.append(
                {
                    "model": name,
                    "metric": metric,
                    "mean": m.mean,
                    "ci_low": m.ci_low,
                    "ci_high": m.ci_high,
                    "n_valid": m.n_valid,
                    "n_splits": rec.summary.n_splits,
                }
            )
    return pd.DataFrame(rows, columns=["model", "metric", "mean", "ci_low", "ci_high", "n_valid", "n_splits"])


def calibration_frame(report: ExperimentReport) -> pd.DataFrame:
    rows = [
        {
            "model": row.model,
            "stage": row.stage,
            "brier_mean": row.brier_mean,
            "brier_sd": row.brier_sd,
            "log_loss_mean": row.log_loss_mean,
            "log_loss_sd": row.log_loss_sd,
            "n_splits": row.n_splits,
        }
        for cal in report.calibration.values()
        for row in cal.rows
    ]
    return pd.DataFrame(
        rows, columns=["model", "stage", "brier_mean", "brier_sd", "log_loss_mean", "log_loss_sd", "n_splits"]
    )


def reliability_frame(report: ExperimentReport, model: str) -> pd.DataFrame:
    cal = report.calibration[model]
    raw = cal.reliability_raw.to_frame()
    iso = cal.reliability_isotonic.to_frame()
    raw.insert(0, "stage", "raw")
    iso.insert(0, "stage", "isotonic")
    return pd.concat([raw, iso], ignore_index=True)


def patient_probas_frame(report: ExperimentReport) -> pd.DataFrame:
    """Step-2 plot data in long form.

    ``record`` is one of: ``proba`` (key = split, x = recorded probability),
    ``kde`` (key = grid index, x = grid point, y = pdf), ``sample``
    (key = draw index, x = clipped sampled probability, y = label) and
    ``summary`` (x = bandwidth, y = KDE mass at or above the threshold).
    """
    step2 = report.step2
    ids = report.patient_ids
    threshold = step2.matrix.threshold
    frames = []

    t = step2.table
    frames.append(pd.DataFrame({
        "patient_id": [ids[j] for j in t.patient_idx], "record": "proba",
        "key": t.split_idx, "x": t.proba, "y": np.nan,
    }))

    pdf = step2.pdf_grid()
    n, g = pdf.shape
    frames.append(pd.DataFrame({
        "patient_id": np.repeat(np.asarray(ids, dtype=object), g), "record": "kde",
        "key": np.tile(np.arange(g), n), "x": np.tile(step2.grid, n), "y": pdf.ravel(),
    }))

    m = step2.matrix
    k = m.k
    frames.append(pd.DataFrame({
        "patient_id": np.repeat(np.asarray(ids, dtype=object), k), "record": "sample",
        "key": np.tile(np.arange(k), n), "x": m.samples.ravel(), "y": m.labels.ravel().astype(np.float64),
    }))

    frames.append(pd.DataFrame({
        "patient_id": list(ids), "record": "summary", "key": 0,
        "x": [kde.bandwidth for kde in step2.densities], "y": step2.mass_above(threshold),
    }))
    frame = pd.concat(frames, ignore_index=True)
    order = {pid: i for i, pid in enumerate(ids)}
    rank = {"proba": 0, "kde": 1, "sample": 2, "summary": 3}
    frame["_p"] = frame["patient_id"].map(order)
    frame["_r"] = frame["record"].map(rank)
    frame = frame.sort_values(["_p", "_r", "key"], kind="stable").drop(columns=["_p", "_r"])
    return frame.reset_index(drop=True)


def pca_frame(report: ExperimentReport) -> pd.DataFrame:
    proj = report.pca.projection
    return pd.DataFrame({
        "patient_id": list(report.patient_ids),
        "y1": report.y1,
        "y2": report.y2,
        "pc1": proj[:, 0],
        "pc2": proj[:, 1],
    })


# ---------------------------------------------------------------------------
# --- report.json -----------------------------------------------------------
# ---------------------------------------------------------------------------

def report_dict(report: ExperimentReport, files: List[str]) -> Dict[str, Any]:
    models = {}
    for name, rec in report.models.items():
        models[name] = {
            "status": rec.status,
            "imbalance": rec.imbalance,
            "include_covariates": rec.include_covariates,
            "n_patients": rec.n_patients,
            "degenerate_splits": rec.degenerate_splits,
            "flags": rec.flags,
            "error": rec.error,
            "summary": rec.summary.as_dict() if rec.summary is not None else None,
        }
    payload: Dict[str, Any] = {
        "config": report.config,
        "cohort": report.cohort_summary,
        "split_plan": report.plan_summary,
        "seeds": report.seeds,
        "models": models,
        "failures": {name: report.models[name].error for name in report.failed},
        "calibration": calibration_frame(report).to_dict(orient="records"),
        "transition_matrix": {"rows": "y1", "columns": "y2", "counts": report.transition},
        "pca": None if report.pca is None else {
            "explained_variance": report.pca.explained_variance,
            "explained_variance_ratio": report.pca.explained_variance_ratio,
            "components": report.pca.components,
        },
        "step2": None if report.step2 is None else {
            "k_samples": report.step2.matrix.k,
            "threshold": report.step2.matrix.threshold,
            "grid_points": int(report.step2.grid.size),
            "recorded_per_patient_min": int(report.step2.table.counts().min()),
            "sampled_label_rate": float(report.step2.matrix.labels.mean()),
        },
        "metadata": report.metadata,
        "files": files,
    }
    return _clean(payload)


def write_report(report: ExperimentReport, out_dir: str | Path) -> List[Path]:
    """Write every report file into ``out_dir`` and return their paths (report.json last)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    def put(frame: pd.DataFrame, name: str) -> None:
        path = out / name
        _write_csv(frame, path)
        written.append(path)

    put(scores_frame(report), "scores.csv")
    put(calibration_frame(report), "calibration.csv")
    for model in report.calibration:
        put(reliability_frame(report, model), f"reliability_{model}.csv")
    if report.step2 is not None:
        put(patient_probas_frame(report), "patient_probas.csv")
    if report.pca is not None:
        put(pca_frame(report), "pca.csv")

    payload = report_dict(report, [p.name for p in written])
    path = out / "report.json"
    path.write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    written.append(path)
    log.info(f"Report written to {out} ({len(written)} files)")
    return written
