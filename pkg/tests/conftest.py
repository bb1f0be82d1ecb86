# tests/conftest.py
import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from app.services.data.synthgen import SynthConfig, generate
from app.services.data.tabular import Cohort, make_splits

# Small experiment sizes keep the suite fast; the acceptance runs live in test_acceptance.py
SMALL_N = 100
SMALL_SPLITS = 20
SMALL_MIN_OCC = 2


@pytest.fixture(scope="session")
def synth_cohort() -> Cohort:
    return generate(SynthConfig(n_patients=SMALL_N, seed=1))


@pytest.fixture(scope="session")
def synth_plan(synth_cohort):
    return make_splits(synth_cohort, n_splits=SMALL_SPLITS, test_fraction=0.4, seed=1, min_occurrences=SMALL_MIN_OCC)


def cohort_frame(n: int = SMALL_N, seed: int = 5, fu1_share: float = 0.75) -> pd.DataFrame:
    """Wide cohort table with fu1 features for part of the patients, age and follow-up months."""
    base = generate(SynthConfig(n_patients=n, seed=seed))
    rng = np.random.default_rng(seed)
    m1 = rng.uniform(3.0, 15.0, n)
    data = {
        "patient_id": [f"C{j:03d}" for j in range(n)],
        "y1": base.y1,
        "y2": base.y2,
        "age": rng.integers(30, 80, n).astype(float),
        "months_fu1": m1,
        "months_fu2": m1 + rng.uniform(3.0, 15.0, n),
    }
    has_fu1 = rng.random(n) < fu1_share
    for f, name in enumerate(base.feature_names_baseline):
        suffix = name.removeprefix("base_")
        data[f"base_{suffix}"] = base.baseline[:, f]
        fu1 = base.baseline[:, f] * 1.1 + rng.normal(0.0, 0.05, n)
        data[f"fu1_{suffix}"] = np.where(has_fu1, fu1, np.nan)
    return pd.DataFrame(data)


@pytest.fixture
def cohort_csv(tmp_path) -> Path:
    path = tmp_path / "cohort.csv"
    cohort_frame().to_csv(path, index=False, na_rep="")
    return path


@pytest.fixture
def write_config(tmp_path):
    def _write(payload: dict, name: str = "config.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def small_synth_config(tmp_path) -> dict:
    return {
        "dataset": {"synth": {"n_patients": SMALL_N}},
        "n_splits": SMALL_SPLITS,
        "min_occurrences": SMALL_MIN_OCC,
        "k_samples": 20,
        "seed": 1,
        "out_dir": str(tmp_path / "report"),
    }


@pytest.fixture
def make_cohort_frame():
    return cohort_frame
