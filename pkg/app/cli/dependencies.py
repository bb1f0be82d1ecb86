# app/cli/dependencies.py
import json
from pathlib import Path
from typing import Any, Dict, Optional

from .models import ExperimentConfig, SynthConfig
from ..services.core.config import DEFAULT_JOBS, log
from ..services.core.errors import ConfigError


def read_json(path: Path) -> Dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        log.error(f"Config {path} is not valid JSON: {e}")
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return data


def get_experiment_config(path: Path, seed: Optional[int] = None, out: Optional[Path] = None) -> ExperimentConfig:
    """Parse an experiment config; ``--seed`` and ``--out`` override the file."""
    config = ExperimentConfig.model_validate(read_json(path))
    updates: Dict[str, Any] = {}
    if seed is not None:
        updates["seed"] = seed
    if out is not None:
        updates["out_dir"] = out
    if updates:
        config = ExperimentConfig.model_validate({**config.model_dump(), **updates})
    log.debug(f"Experiment config loaded from {path}: seed={config.seed}, dataset={config.dataset.kind}")
    return config


def get_synth_config(path: Optional[Path], seed: Optional[int] = None) -> SynthConfig:
    """Synthetic-cohort settings from a bare SynthConfig file or an experiment config.

    From an experiment config the cohort is seeded with the master seed, which
    is what ``run`` uses, so both commands produce the same cohort.
    """
    if path is None:
        synth = SynthConfig()
    else:
        data = read_json(path)
        if "dataset" in data:
            config = ExperimentConfig.model_validate(data)
            if config.dataset.synth is None:
                raise ConfigError(f"{path}: dataset is not synthetic")
            synth = config.dataset.synth.model_copy(update={"seed": config.seed})
        else:
            synth = SynthConfig.model_validate(data)
    if seed is not None:
        synth = synth.model_copy(update={"seed": seed})
    return synth


def get_jobs(jobs: Optional[int]) -> int:
    return DEFAULT_JOBS if jobs is None else jobs
