# app/cli/commands.py
import argparse
import json
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from pydantic import ValidationError

from .dependencies import get_experiment_config, get_jobs, get_synth_config
from ..services.core.config import log
from ..services.core.errors import LongitError
from ..services.data.synthgen import format_transition_matrix, generate, transition_matrix
from ..services.data.tabular import write_cohort
from ..services.operations.experiment import run_experiment
from ..services.operations.prospective import predict_from_config
from ..services.operations.report import CSV_FLOAT_FORMAT, write_report
from ..services.operations.validation import Diagnostic, diagnose

VERSION = "0.1.0"

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_ALL_FAILED = 2


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_FATAL


# ---------------------------------------------------------------------------
# --- Subcommands -----------------------------------------------------------
# ---------------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    """Generate a synthetic cohort and print its (y1, y2) transition matrix."""
    synth = get_synth_config(args.config, args.seed)
    cohort = generate(synth)
    write_cohort(cohort, args.out)
    print(format_transition_matrix(transition_matrix(cohort)))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    """Run the experiment roster and write the report files."""
    config = get_experiment_config(args.config, args.seed, args.out)
    report = run_experiment(config, n_jobs=get_jobs(args.jobs))
    write_report(report, config.out_dir)
    for name in report.failed:
        print(f"model {name} failed: {report.models[name].error}", file=sys.stderr)
    if not report.succeeded:
        return EXIT_ALL_FAILED
    print(f"{len(report.succeeded)} model(s) succeeded; report in {config.out_dir}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    """Check a config and its dataset without training; one JSON diagnostic per line."""
    try:
        diagnostics = diagnose(get_experiment_config(args.config))
    except ValidationError as e:
        diagnostics = [Diagnostic("fatal", "config_invalid", f"{e.error_count()} validation error(s): {e}")]
    except (LongitError, OSError) as e:
        diagnostics = [Diagnostic("fatal", "config_invalid", f"{type(e).__name__}: {e}")]
    for d in diagnostics:
        print(json.dumps(d.as_dict()))
    if any(d.level == "fatal" for d in diagnostics):
        return EXIT_FATAL
    print("ok")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    """Predict both follow-up responses for new patients with the split ensemble."""
    config = get_experiment_config(args.config, args.seed)
    result = predict_from_config(config, args.input, n_jobs=get_jobs(args.jobs))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    result.frame.to_csv(args.out, index=False, float_format=CSV_FLOAT_FORMAT, na_rep="", lineterminator="\n")
    print(f"{len(result)} prediction(s) written to {args.out}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "synth": cmd_synth,
    "run": cmd_run,
    "validate": cmd_validate,
    "predict": cmd_predict,
}


# ---------------------------------------------------------------------------
# --- Parser ----------------------------------------------------------------
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longit", description="Probabilistic longitudinal response prediction.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help=cmd_synth.__doc__)
    synth.add_argument("--config", type=Path, default=None,
                       help="SynthConfig or experiment config (JSON); defaults apply when omitted.")
    synth.add_argument("--out", type=Path, required=True, help="Cohort CSV to write.")
    synth.add_argument("--seed", type=int, default=None, help="Override the config seed.")

    run = sub.add_parser("run", help=cmd_run.__doc__)
    run.add_argument("--config", type=Path, required=True, help="Experiment config (JSON).")
    run.add_argument("--out", type=Path, default=None, help="Report directory (overrides out_dir).")
    run.add_argument("--seed", type=int, default=None, help="Override the config seed.")
    run.add_argument("--jobs", type=int, default=None, help="Parallel workers over splits (-1 = all cores).")

    validate = sub.add_parser("validate", help=cmd_validate.__doc__)
    validate.add_argument("--config", type=Path, required=True, help="Experiment config (JSON).")

    predict = sub.add_parser("predict", help=cmd_predict.__doc__)
    predict.add_argument("--config", type=Path, required=True, help="Experiment config (JSON).")
    predict.add_argument("--input", type=Path, required=True, help="CSV of patients with baseline features.")
    predict.add_argument("--out", type=Path, required=True, help="Prediction CSV to write.")
    predict.add_argument("--seed", type=int, default=None, help="Override the config seed.")
    predict.add_argument("--jobs", type=int, default=None, help="Parallel workers over splits (-1 = all cores).")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv`` and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # --help / --version exit 0; usage errors are configuration errors
        return EXIT_OK if e.code in (0, None) else EXIT_FATAL

    jobs = getattr(args, "jobs", None)
    if jobs is not None and (jobs == 0 or jobs < -1):
        return _fail(f"--jobs must be a positive count or -1, got {jobs}")
    for name in ("config", "input"):
        path = getattr(args, name, None)
        if path is not None and not path.is_file():
            return _fail(f"--{name}: file not found: {path}")

    try:
        return COMMANDS[args.command](args)
    except ValidationError as e:
        log.error(f"Invalid configuration: {e.error_count()} error(s)")
        return _fail(f"invalid configuration\n{e}")
    except (LongitError, OSError) as e:
        log.error(f"{type(e).__name__}: {e}")
        return _fail(str(e))
