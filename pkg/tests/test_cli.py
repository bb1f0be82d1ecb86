# tests/test_cli.py
import json

from app.cli.commands import EXIT_ALL_FAILED, EXIT_FATAL, EXIT_OK, main
from app.services.data.tabular import load_cohort


def test_version(capsys):
    assert main(["--version"]) == EXIT_OK
    assert "0.1.0" in capsys.readouterr().out


def test_usage_error_is_fatal(capsys):
    assert main(["run"]) == EXIT_FATAL
    assert "--config" in capsys.readouterr().err


def test_synth_writes_cohort_and_prints_transition_matrix(capsys, tmp_path):
    out = tmp_path / "cohort.csv"
    assert main(["synth", "--out", str(out), "--seed", "3"]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "y2=0" in printed and "y1=1" in printed
    assert load_cohort(out).n_patients == 300


def test_synth_is_deterministic_per_seed(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["synth", "--out", str(a), "--seed", "5"])
    main(["synth", "--out", str(b), "--seed", "5"])
    assert a.read_bytes() == b.read_bytes()


def test_synth_from_experiment_config_uses_master_seed(tmp_path, write_config, small_synth_config):
    config = write_config(small_synth_config)
    bare = write_config(small_synth_config["dataset"]["synth"], name="synth.json")
    out = tmp_path / "from_config.csv"
    direct = tmp_path / "direct.csv"
    main(["synth", "--config", str(config), "--out", str(out)])
    main(["synth", "--config", str(bare), "--out", str(direct), "--seed", str(small_synth_config["seed"])])
    assert load_cohort(out).n_patients == small_synth_config["dataset"]["synth"]["n_patients"]
    assert out.read_bytes() == direct.read_bytes()


def test_run_writes_report(write_config, small_synth_config, tmp_path):
    config = write_config(small_synth_config)
    out = tmp_path / "cli_report"
    assert main(["run", "--config", str(config), "--out", str(out)]) == EXIT_OK
    payload = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert payload["config"]["seed"] == 1
    assert all(m["status"] == "ok" for m in payload["models"].values())


def test_run_seed_override_changes_results(write_config, small_synth_config, tmp_path):
    config = write_config(small_synth_config)
    main(["run", "--config", str(config), "--out", str(tmp_path / "s1")])
    main(["run", "--config", str(config), "--out", str(tmp_path / "s2"), "--seed", "2"])
    first = json.loads((tmp_path / "s1" / "report.json").read_text(encoding="utf-8"))
    second = json.loads((tmp_path / "s2" / "report.json").read_text(encoding="utf-8"))
    assert second["config"]["seed"] == 2
    assert first["seeds"]["split_plan"] != second["seeds"]["split_plan"]


def test_run_invalid_config_exits_with_fatal_code(write_config):
    config = write_config({"dataset": {"synth": {}}, "n_splits": 0})
    assert main(["run", "--config", str(config)]) == EXIT_FATAL


def test_run_missing_config_file(capsys, tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == EXIT_FATAL
    assert "file not found" in capsys.readouterr().err


def test_run_broken_json_exits_with_fatal_code(capsys, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    assert main(["run", "--config", str(path)]) == EXIT_FATAL
    assert "invalid JSON" in capsys.readouterr().err


def test_run_rejects_zero_jobs(write_config, small_synth_config):
    config = write_config(small_synth_config)
    assert main(["run", "--config", str(config), "--jobs", "0"]) == EXIT_FATAL


def test_run_exits_with_two_when_every_model_fails(capsys, write_config, tmp_path, make_cohort_frame):
    frame = make_cohort_frame().drop(columns=[f"fu1_{i}" for i in range(1, 6)])
    data = tmp_path / "no_fu1.csv"
    frame.to_csv(data, index=False)
    config = write_config({
        "dataset": {"path": str(data)},
        "models": [{"name": "radiomics_fu1"}, {"name": "delta"}],
        "n_splits": 20,
        "min_occurrences": 2,
        "out_dir": str(tmp_path / "out"),
    })
    assert main(["run", "--config", str(config)]) == EXIT_ALL_FAILED
    assert "model radiomics_fu1 failed" in capsys.readouterr().err
    assert (tmp_path / "out" / "report.json").exists()


def test_validate_ok(capsys, write_config, small_synth_config):
    config = write_config(small_synth_config)
    assert main(["validate", "--config", str(config)]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[-1] == "ok"
    assert json.loads(lines[0])["code"] == "cohort"


def test_validate_reports_fatal_diagnostic(capsys, write_config):
    config = write_config({"dataset": {"synth": {}}, "n_splits": 3, "min_occurrences": 5})
    assert main(["validate", "--config", str(config)]) == EXIT_FATAL
    codes = [json.loads(line)["code"] for line in capsys.readouterr().out.strip().splitlines()]
    assert "min_occurrences_unsatisfiable" in codes


def test_validate_invalid_schema(capsys, write_config):
    config = write_config({"dataset": {"synth": {"alpha": [1.0]}}})
    assert main(["validate", "--config", str(config)]) == EXIT_FATAL
    first = capsys.readouterr().out.strip().splitlines()[0]
    assert json.loads(first)["code"] == "config_invalid"


def test_predict_writes_csv(write_config, small_synth_config, tmp_path):
    config = write_config(small_synth_config)
    new = tmp_path / "new.csv"
    new.write_text("patient_id,base_1,base_2,base_3,base_4,base_5\nN1,0.1,0.2,-0.3,0.4,0.0\n", encoding="utf-8")
    out = tmp_path / "pred.csv"
    assert main(["predict", "--config", str(config), "--input", str(new), "--out", str(out)]) == EXIT_OK
    header = out.read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("patient_id,p_y1_mean")


def test_synth_rejects_non_distribution_feature_source(capsys, write_config, tmp_path):
    bare = write_config({"n_features": 1, "alpha": [1.0], "features": [{"name": "shuffle", "params": {}}]}, name="synth.json")
    assert main(["synth", "--config", str(bare), "--out", str(tmp_path / "c.csv")]) == EXIT_FATAL
    assert "Unknown distribution" in capsys.readouterr().err


def test_synth_bad_distribution_params_exit_with_fatal_code(capsys, write_config, tmp_path):
    bare = write_config({"n_features": 1, "alpha": [1.0], "features": [{"name": "normal", "params": {"mean": 0.0}}]}, name="synth.json")
    assert main(["synth", "--config", str(bare), "--out", str(tmp_path / "c.csv")]) == EXIT_FATAL
    assert "Invalid parameters" in capsys.readouterr().err
