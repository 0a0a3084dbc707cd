import json
import subprocess
import sys

import pytest

from ppmupdate.cli import main

SMALL = {"generator": {"n_cases": 150, "seed": 3}, "max_iterations": 2, "seed": 1,
         "batch_space": [{"name": "n_trees", "kind": "int", "bounds": [5, 10]},
                         {"name": "max_depth", "kind": "int", "bounds": [2, 6]},
                         {"name": "min_samples_leaf", "kind": "int", "bounds": [1, 3]},
                         {"name": "max_features_fraction", "kind": "real", "bounds": [0.3, 1]}]}


def test_generate_stats_label_encode_train(tmp_path, capsys):
    log = tmp_path / "l.xes"
    assert main(["generate", "--out", str(log)]) == 0
    assert main(["stats", "--log", str(log)]) == 0
    out = capsys.readouterr().out
    assert "cases=2000" in out and "activities=19" in out
    labels = tmp_path / "lab.csv"
    assert main(["label", "--log", str(log), "--fast-case", "--out", str(labels)]) == 0
    assert main(["label", "--log", str(log), "--formula", 'F("Send offer")',
                 "--out", str(tmp_path / "ltl.csv")]) == 0
    data = tmp_path / "d.csv"
    assert main(["encode", "--log", str(log), "--labels", str(labels), "--prefix-cap", "5",
                 "--out", str(data)]) == 0
    assert (tmp_path / "d.schema.json").exists()
    for fam in ("batch", "incremental"):
        model = tmp_path / f"{fam}.bin"
        assert main(["train", "--data", str(data), "--family", fam, "--hp", '{"n_trees": 3}',
                     "--seed", "4", "--out", str(model), "--threads", "1"]) == 0
        assert model.read_bytes()[:4] == b"PPMF"


def test_experiment_then_report(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    out = tmp_path / "run"
    assert main(["experiment", "--config", str(cfg), "--out-dir", str(out)]) == 0
    capsys.readouterr()
    assert main(["report", "--in", str(out)]) == 0
    text = capsys.readouterr().out
    rows = [line for line in text.splitlines() if line.startswith("M") and ":" in line]
    assert len(rows) == 4
    report = json.loads((out / "report.json").read_text())
    st = report["strategies"]
    assert st["S2"]["total_seconds"] >= st["S1"]["total_seconds"]
    assert f"{st['S0']['auc']:.3f}" in text
    assert (out / "plot_data.csv").read_text().count("\n") == 5
    assert (out / "plot_prefix_auc.csv").exists()


def test_config_echo_includes_seed(tmp_path, capsys):
    assert main(["generate", "--seed", "9", "--out", str(tmp_path / "x.xes"),
                 "--config", _write(tmp_path, {"n_cases": 20})]) == 0
    echo = capsys.readouterr().out.splitlines()[0]
    assert echo.startswith("# config ")
    assert json.loads(echo[len("# config "):])["generator"]["seed"] == 9


def _write(tmp_path, obj):
    p = tmp_path / "g.json"
    p.write_text(json.dumps(obj))
    return str(p)


@pytest.mark.parametrize("argv", [
    ["stats", "--log", "x", "--bogus"],
    ["nonsense"],
    [],
    ["label", "--log", "x", "--out", "y"],
    ["train", "--data", "d", "--out", "m", "--family", "svm"],
    ["stats", "--log", "x", "--threads", "0"],
])
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_runtime_errors_exit_2(tmp_path, capsys):
    assert main(["stats", "--log", str(tmp_path / "missing.xes")]) == 2
    assert "not found" in capsys.readouterr().err
    bad = tmp_path / "bad.xes"
    bad.write_text("<log><trace>")
    assert main(["stats", "--log", str(bad)]) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"unknown_key": 1}))
    assert main(["experiment", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2


def test_schema_mismatch_is_runtime_error(tmp_path, capsys):
    log = tmp_path / "l.xes"
    main(["generate", "--config", _write(tmp_path, {"n_cases": 30}), "--out", str(log)])
    main(["label", "--log", str(log), "--fast-case", "--out", str(tmp_path / "lab.csv")])
    main(["encode", "--log", str(log), "--labels", str(tmp_path / "lab.csv"), "--prefix-cap",
          "3", "--out", str(tmp_path / "d.csv")])
    capsys.readouterr()
    (tmp_path / "partial.csv").write_text("case_id,label\ncase_01,1\n")
    assert main(["encode", "--log", str(log), "--labels", str(tmp_path / "partial.csv"),
                 "--out", str(tmp_path / "e.csv")]) == 2
    assert "no label" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "ppmupdate", "--help"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and "experiment" in r.stdout
