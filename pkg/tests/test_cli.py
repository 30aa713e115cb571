import json

import pytest

from superpose import cli


def test_synth_then_diagnose(tmp_path, capsys):
    path = tmp_path / "s.csv"
    assert cli.main(["synth", str(path), "--n", "50", "--seed", "3"]) == cli.EXIT_OK
    capsys.readouterr()
    assert cli.main(["diagnose", str(path), "--json"]) == cli.EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["n"] == 50 and "Vu" in out["columns"]
    assert cli.main(["diagnose", "synth:n=30"]) == cli.EXIT_OK
    assert "skewness" in capsys.readouterr().out


def test_run_and_analyze(tmp_path, capsys):
    out = tmp_path / "res"
    argv = ["run", "--dataset", "synth:n=60", "--n-runs", "2", "--population-size", "8",
            "--max-generations", "3", "--k-folds", "3", "--output-dir", str(out)]
    assert cli.main(argv) == cli.EXIT_OK
    text = capsys.readouterr().out
    assert "paired test RMSE" in text and (out / "analysis.json").exists()
    assert cli.main(["analyze", str(out), "--n-boot", "200", "--json"]) == cli.EXIT_OK
    assert json.loads(capsys.readouterr().out)["paired"]["run_indices"] == [0, 1]


@pytest.mark.parametrize("argv, code", [
    (["diagnose", "/nonexistent/file.csv"], cli.EXIT_INPUT),
    (["run", "--mode", "neither"], cli.EXIT_CONFIG),
    (["run", "--config", "/nonexistent/cfg.txt"], cli.EXIT_INPUT),
    (["diagnose", "synth:bad=1"], cli.EXIT_CONFIG),
])
def test_exit_codes(argv, code, tmp_path, capsys):
    assert cli.main(argv) == code
    assert capsys.readouterr().err


def test_analyze_empty_directory(tmp_path, capsys):
    assert cli.main(["analyze", str(tmp_path)]) == cli.EXIT_INPUT


def test_bad_csv_is_input_error(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("x,y\n1,2\n")
    assert cli.main(["diagnose", str(p)]) == cli.EXIT_INPUT
    assert "Vu" in capsys.readouterr().err
