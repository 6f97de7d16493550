import csv
import json
import math
import shutil
import subprocess

import pytest

from nmlz.cli import main

TWO_MODE = {"kind": "two_mode", "beta": 1.0, "g": {"abs": 0.5, "phase": 0.0}}
FOUR_MODE = {
    "kind": "four_mode",
    "b1": -1.0,
    "b2": 0.5,
    "E1": 5.0,
    "E2": 1.0,
    "g": {"abs": 0.5, "phase": 0.0},
    "gamma": {"abs": 0.6, "phase": 0.0},
}


def write_config(tmp_path, cfg, name):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_populations_with_analytic_columns(tmp_path):
    config = write_config(tmp_path, FOUR_MODE, "solvable")
    assert main(["populations", "--config", config, "--out", str(tmp_path), "--seed-mode", "A_up"]) == 0
    rows = read_csv(tmp_path / "populations_solvable.csv")
    assert [row["mode"] for row in rows] == ["A_up", "A_down", "B_up", "B_down"]
    for row in rows:
        numeric, exact = float(row["n_stimulated_from_A_up"]), float(row["analytic_stimulated_from_A_up"])
        assert numeric == pytest.approx(exact, rel=1e-5, abs=1e-8)


def test_analytic_only_outside_solvable_class(tmp_path):
    cfg = dict(FOUR_MODE, gamma={"abs": 0.6, "phase": math.pi / 2})
    config = write_config(tmp_path, cfg, "broken")
    assert main(["populations", "--config", config, "--out", str(tmp_path), "--analytic-only"]) == 5
    assert not (tmp_path / "populations_broken.csv").exists()


def test_smatrix_json_and_tag(tmp_path):
    config = write_config(tmp_path, TWO_MODE, "pair")
    assert main(["smatrix", "--config", config, "--out", str(tmp_path), "--format", "json", "--tag", "run1"]) == 0
    data = json.loads((tmp_path / "smatrix_run1.json").read_text())
    re, im = data["M"][0][0]
    assert re * re + im * im == pytest.approx(math.exp(math.pi / 4), rel=1e-6)
    assert data["labels"] == ["A_1", "B_1"]


def test_spectrum_outputs(tmp_path):
    config = write_config(tmp_path, TWO_MODE, "pair")
    assert main(["spectrum", "--config", config, "--out", str(tmp_path), "--samples", "201"]) == 0
    rows = read_csv(tmp_path / "spectrum_pair.csv")
    assert len(rows) == 201
    windows = read_csv(tmp_path / "spectrum_pair_windows.csv")
    assert len(windows) == 1 and windows[0]["label"] == "g"


def test_squeeze_outputs(tmp_path):
    config = write_config(tmp_path, TWO_MODE, "pair")
    assert main(["squeeze", "--config", config, "--out", str(tmp_path), "--samples", "19"]) == 0
    reports = json.loads((tmp_path / "squeeze_pair.json").read_text())
    assert reports[0]["x_plus_sq"] * reports[0]["x_minus_sq"] == pytest.approx(0.25, rel=1e-6)
    assert len(read_csv(tmp_path / "squeeze_pair_curves.csv")) == 19


def test_sweep_parallel_keeps_order(tmp_path):
    config = write_config(tmp_path, FOUR_MODE, "solvable")
    args = ["sweep", "--config", config, "--out", str(tmp_path), "--parameter", "gamma_abs", "--values", "0.4,0.0,0.2"]
    assert main(args + ["--jobs", "2", "--outputs", "populations,cpt,windows"]) == 0
    rows = read_csv(tmp_path / "sweep_solvable.csv")
    assert [float(row["gamma_abs"]) for row in rows] == [0.4, 0.0, 0.2]
    for row in rows:
        assert float(row["n_A_up"]) == pytest.approx(float(row["analytic_n_A_up"]), rel=1e-5)
        assert float(row["cpt_relative_residual"]) < 1e-6
    assert [row["n_windows"] for row in rows] == ["4", "2", "4"]


def test_theta_sweep_marks_unsolvable_points(tmp_path):
    config = write_config(tmp_path, FOUR_MODE, "solvable")
    args = ["sweep", "--config", config, "--out", str(tmp_path), "--parameter", "theta", "--range", "0", "3.141592653589793", "3"]
    assert main(args) == 0
    rows = read_csv(tmp_path / "sweep_solvable.csv")
    assert rows[1]["analytic_n_A_down"] == "nan"
    assert float(rows[1]["n_A_down"]) > 1e6 * float(rows[0]["n_A_down"])


def test_waveguide_outputs(tmp_path):
    config = write_config(tmp_path, FOUR_MODE, "solvable")
    assert main(["waveguide", "--config", config, "--out", str(tmp_path), "--z-scale", "2"]) == 0
    rows = read_csv(tmp_path / "waveguide_solvable.csv")
    assert [row["port"] for row in rows] == ["1", "2", "3", "4"]
    array = json.loads((tmp_path / "waveguide_solvable_array.json").read_text())
    assert array["kind"] == "waveguide" and array["z_scale"] == 2


def test_verify_report(tmp_path, capsys):
    config = write_config(tmp_path, FOUR_MODE, "solvable")
    assert main(["verify", "--config", config, "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "verify_report.json").read_text())
    assert report["pass"] is True
    names = {check["name"] for check in report["checks"]}
    assert {"pseudo_unitarity", "cpt_relative_residual", "waveguide_round_trip_relative"} <= names
    assert "PASS" in capsys.readouterr().out


def test_exit_codes(tmp_path):
    bad = write_config(tmp_path, {"kind": "four_mode", "b1": 0.0}, "bad")
    assert main(["smatrix", "--config", bad, "--out", str(tmp_path)]) == 3
    assert main(["smatrix", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 3
    config = write_config(tmp_path, TWO_MODE, "pair")
    assert main(["sweep", "--config", config, "--out", str(tmp_path), "--parameter", "g_abs"]) == 2
    blocker = tmp_path / "occupied"
    blocker.write_text("")
    assert main(["smatrix", "--config", config, "--out", str(blocker)]) == 7
    huge = write_config(tmp_path, dict(TWO_MODE, g={"abs": 5.0}), "huge")
    assert main(["smatrix", "--config", huge, "--out", str(tmp_path)]) == 4
    with pytest.raises(SystemExit) as exc:
        main(["smatrix", "--picture", "sideways"])
    assert exc.value.code == 2


@pytest.mark.skipif(shutil.which("nmlz") is None, reason="console script not installed")
def test_console_script_help():
    completed = subprocess.run(["nmlz", "--help"], capture_output=True, text=True, check=True)
    assert "verify" in completed.stdout
