"""Module to test the command line interface."""

import json
import pathlib

import pandas as pd
import pytest

from dissiped import main, validate
from dissiped.scenarios import build_harmonic_oscillator

TEST_DATA = pathlib.Path(__file__).parent / "test_data"
CUSTOM_SCENARIO = TEST_DATA / "scenarios_json" / "rotating_damped.json"


def test_analyze(capsys: pytest.CaptureFixture[str]) -> None:
    """Table is followed by the JSON report."""
    assert main.run(["analyze", "harmonic-oscillator", "--samples", "100"]) == main.EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("dissipativity")
    report = json.loads(out[out.index("\n{\n") + 1 :])
    assert report["assumptions_hold"] is True
    assert "Initial condition and gain list are demo choices." in report["notes"]


def test_analyze_cuk_singular_inputs(capsys: pytest.CaptureFixture[str]) -> None:
    """Cuk loses observability at the ends of the duty cycle range."""
    assert main.run(["analyze", "cuk", "--samples", "100", "--grid", "50"]) == main.EXIT_OK
    out = capsys.readouterr().out
    report = json.loads(out[out.index("\n{\n") + 1 :])
    assert report["detectability"]["pass"] is True
    assert any(note.startswith("Singular inputs at physical u") for note in report["notes"])


def test_analyze_failing_assumptions(tmp_path: pathlib.Path) -> None:
    """Expanding system gives exit code 3; unknown scenarios give exit code 2."""
    data = json.loads(CUSTOM_SCENARIO.read_text())
    data["system"]["A0"] = [[1.0, 0.0], [0.0, 1.0]]
    path = tmp_path / "expanding.json"
    path.write_text(json.dumps(data))
    assert main.run(["analyze", str(path)]) == main.EXIT_ASSUMPTION_FAILED
    assert main.run(["analyze", "boost-converter"]) == main.EXIT_PARSE_ERROR


def test_simulate(tmp_path: pathlib.Path) -> None:
    """CSV, descriptor and plot are written; existing outputs need -f."""
    args = [
        "simulate",
        "harmonic-oscillator",
        "--alpha",
        "1",
        "--t-final",
        "1",
        "--reference",
        "--constant-input",
        "--out",
        "run.csv",
        "--svg",
        "run.svg",
        "--out-dir",
        str(tmp_path),
    ]
    assert main.run(args) == main.EXIT_OK
    frame = pd.read_csv(tmp_path / "run.csv")
    assert list(frame.columns)[:3] == ["t", "x_1", "x_2"]
    assert (frame["V_eps"].diff().dropna() <= 1e-12).all()  # noqa: PLR2004
    assert (tmp_path / "run.svg").exists()
    with (tmp_path / "datapackage.json").open("r") as f:
        assert len(json.load(f)["resources"]) == 3  # noqa: PLR2004

    assert main.run(args) == main.EXIT_PARSE_ERROR
    assert main.run([*args, "-f"]) == main.EXIT_OK


def test_simulate_rejects_bad_gain() -> None:
    """Non-positive gains are parse errors."""
    with pytest.raises(SystemExit) as exc:
        main.run(["simulate", "harmonic-oscillator", "--alpha", "-1"])
    assert exc.value.code == main.EXIT_PARSE_ERROR


def test_simulate_blow_up(tmp_path: pathlib.Path) -> None:
    """Diverging simulation exits with code 4."""
    data = json.loads(CUSTOM_SCENARIO.read_text())
    data["system"]["A0"] = [[50.0, 0.0], [0.0, 50.0]]
    path = tmp_path / "diverging.json"
    path.write_text(json.dumps(data))
    code = main.run(["simulate", str(path), "--alpha", "1", "--out-dir", str(tmp_path / "results")])
    assert code == main.EXIT_NON_FINITE_STATE


def test_single_member_sweep_matches_simulate(tmp_path: pathlib.Path) -> None:
    """Sweep member equals the simulate run with the same gain."""
    common = ["--t-final", "0.5", "--out-dir", str(tmp_path)]
    assert main.run(["simulate", "harmonic-oscillator", "--alpha", "2", "--out", "single.csv", *common]) == 0
    assert main.run(["sweep", "harmonic-oscillator", "--alphas", "2", "--out", "sweep.csv", *common]) == 0
    single = pd.read_csv(tmp_path / "single.csv")
    sweep = pd.read_csv(tmp_path / "sweep.csv")
    assert list(sweep["run"].unique()) == ["alpha=2", "state feedback"]
    member = sweep[sweep["run"] == "alpha=2"].drop(columns="run").reset_index(drop=True)
    pd.testing.assert_frame_equal(member, single)


def test_sweep_parallel(tmp_path: pathlib.Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Members come back ordered by gain when run in worker processes."""
    args = ["sweep", "harmonic-oscillator", "--alphas", "2,0.5,1", "--jobs", "2", "--t-final", "0.5"]
    assert main.run([*args, "--out-dir", str(tmp_path)]) == main.EXIT_OK
    sweep = pd.read_csv(tmp_path / "harmonic-oscillator_sweep.csv")
    assert list(sweep["run"].unique()) == ["alpha=0.5", "alpha=1", "alpha=2", "state feedback"]
    assert "alpha=0.5" in capsys.readouterr().out


def test_export_scenario(tmp_path: pathlib.Path) -> None:
    """Exported scenario can be analyzed from file."""
    path = tmp_path / "oscillator.json"
    assert main.run(["export-scenario", "harmonic-oscillator", "--out", str(path)]) == main.EXIT_OK
    assert json.loads(path.read_text())["version"] == 1
    assert main.run(["export-scenario", "harmonic-oscillator", "--out", str(path)]) == main.EXIT_PARSE_ERROR
    assert main.run(["analyze", str(path), "--samples", "100"]) == main.EXIT_OK


def test_validate_selected_suites(capsys: pytest.CaptureFixture[str]) -> None:
    """Selected suites pass and report one line per check."""
    assert main.run(["validate", "--only", "equilibrium,cuk-singular,hurwitz"]) == main.EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines
    assert all(line.startswith("PASS") for line in lines)
    assert main.run(["validate", "--only", "speed"]) == main.EXIT_PARSE_ERROR


def test_export_adaptive_scenario(tmp_path: pathlib.Path) -> None:
    """Exported adaptive gain is used by simulate unless --alpha is given."""
    path = tmp_path / "oscillator_adaptive.json"
    assert main.run(["export-scenario", "harmonic-oscillator", "--adaptive", "--out", str(path)]) == main.EXIT_OK
    assert json.loads(path.read_text())["gain"]["policy"]["variant"] == "adaptive"
    args = ["simulate", str(path), "--t-final", "0.5", "--out", "run.csv", "--out-dir", str(tmp_path)]
    assert main.run(args) == main.EXIT_OK
    frame = pd.read_csv(tmp_path / "run.csv")
    assert frame["alpha"].nunique() > 1
    assert main.run([*args, "--alpha", "2", "-f"]) == main.EXIT_OK
    assert (pd.read_csv(tmp_path / "run.csv")["alpha"] == 2.0).all()  # noqa: PLR2004
    custom_args = ["export-scenario", str(CUSTOM_SCENARIO), "--adaptive", "--out", str(tmp_path / "custom.json")]
    assert main.run(custom_args) == main.EXIT_PARSE_ERROR
    assert not (tmp_path / "custom.json").exists()


def test_validate_sign_flip_fails_decay(monkeypatch: pytest.MonkeyPatch, capsys: pytest.CaptureFixture[str]) -> None:
    """Flipping the observer correction makes the decay suite fail with exit code 1."""
    monkeypatch.setattr(validate, "SCENARIOS", {"harmonic-oscillator": build_harmonic_oscillator})
    args = ["validate", "--only", "decay", "--inject-fault", "sign-flip"]
    assert main.run(args) == main.EXIT_VALIDATION_FAILED
    captured = capsys.readouterr()
    assert "First failing check: decay: harmonic-oscillator" in captured.err
    assert any(line.startswith("FAIL  decay") for line in captured.out.splitlines())
    assert main.run(["validate", "--only", "decay"]) == main.EXIT_OK
