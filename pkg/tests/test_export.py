"""Module to test CSV, datapackage and SVG output."""

import json
import pathlib

import numpy as np

from dissiped import export
from dissiped.observer import GainPolicy
from dissiped.scenarios import build_harmonic_oscillator
from dissiped.simulation import SimConfig, Trajectory, integrate


def harmonic_run(alpha: float = 1.0) -> Trajectory:
    """Return a short oscillator run."""
    bundle = build_harmonic_oscillator()
    cls = bundle.closed_loop(GainPolicy.constant(alpha))
    return integrate(cls, bundle.z0, SimConfig(1.0, 1e-2, record_every=5))


def test_trajectory_columns() -> None:
    """Column order is t, states, estimates, inputs, outputs and diagnostics."""
    assert list(export.trajectory_columns(2, 1, 1)) == [
        "t",
        "x_1",
        "x_2",
        "xhat_1",
        "xhat_2",
        "u_1",
        "y_1",
        "V_eps",
        "err_norm",
        "alpha",
    ]


def test_csv_reproduces_trajectory(tmp_path: pathlib.Path) -> None:
    """17 significant digits reproduce every recorded value."""
    traj = harmonic_run()
    path = tmp_path / "run.csv"
    export.write_trajectory_csv(traj, path)
    restored = export.read_trajectory_csv(path)
    np.testing.assert_allclose(restored.states, traj.states, rtol=0, atol=1e-12)
    np.testing.assert_allclose(restored.times, traj.times, rtol=0, atol=1e-12)
    np.testing.assert_allclose(restored.v_series, traj.v_series, rtol=0, atol=1e-12)
    assert restored.label == "run"


def test_run_package(tmp_path: pathlib.Path) -> None:
    """Datapackage descriptor lists every written CSV with its fields."""
    builder = export.RunPackageBuilder("oscillator-runs", tmp_path)
    builder.add_trajectory(harmonic_run(), "oscillator_alpha=1.csv")
    builder.add_combined([harmonic_run(1.0), harmonic_run(2.0)], "sweep.csv")
    builder.save_package()

    with (tmp_path / "datapackage.json").open("r") as f:
        data = json.load(f)
    assert data["name"] == "oscillator-runs"
    assert [resource["name"] for resource in data["resources"]] == ["oscillator_alpha_1", "sweep"]
    fields = data["resources"][1]["schema"]["fields"]
    assert fields[0]["name"] == "run"
    assert fields[0]["type"] == "string"
    assert fields[1]["type"] == "number"
    assert len(fields) == 11  # noqa: PLR2004

    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("run,t,x_1")
    assert lines[1].startswith("alpha=1,")
    assert lines[-1].startswith("alpha=2,")


def test_sweep_summary() -> None:
    """Error norm at quartile times, one row per run."""
    summary = export.sweep_summary([harmonic_run(1.0), harmonic_run(2.0)])
    assert list(summary.index) == ["alpha=1", "alpha=2"]
    assert len(summary.columns) == 5  # noqa: PLR2004
    assert summary.iloc[0, 0] == summary.iloc[1, 0]


def test_plot_runs(tmp_path: pathlib.Path) -> None:
    """Two panel SVG is written."""
    bundle = build_harmonic_oscillator()
    path = tmp_path / "plots" / "runs.svg"
    export.plot_runs([harmonic_run(1.0), harmonic_run(2.0)], bundle.output_transform, path, title="oscillator")
    assert path.exists()
    assert "<svg" in path.read_text()
