"""Write trajectories as CSV with a datapackage descriptor, and plot them as SVG."""

from __future__ import annotations

import re
from pathlib import Path
from typing import TYPE_CHECKING, Any

import matplotlib as mpl

mpl.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from frictionless import Package, Resource, Schema

from . import settings
from .simulation import Trajectory, extract_metric

if TYPE_CHECKING:
    from collections.abc import Sequence

    from .scenarios import OutputTransform

FRICTIONLESS_MAPPING = {
    "str": "string",
    "float": "number",
    "int": "integer",
}

FLOAT_FORMAT = "%.17g"
RESOURCE_NAME_PATTERN = re.compile(r"[^a-z0-9._-]+")


def trajectory_columns(n: int, m: int, p: int) -> dict[str, dict[str, str]]:
    """Return CSV column definitions in file order."""
    columns = {"t": {"type": "float", "unit": "s", "description": "Time"}}
    columns.update(
        {f"x_{i}": {"type": "float", "unit": "n/a", "description": f"Plant state {i}"} for i in range(1, n + 1)},
    )
    columns.update(
        {f"xhat_{i}": {"type": "float", "unit": "n/a", "description": f"Observer state {i}"} for i in range(1, n + 1)},
    )
    columns.update(
        {f"u_{i}": {"type": "float", "unit": "n/a", "description": f"Applied input {i}"} for i in range(1, m + 1)},
    )
    columns.update(
        {f"y_{i}": {"type": "float", "unit": "n/a", "description": f"Measured output {i}"} for i in range(1, p + 1)},
    )
    columns["V_eps"] = {"type": "float", "unit": "n/a", "description": "Observer error energy eps' P eps"}
    columns["err_norm"] = {"type": "float", "unit": "n/a", "description": "Euclidean norm of xhat - x"}
    columns["alpha"] = {"type": "float", "unit": "n/a", "description": "Observer gain"}
    return columns


def trajectory_frame(traj: Trajectory) -> pd.DataFrame:
    """Return trajectory as data frame with the CSV column order."""
    n = traj.n
    data = {"t": traj.times}
    data.update({f"x_{i + 1}": traj.states[:, i] for i in range(n)})
    data.update({f"xhat_{i + 1}": traj.states[:, n + i] for i in range(n)})
    data.update({f"u_{i + 1}": traj.inputs[:, i] for i in range(traj.m)})
    data.update({f"y_{i + 1}": traj.outputs[:, i] for i in range(traj.p)})
    data["V_eps"] = traj.v_series
    data["err_norm"] = extract_metric(traj, "error_norm")
    data["alpha"] = traj.gain_series
    return pd.DataFrame(data, columns=list(trajectory_columns(n, traj.m, traj.p)))


def write_trajectory_csv(traj: Trajectory, path: Path) -> None:
    """Save trajectory as CSV with 17 significant digits."""
    path.parent.mkdir(parents=True, exist_ok=True)
    trajectory_frame(traj).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    settings.logger.info(f"Wrote trajectory '{traj.label}' to '{path}'.")


def _count_columns(columns: Sequence[str], prefix: str) -> int:
    return sum(1 for column in columns if column.startswith(prefix) and column[len(prefix) :].isdigit())


def read_trajectory_csv(path: Path, x_star: np.ndarray | None = None, label: str = "") -> Trajectory:
    """Read trajectory CSV written by write_trajectory_csv."""
    frame = pd.read_csv(path, float_precision="round_trip")
    n = _count_columns(frame.columns, "x_")
    m = _count_columns(frame.columns, "u_")
    p = _count_columns(frame.columns, "y_")
    expected = list(trajectory_columns(n, m, p))
    if list(frame.columns) != expected:
        error_msg = f"Unexpected columns in '{path}': {list(frame.columns)}."
        raise ValueError(error_msg)
    return Trajectory(
        times=frame["t"].to_numpy(),
        states=frame[[f"x_{i}" for i in range(1, n + 1)] + [f"xhat_{i}" for i in range(1, n + 1)]].to_numpy(),
        inputs=frame[[f"u_{i}" for i in range(1, m + 1)]].to_numpy(),
        outputs=frame[[f"y_{i}" for i in range(1, p + 1)]].to_numpy(),
        v_series=frame["V_eps"].to_numpy(),
        gain_series=frame["alpha"].to_numpy(),
        x_star=np.zeros(n) if x_star is None else np.asarray(x_star, dtype=np.float64),
        label=label or Path(path).stem,
    )


def combined_frame(trajs: Sequence[Trajectory]) -> pd.DataFrame:
    """Return all runs stacked with a leading run column."""
    frames = [trajectory_frame(traj).assign(run=traj.label) for traj in trajs]
    combined = pd.concat(frames, ignore_index=True)
    return combined[["run", *frames[0].columns.drop("run")]]


def sweep_summary(trajs: Sequence[Trajectory]) -> pd.DataFrame:
    """Return error norm per run at the quartile times of the horizon."""
    rows = []
    for traj in trajs:
        errors = extract_metric(traj, "error_norm")
        last = len(traj.times) - 1
        row: dict[str, Any] = {"run": traj.label}
        for fraction in (0.0, 0.25, 0.5, 0.75, 1.0):
            index = round(fraction * last)
            row[f"t={traj.times[index]:.6g}"] = errors[index]
        rows.append(row)
    return pd.DataFrame(rows).set_index("run")


def resource_name(filename: str) -> str:
    """Return valid datapackage resource name for a CSV file name."""
    return RESOURCE_NAME_PATTERN.sub("_", Path(filename).stem.lower()).strip("_")


def map_to_frictionless_resource(name: str, path: str, columns: dict[str, dict[str, str]], description: str) -> Resource:
    """Map CSV column definitions to frictionless resource."""
    fields = [
        {
            "name": column,
            "type": FRICTIONLESS_MAPPING.get(info["type"], info["type"]),
            "description": info["description"],
            "custom": {"unit": info["unit"]},
        }
        for column, info in columns.items()
    ]
    schema = Schema.from_descriptor({"fields": fields}, allow_invalid=True)
    return Resource(path=path, name=name, schema=schema, description=description)


class RunPackageBuilder:
    """Collect CSV resources of one simulate or sweep call and save a datapackage descriptor."""

    def __init__(self, package_name: str, base_dir: Path = settings.RESULTS_DIR) -> None:
        """Init run package builder."""
        self.package_name: str = package_name
        self.base_dir: Path = Path(base_dir)
        self.resources: list[Resource] = []

    def add_trajectory(self, traj: Trajectory, filename: str) -> Path:
        """Write trajectory CSV and register it as resource."""
        path = self.base_dir / filename
        write_trajectory_csv(traj, path)
        self.resources.append(
            map_to_frictionless_resource(
                name=resource_name(filename),
                path=filename,
                columns=trajectory_columns(traj.n, traj.m, traj.p),
                description=f"Closed-loop run {traj.label}",
            ),
        )
        return path

    def add_combined(self, trajs: Sequence[Trajectory], filename: str) -> Path:
        """Write all runs into one CSV and register it as resource."""
        path = self.base_dir / filename
        path.parent.mkdir(parents=True, exist_ok=True)
        combined_frame(trajs).to_csv(path, index=False, float_format=FLOAT_FORMAT)
        first = trajs[0]
        columns = {"run": {"type": "str", "unit": "n/a", "description": "Run label"}}
        columns.update(trajectory_columns(first.n, first.m, first.p))
        self.resources.append(
            map_to_frictionless_resource(
                name=resource_name(filename),
                path=filename,
                columns=columns,
                description="All runs of a gain sweep",
            ),
        )
        settings.logger.info(f"Wrote {len(trajs)} runs to '{path}'.")
        return path

    def save_package(self) -> Path:
        """Save datapackage.json next to the CSV files."""
        self.base_dir.mkdir(parents=True, exist_ok=True)
        package = Package()
        package.name = self.package_name
        for resource in self.resources:
            package.add_resource(resource)
        path = self.base_dir / "datapackage.json"
        package.to_json(str(path))
        return path


def plot_runs(trajs: Sequence[Trajectory], transform: OutputTransform, path: Path, title: str = "") -> None:
    """Plot the scenario output and the error norm of each run into a two panel SVG."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, (ax_output, ax_error) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
    for traj in trajs:
        ax_output.plot(traj.times, transform.apply(traj), label=traj.label)
        ax_error.plot(traj.times, extract_metric(traj, "error_norm"), label=traj.label)
    unit = f" [{transform.unit}]" if transform.unit else ""
    ax_output.set_ylabel(f"{transform.label}{unit}")
    ax_error.set_ylabel("|xhat - x|")
    ax_error.set_xlabel("t [s]")
    ax_output.legend()
    if title:
        ax_output.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    settings.logger.info(f"Wrote plot to '{path}'.")
