"""Fixed-step Runge-Kutta integration of closed-loop fields and trajectory recording."""

from __future__ import annotations

import math
import re
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

from . import settings
from .errors import NonFiniteStateError, UnknownMetricError
from .linalg import ColVec, as_vector
from .observer import ClosedLoopSystem, GainKind, GainPolicy
from .system import FeedbackKind, apply_feedback, eval_feedback

BLOW_UP_LIMIT = 1e12
MAX_STEPS = 1e9

Field = Callable[[ColVec], ColVec]

METRIC_PATTERN = re.compile(r"^(output|input|state|estimate)_(\d+)$")


@dataclass(frozen=True)
class SimConfig:
    """Horizon, step and recording decimation of a run."""

    t_final: float
    h: float
    record_every: int = 1

    def __post_init__(self) -> None:
        """Validate horizon and step."""
        if not (self.t_final > 0 and self.h > 0):
            raise ValueError("Horizon and step must be positive.")
        if self.h > self.t_final:
            raise ValueError(f"Step {self.h} exceeds horizon {self.t_final}.")
        if self.t_final / self.h > MAX_STEPS:
            raise ValueError(f"Horizon {self.t_final} needs more than {MAX_STEPS:.0e} steps of size {self.h}.")
        if self.record_every < 1:
            raise ValueError("record_every must be a positive integer.")

    @property
    def steps(self) -> int:
        """Return number of integration steps."""
        return max(1, round(self.t_final / self.h))

    def replace(self, **changes: Any) -> SimConfig:  # noqa: ANN401
        """Return copy with some fields changed."""
        values = {"t_final": self.t_final, "h": self.h, "record_every": self.record_every}
        values.update({key: value for key, value in changes.items() if value is not None})
        return SimConfig(**values)

    def to_dict(self) -> dict[str, Any]:
        """Return JSON-ready configuration."""
        return {"t_final": self.t_final, "h": self.h, "record_every": self.record_every}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SimConfig:
        """Create configuration from JSON document."""
        return cls(t_final=data["t_final"], h=data["h"], record_every=data.get("record_every", 1))


@dataclass
class Trajectory:
    """
    Recorded closed-loop run.

    ``states`` holds physical (x, xhat) per row; ``inputs`` and ``outputs``
    are physical as well. ``x_star`` is the operating point the loop was
    shifted by.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    v_series: np.ndarray
    gain_series: np.ndarray
    x_star: ColVec
    label: str = ""

    def __post_init__(self) -> None:
        """Check aligned lengths."""
        lengths = {len(self.times), len(self.states), len(self.inputs), len(self.outputs), len(self.v_series)}
        lengths.add(len(self.gain_series))
        if len(lengths) != 1:
            raise ValueError(f"Trajectory series differ in length: {sorted(lengths)}.")

    @property
    def n(self) -> int:
        """Return plant state dimension."""
        return self.states.shape[1] // 2

    @property
    def m(self) -> int:
        """Return input dimension."""
        return self.inputs.shape[1]

    @property
    def p(self) -> int:
        """Return output dimension."""
        return self.outputs.shape[1]

    @property
    def errors(self) -> np.ndarray:
        """Return eps = xhat - x per row."""
        return self.states[:, self.n :] - self.states[:, : self.n]


def rk4_step(rhs: Field, z: ColVec, h: float) -> ColVec:
    """Advance z by one classical Runge-Kutta step."""
    k1 = rhs(z)
    k2 = rhs(z + 0.5 * h * k1)
    k3 = rhs(z + 0.5 * h * k2)
    k4 = rhs(z + h * k3)
    return z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_finite(z: ColVec, t: float) -> None:
    # NaN fails the comparison as well
    if not np.abs(z).max() <= BLOW_UP_LIMIT:
        raise NonFiniteStateError(t)


def recorded_steps(cfg: SimConfig) -> np.ndarray:
    """Return indices of recorded steps: every record_every-th step and always the last one."""
    steps = np.arange(0, cfg.steps + 1, cfg.record_every)
    if steps[-1] != cfg.steps:
        steps = np.append(steps, cfg.steps)
    return steps


def integrate_field(rhs: Field, z0: npt.ArrayLike, cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Integrate z' = rhs(z) and return recorded times and states."""
    z = as_vector(z0, "z0").copy()
    steps = cfg.steps
    indices = recorded_steps(cfg)
    states = np.empty((len(indices), z.size))
    states[0] = z
    row = 1
    for i in range(1, steps + 1):
        z = rk4_step(rhs, z, cfg.h)
        _check_finite(z, i * cfg.h)
        if i % cfg.record_every == 0 or i == steps:
            states[row] = z
            row += 1
    return indices * cfg.h, states


def _initial_state(cls: ClosedLoopSystem, z0: npt.ArrayLike, label: str) -> ColVec:
    z0 = as_vector(z0, "z0")
    if z0.size != 2 * cls.n:
        raise ValueError(f"Initial state has {z0.size} entries, expected {2 * cls.n}.")
    _check_finite(z0, 0.0)
    xhat0 = z0[cls.n :]
    if cls.law.kind is FeedbackKind.SATURATED and not np.array_equal(
        eval_feedback(cls.law, xhat0),
        cls.law.gain @ xhat0,
    ):
        settings.logger.warning(f"Feedback of {label} starts in saturation.")
    return z0


def record_trajectory(cls: ClosedLoopSystem, times: np.ndarray, shifted: np.ndarray, label: str) -> Trajectory:
    """Turn shifted (x, xhat) rows into a trajectory with physical states, inputs and outputs."""
    n = cls.n
    x, xhat = shifted[:, :n], shifted[:, n:]
    eps = xhat - x
    if cls.gain.kind is GainKind.CONSTANT:
        gains = np.full(len(times), cls.gain.alpha)
    else:
        corrections = eps @ cls.pinv_ctc.T
        gains = np.array([cls.gain_value(row, correction) for row, correction in zip(xhat, corrections)])
    v_series = np.einsum("ij,jk,ik->i", eps, cls.sys.P, eps)
    settings.logger.info(f"Finished {label}: V(eps) {v_series[0]:.3e} -> {v_series[-1]:.3e}.")
    return Trajectory(
        times=times,
        states=shifted + np.concatenate([cls.x_star, cls.x_star]),
        inputs=cls.u_star + apply_feedback(cls.law, xhat),
        outputs=(x + cls.x_star) @ cls.sys.C.T,
        v_series=v_series,
        gain_series=gains,
        x_star=cls.x_star.copy(),
        label=label,
    )


def integrate(cls: ClosedLoopSystem, z0: npt.ArrayLike, cfg: SimConfig, label: str = "") -> Trajectory:
    """
    Simulate the closed loop from z0 = (x, xhat) in shifted coordinates.

    Recorded states, inputs and outputs are returned in physical units.
    """
    label = label or cls.gain.label
    z0 = _initial_state(cls, z0, label)
    settings.logger.info(f"Simulating {label}: {cfg.steps} steps of {cfg.h:g} s.")
    times, shifted = integrate_field(cls.rhs, z0, cfg)
    return record_trajectory(cls, times, shifted, label)


def integrate_gains(
    cls: ClosedLoopSystem,
    alphas: Sequence[float],
    z0: npt.ArrayLike,
    cfg: SimConfig,
) -> list[Trajectory]:
    """
    Simulate the loop once per constant gain, all gains in one stacked integration.

    Member j agrees with integrate(cls.with_gain(GainPolicy.constant(alphas[j])), z0, cfg)
    up to rounding. A blow-up of any member stops the whole integration.
    """
    loops = [cls.with_gain(GainPolicy.constant(alpha)) for alpha in alphas]
    if not loops:
        return []
    z0 = _initial_state(cls, z0, ", ".join(loop.gain.label for loop in loops))
    settings.logger.info(f"Simulating {len(loops)} stacked gains: {cfg.steps} steps of {cfg.h:g} s.")
    times, stacked = integrate_field(cls.stacked_rhs(alphas), np.tile(z0, len(loops)), cfg)
    size = 2 * cls.n
    return [
        record_trajectory(loop, times, stacked[:, j * size : (j + 1) * size], loop.gain.label)
        for j, loop in enumerate(loops)
    ]


def extract_metric(traj: Trajectory, metric: str) -> np.ndarray:
    """
    Return a named scalar series aligned with traj.times.

    Known names are ``error_norm``, ``lyapunov_v``, ``alpha`` and the
    1-based ``output_<i>``, ``input_<i>``, ``state_<i>``, ``estimate_<i>``.
    """
    if metric == "error_norm":
        return np.linalg.norm(traj.errors, axis=1)
    if metric == "lyapunov_v":
        return traj.v_series.copy()
    if metric == "alpha":
        return traj.gain_series.copy()
    match = METRIC_PATTERN.match(metric)
    if match is None:
        raise UnknownMetricError(f"Unknown metric '{metric}'.")
    kind, index = match.group(1), int(match.group(2)) - 1
    source, size = {
        "output": (traj.outputs, traj.p),
        "input": (traj.inputs, traj.m),
        "state": (traj.states[:, : traj.n], traj.n),
        "estimate": (traj.states[:, traj.n :], traj.n),
    }[kind]
    if not 0 <= index < size:
        raise UnknownMetricError(f"Metric '{metric}' is out of range (1..{size}).")
    return source[:, index].copy()


def observed_order(rhs: Field, z0: npt.ArrayLike, t_final: float, h: float) -> tuple[float, float]:
    """
    Estimate the convergence order by step halving.

    Returns the ratio |z_h - z_h/2| / |z_h/2 - z_h/4| at t_final and its
    base-2 logarithm.
    """
    finals = [integrate_field(rhs, z0, SimConfig(t_final, step, record_every=1))[1][-1] for step in (h, h / 2, h / 4)]
    ratio = float(np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2]))
    return ratio, math.log2(ratio)
