"""Built-in worked examples and scenario files."""

from __future__ import annotations

import json
import math
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, ClassVar

import numpy as np
import yaml

from . import settings
from .analysis import CompactBox
from .errors import DetectabilityViolatedError, ScenarioNotFoundError
from .linalg import ColVec, as_vector
from .observer import ClosedLoopSystem, GainPolicy
from .simulation import SimConfig, Trajectory
from .system import (
    Equilibrium,
    FeedbackLaw,
    InputAffineSystem,
    LyapunovSpec,
    compute_equilibrium,
    saturation_bounds,
    shift_to_error_coordinates,
)

TYPE_MAPPING = {"float": float, "int": int, "list": list, "str": str}

SCENARIO_VERSION = 1


def get_parameters(scenario_name: str) -> dict[str, Any]:
    """Get parameter definition from parameters directory or custom parameters directory if set."""
    filename = f"{scenario_name}.yaml"
    if settings.CUSTOM_PARAMETERS_DIR is not None and (settings.CUSTOM_PARAMETERS_DIR / filename).exists():
        with (settings.CUSTOM_PARAMETERS_DIR / filename).open("r") as f:
            return yaml.safe_load(f)
    path = settings.PARAMETERS_DIR / filename
    if not path.exists():
        raise ScenarioNotFoundError(f"No parameter definition '{filename}' found.")
    with path.open("r") as f:
        return yaml.safe_load(f)


@dataclass
class ParameterDefinition:
    """Typed parameter defaults and simulation defaults of one scenario."""

    name: str
    attributes: dict[str, dict[str, Any]]
    simulation: dict[str, Any] = field(default_factory=dict)
    description: str = ""

    @classmethod
    def from_name(cls, scenario_name: str) -> ParameterDefinition:
        """Create definition looking up name in parameters directory."""
        data = get_parameters(scenario_name)
        return cls(
            name=scenario_name,
            attributes=data.get("attributes", {}) or {},
            simulation=data.get("simulation", {}) or {},
            description=data.get("description", ""),
        )

    def defaults(self) -> dict[str, Any]:
        """Return default value per attribute, cast to its declared type."""
        values = {}
        for name, info in self.attributes.items():
            cast = TYPE_MAPPING.get(info.get("type", "float"), float)
            default = info["default"]
            values[name] = [float(item) for item in default] if cast is list else cast(default)
        return values

    def unit(self, attribute: str) -> str:
        """Return unit of attribute."""
        return self.attributes[attribute].get("unit", "n/a")

    def sim_config(self) -> SimConfig:
        """Return default simulation configuration."""
        return SimConfig(
            t_final=float(self.simulation["t_final"]),
            h=float(self.simulation["h"]),
            record_every=int(self.simulation.get("record_every", 1)),
        )

    def alphas(self) -> list[float]:
        """Return default observer gains."""
        return [float(alpha) for alpha in self.simulation.get("alphas", [1.0])]


class ParameterRecord:
    """Mixin creating parameter dataclasses from their YAML definition."""

    SCENARIO: ClassVar[str]

    @classmethod
    def from_name(cls, scenario_name: str | None = None, **overrides: Any) -> ParameterRecord:  # noqa: ANN401
        """Create record from packaged (or custom) defaults, overriding single values."""
        definition = ParameterDefinition.from_name(scenario_name or cls.SCENARIO)
        values = definition.defaults()
        unknown = set(overrides) - set(values)
        if unknown:
            raise KeyError(f"Unknown parameters {sorted(unknown)} for scenario '{definition.name}'.")
        values.update(overrides)
        return cls(**values)

    def to_dict(self) -> dict[str, Any]:
        """Return parameter values."""
        return asdict(self)


@dataclass(frozen=True)
class CukParams(ParameterRecord):
    """Component values of the Cuk converter."""

    SCENARIO: ClassVar[str] = "cuk"

    L1: float
    C2: float
    L3: float
    C4: float
    R_load: float
    E: float
    Vd: float
    beta: float

    def __post_init__(self) -> None:
        """Check positivity."""
        for name, value in self.to_dict().items():
            if not value > 0:
                raise ValueError(f"Cuk parameter {name} must be positive, got {value}.")

    @property
    def u_star(self) -> float:
        """Return duty cycle Vd / (Vd + E)."""
        return self.Vd / (self.Vd + self.E)


@dataclass(frozen=True)
class HeatExchangerParams(ParameterRecord):
    """Physical constants of the heat exchanger."""

    SCENARIO: ClassVar[str] = "heat_exchanger"

    k: float
    gamma1: float
    gamma2: float
    E_temp: float
    G: float
    u_M: float
    u_star: float
    initial_flow_ratio: float
    beta: float

    def __post_init__(self) -> None:
        """Check positivity and operating point."""
        for name, value in self.to_dict().items():
            if not value > 0:
                raise ValueError(f"Heat exchanger parameter {name} must be positive, got {value}.")
        if not self.u_star < self.u_M:
            raise ValueError(f"Target flow u* = {self.u_star} must lie in (0, u_M = {self.u_M}).")

    @property
    def singular_flow(self) -> float:
        """Return k^2 / (gamma1 gamma2), the flow at which (C, A) loses observability."""
        return self.k**2 / (self.gamma1 * self.gamma2)


@dataclass(frozen=True)
class HarmonicParams(ParameterRecord):
    """Demo values of the harmonic oscillator."""

    SCENARIO: ClassVar[str] = "harmonic_oscillator"

    input_bound: float
    feedback_gain: float
    initial_state: list[float]
    initial_estimate: list[float]

    def __post_init__(self) -> None:
        """Check values."""
        if not self.input_bound > 0:
            raise ValueError("Input bound must be positive.")
        if len(self.initial_state) != 2 or len(self.initial_estimate) != 2:  # noqa: PLR2004
            raise ValueError("Harmonic oscillator states have two components.")


@dataclass(frozen=True)
class OutputTransform:
    """Plotted quantity: scale times one physical state component."""

    label: str
    state_index: int
    scale: float = 1.0
    unit: str = ""

    def apply(self, traj: Trajectory) -> np.ndarray:
        """Return plotted series of a trajectory."""
        return self.scale * traj.states[:, self.state_index]

    def to_dict(self) -> dict[str, Any]:
        """Return JSON-ready transform."""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> OutputTransform:
        """Create transform from JSON document."""
        return cls(**data)


@dataclass
class ScenarioBundle:
    """Everything needed to analyze and simulate one example."""

    name: str
    physical: InputAffineSystem
    equilibrium: Equilibrium
    shifted: InputAffineSystem
    law: FeedbackLaw
    z0: ColVec
    default_alphas: list[float]
    default_simconfig: SimConfig
    output_transform: OutputTransform
    lyapunov: LyapunovSpec | None = None
    K1: CompactBox | None = None
    K2: CompactBox | None = None
    gain_policy: GainPolicy | None = None
    notes: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        """Validate initial state."""
        self.z0 = as_vector(self.z0, "z0")
        if self.z0.size != 2 * self.shifted.n:
            raise ValueError(f"Initial state of '{self.name}' must have {2 * self.shifted.n} entries.")

    def closed_loop(self, gain: GainPolicy, law: FeedbackLaw | None = None) -> ClosedLoopSystem:
        """Return closed loop of the bundle with the given observer gain."""
        return ClosedLoopSystem(
            sys=self.shifted,
            law=self.law if law is None else law,
            gain=gain,
            x_star=self.equilibrium.x_star,
            u_star=self.equilibrium.u_star,
        )

    def reference_z0(self) -> ColVec:
        """Return initial state with xhat(0) = x(0), the state feedback run."""
        n = self.shifted.n
        return np.concatenate([self.z0[:n], self.z0[:n]])

    def constant_input_law(self) -> FeedbackLaw:
        """Return the law u = u* (zero in shifted coordinates)."""
        return FeedbackLaw.constant(np.zeros(self.shifted.m), self.shifted.n)

    def _gain_dict(self) -> dict[str, Any]:
        gain: dict[str, Any] = {"alphas": list(self.default_alphas)}
        if self.gain_policy is not None:
            gain["policy"] = self.gain_policy.to_dict()
        return gain

    def to_dict(self) -> dict[str, Any]:
        """Return scenario wrapper document."""
        n = self.shifted.n
        return {
            "version": SCENARIO_VERSION,
            "name": self.name,
            "system": self.shifted.to_dict(),
            "physical": self.physical.to_dict(),
            "equilibrium": self.equilibrium.to_dict(),
            "feedback": self.law.to_dict(),
            "gain": self._gain_dict(),
            "sim": self.default_simconfig.to_dict(),
            "initial": {"x": self.z0[:n].tolist(), "xhat": self.z0[n:].tolist()},
            "output": self.output_transform.to_dict(),
            "lyapunov": self.lyapunov.to_dict() if self.lyapunov is not None else None,
            "boxes": (
                {"K1": self.K1.to_dict(), "K2": self.K2.to_dict()}
                if self.K1 is not None and self.K2 is not None
                else None
            ),
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ScenarioBundle:
        """Create bundle from scenario wrapper document."""
        shifted = InputAffineSystem.from_dict(data["system"])
        physical = InputAffineSystem.from_dict(data["physical"]) if data.get("physical") else shifted
        equilibrium = (
            Equilibrium.from_dict(data["equilibrium"])
            if data.get("equilibrium")
            else Equilibrium(x_star=np.zeros(shifted.n), u_star=np.zeros(shifted.m), residual=0.0)
        )
        boxes = data.get("boxes") or {}
        gain = data.get("gain") or {}
        output = data.get("output") or {"label": "y_1", "state_index": int(np.argmax(np.abs(shifted.C[0])))}
        return cls(
            name=data.get("name", "custom"),
            physical=physical,
            equilibrium=equilibrium,
            shifted=shifted,
            law=FeedbackLaw.from_dict(data["feedback"]),
            z0=np.concatenate([as_vector(data["initial"]["x"], "x"), as_vector(data["initial"]["xhat"], "xhat")]),
            default_alphas=[float(alpha) for alpha in gain.get("alphas", [1.0])],
            default_simconfig=SimConfig.from_dict(data["sim"]),
            output_transform=OutputTransform.from_dict(output),
            lyapunov=LyapunovSpec.from_dict(data["lyapunov"]) if data.get("lyapunov") else None,
            K1=CompactBox.from_dict(boxes["K1"]) if "K1" in boxes else None,
            K2=CompactBox.from_dict(boxes["K2"]) if "K2" in boxes else None,
            gain_policy=GainPolicy.from_dict(gain["policy"]) if gain.get("policy") else None,
            notes=list(data.get("notes", [])),
        )


def build_harmonic_oscillator(params: HarmonicParams | None = None) -> ScenarioBundle:
    """
    Build the oscillator x1' = -(1+u) x2 + u, x2' = (1+u) x1 with y = x2.

    The system is already in error coordinates (x* = 0, u* = 0); the law
    u = -x1 is unsaturated.
    """
    params = params or HarmonicParams.from_name()
    definition = ParameterDefinition.from_name(HarmonicParams.SCENARIO)
    rotation = np.array([[0.0, -1.0], [1.0, 0.0]])
    system = InputAffineSystem(
        A0=rotation,
        A_coeff=(rotation,),
        B0=np.zeros(2),
        B_coeff=(np.array([1.0, 0.0]),),
        C=np.array([[0.0, 1.0]]),
        P=np.eye(2),
        input_box=((-params.input_bound, params.input_bound),),
    )
    equilibrium = compute_equilibrium(system, [0.0])
    settings.logger.info("Built scenario 'harmonic-oscillator'.")
    return ScenarioBundle(
        name="harmonic-oscillator",
        physical=system,
        equilibrium=equilibrium,
        shifted=shift_to_error_coordinates(system, equilibrium),
        law=FeedbackLaw.linear([[-params.feedback_gain, 0.0]]),
        z0=np.concatenate([params.initial_state, params.initial_estimate]),
        default_alphas=definition.alphas(),
        default_simconfig=definition.sim_config(),
        output_transform=OutputTransform(label="x2", state_index=1),
        lyapunov=LyapunovSpec(np.eye(2)),
        K1=CompactBox.symmetric(1.0, 2),
        K2=CompactBox.symmetric(1.0, 2),
        notes=["Initial condition and gain list are demo choices."],
    )


def cuk_structure(params: CukParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return M(0), dM/du and P with A(u) = M(u) P."""
    M0 = np.array(
        [
            [0.0, -1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, 1.0, -1.0 / params.R_load],
        ],
    )
    M1 = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [-1.0, 0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ],
    )
    P = np.diag([1.0 / params.L1, 1.0 / params.C2, 1.0 / params.L3, 1.0 / params.C4])
    return M0, M1, P


def _cuk_notes(params: CukParams, x_star: ColVec, b: ColVec) -> list[str]:
    x1, x2, x3, _ = x_star
    product_b = np.array([params.C2 * x2, params.L3 * x3 - params.L1 * x1, -params.C2 * x2, 0.0])
    quotient_x1 = params.L1 / (params.R_load * params.E * params.Vd**2)
    sum_x2 = params.C2 * params.Vd + params.E
    return [
        f"Input direction b from the shift: {np.array2string(b, precision=6)}; "
        f"product form (C2 x2*, L3 x3* - L1 x1*, -C2 x2*, 0): {np.array2string(product_b, precision=6)}.",
        f"x1* from the solve is {x1:.6g}; L1/(R E Vd^2) gives {quotient_x1:.6g}, L1 Vd^2/(R E) gives "
        f"{params.L1 * params.Vd**2 / (params.R_load * params.E):.6g}.",
        f"x2* from the solve is {x2:.6g}; C2 Vd + E gives {sum_x2:.6g}, C2 (Vd + E) gives "
        f"{params.C2 * (params.Vd + params.E):.6g}.",
        f"Output x4/C4 settles at {x_star[3] / params.C4:.6g} V (inverted polarity).",
    ]


def build_cuk(params: CukParams | None = None) -> ScenarioBundle:
    """
    Build the averaged Cuk converter x' = M(u) P x + (E, 0, 0, 0) with y = x2.

    The law is sat(-beta b' P xbar) with b the input direction of the shifted
    system; the run starts from x(0) = 0 with xhat(0) = x*.
    """
    params = params or CukParams.from_name()
    definition = ParameterDefinition.from_name(CukParams.SCENARIO)
    M0, M1, P = cuk_structure(params)
    physical = InputAffineSystem(
        A0=M0 @ P,
        A_coeff=(M1 @ P,),
        B0=np.array([params.E, 0.0, 0.0, 0.0]),
        B_coeff=(np.zeros(4),),
        C=np.array([[0.0, 1.0, 0.0, 0.0]]),
        P=P,
        input_box=((0.0, 1.0),),
    )
    equilibrium = compute_equilibrium(physical, [params.u_star])
    shifted = shift_to_error_coordinates(physical, equilibrium)
    b = shifted.B_coeff[0]
    sat_lo, sat_hi = saturation_bounds(shifted.input_box)
    law = FeedbackLaw.saturated(-params.beta * (P @ b)[np.newaxis, :], sat_lo, sat_hi)
    x_star = equilibrium.x_star
    radius = np.abs(x_star)
    notes = _cuk_notes(params, x_star, b)
    settings.logger.info(f"Built scenario 'cuk' at u* = {params.u_star:.6g} (residual {equilibrium.residual:.2e}).")
    return ScenarioBundle(
        name="cuk",
        physical=physical,
        equilibrium=equilibrium,
        shifted=shifted,
        law=law,
        z0=np.concatenate([-x_star, np.zeros(4)]),
        default_alphas=definition.alphas(),
        default_simconfig=definition.sim_config(),
        output_transform=OutputTransform(label="x4/C4", state_index=3, scale=1.0 / params.C4, unit="V"),
        lyapunov=LyapunovSpec(P),
        K1=CompactBox(-radius, radius),
        K2=CompactBox(-radius, radius),
        notes=notes,
    )


def heat_exchanger_structure(params: HeatExchangerParams) -> tuple[np.ndarray, np.ndarray]:
    """Return A at zero flow and dA/du."""
    J = np.array([[-1.0, 0.0, 0.0], [1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])
    identity = np.eye(3)
    A0 = np.block(
        [
            [-params.k * identity, params.k * identity],
            [params.k * identity, -params.k * identity + params.gamma2 * J.T],
        ],
    )
    A1 = np.block([[params.gamma1 * J, np.zeros((3, 3))], [np.zeros((3, 3)), np.zeros((3, 3))]])
    return A0, A1


def build_heat_exchanger(params: HeatExchangerParams | None = None) -> ScenarioBundle:
    """
    Build the six-compartment heat exchanger with the controlled flow u and y = x4.

    The plant starts at the steady state of the flow initial_flow_ratio * u_M;
    the observer starts at x*.
    """
    params = params or HeatExchangerParams.from_name()
    if math.isclose(params.u_star, params.singular_flow, rel_tol=1e-12, abs_tol=1e-12):
        error_msg = (
            f"Target flow u* = {params.u_star} equals k^2/(gamma1 gamma2); "
            "the pair (C, A(u*)) is not observable at this operating point."
        )
        raise DetectabilityViolatedError(error_msg)
    definition = ParameterDefinition.from_name(HeatExchangerParams.SCENARIO)
    A0, A1 = heat_exchanger_structure(params)
    physical = InputAffineSystem(
        A0=A0,
        A_coeff=(A1,),
        B0=np.array([0.0, 0.0, 0.0, 0.0, 0.0, params.G]),
        B_coeff=(np.array([params.E_temp, 0.0, 0.0, 0.0, 0.0, 0.0]),),
        C=np.array([[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]]),
        P=np.eye(6),
        input_box=((0.0, params.u_M),),
    )
    equilibrium = compute_equilibrium(physical, [params.u_star])
    initial = compute_equilibrium(physical, [params.initial_flow_ratio * params.u_M])
    shifted = shift_to_error_coordinates(physical, equilibrium)
    b = shifted.B_coeff[0]
    sat_lo, sat_hi = saturation_bounds(shifted.input_box)
    law = FeedbackLaw.saturated(-params.beta * b[np.newaxis, :], sat_lo, sat_hi)
    offset = initial.x_star - equilibrium.x_star
    radius = float(np.max(np.abs(offset)))
    settings.logger.info(
        f"Built scenario 'heat-exchanger' at u* = {params.u_star:.6g} (residual {equilibrium.residual:.2e}).",
    )
    return ScenarioBundle(
        name="heat-exchanger",
        physical=physical,
        equilibrium=equilibrium,
        shifted=shifted,
        law=law,
        z0=np.concatenate([offset, np.zeros(6)]),
        default_alphas=definition.alphas(),
        default_simconfig=definition.sim_config(),
        output_transform=OutputTransform(label="x4", state_index=3, unit=definition.unit("E_temp")),
        lyapunov=LyapunovSpec(np.eye(6)),
        K1=CompactBox.symmetric(radius, 6),
        K2=CompactBox.symmetric(radius, 6),
        notes=[f"Observability is lost at u = k^2/(gamma1 gamma2) = {params.singular_flow:.6g}."],
    )


SCENARIOS: dict[str, Callable[[], ScenarioBundle]] = {
    "harmonic-oscillator": build_harmonic_oscillator,
    "cuk": build_cuk,
    "heat-exchanger": build_heat_exchanger,
}


def save_scenario(bundle: ScenarioBundle, path: Path) -> None:
    """Write scenario wrapper JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        json.dump(bundle.to_dict(), f, indent=2)
    settings.logger.info(f"Exported scenario '{bundle.name}' to '{path}'.")


def load_scenario_file(path: Path) -> ScenarioBundle:
    """Read scenario wrapper JSON."""
    with path.open("r") as f:
        data = json.load(f)
    return ScenarioBundle.from_dict(data)


def load_scenario(name_or_path: str) -> ScenarioBundle:
    """
    Return built-in scenario by name, or read a scenario JSON file.

    Bare names not found among the built-ins are looked up in SCENARIO_DIR.
    """
    if name_or_path in SCENARIOS:
        return SCENARIOS[name_or_path]()
    candidates = [Path(name_or_path), settings.SCENARIO_DIR / f"{name_or_path}.json"]
    for path in candidates:
        if path.is_file():
            return load_scenario_file(path)
    raise ScenarioNotFoundError(
        f"Scenario '{name_or_path}' is neither built in ({', '.join(SCENARIOS)}) nor a scenario file.",
    )
