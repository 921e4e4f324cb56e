"""
State-affine systems with input-affine coefficient maps.

A system is the tuple ``(A0, {A_k}, B0, {B_k}, C, P, input box)`` defining

    x' = A(u) x + B(u),   A(u) = A0 + sum_k u_k A_k,   B(u) = B0 + sum_k u_k B_k,
    y  = C x,

together with the matrix ``P`` of the dissipativity inequality
``P A(u) + A(u)' P <= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

import numpy as np
import numpy.typing as npt

from . import settings
from .errors import DimensionMismatchError
from .linalg import ColVec, Mat, as_matrix, as_vector, inf_norm, is_positive_definite, solve_linear

EQUILIBRIUM_RESIDUAL_TOL = 1e-9
DEFAULT_SATURATION_MARGIN = 1e-3


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class InputAffineSystem:
    """Input-affine state-affine system with output map and dissipativity matrix."""

    A0: Mat
    A_coeff: tuple[Mat, ...]
    B0: ColVec
    B_coeff: tuple[ColVec, ...]
    C: Mat
    P: Mat
    input_box: tuple[tuple[float, float], ...]
    A_stack: np.ndarray = field(init=False, repr=False, compare=False)
    B_stack: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        """Validate dimensions, box and positive definiteness of P."""
        A0 = _frozen(as_matrix(self.A0, "A0"))
        n = A0.shape[0]
        if A0.shape != (n, n):
            raise DimensionMismatchError(f"A0 must be square, got {A0.shape}.")
        A_coeff = tuple(_frozen(as_matrix(a, f"A_coeff[{k}]")) for k, a in enumerate(self.A_coeff))
        B_coeff = tuple(_frozen(as_vector(b, f"B_coeff[{k}]")) for k, b in enumerate(self.B_coeff))
        m = len(A_coeff)
        if m == 0 or len(B_coeff) != m:
            raise DimensionMismatchError(
                f"Need one A and one B coefficient per input channel (got {m} and {len(B_coeff)}).",
            )
        for k, (a, b) in enumerate(zip(A_coeff, B_coeff)):
            if a.shape != (n, n) or b.shape != (n,):
                raise DimensionMismatchError(f"Coefficient {k} does not match state dimension {n}.")
        B0 = _frozen(as_vector(self.B0, "B0"))
        C = _frozen(as_matrix(self.C, "C"))
        P = _frozen(as_matrix(self.P, "P"))
        if B0.shape != (n,) or C.shape[1] != n or P.shape != (n, n):
            raise DimensionMismatchError("B0, C or P do not match the state dimension.")
        if not is_positive_definite(P):
            raise ValueError("P must be symmetric positive definite.")
        input_box = tuple((float(lo), float(hi)) for lo, hi in self.input_box)
        if len(input_box) != m:
            raise DimensionMismatchError(f"Input box has {len(input_box)} channels, expected {m}.")
        for k, (lo, hi) in enumerate(input_box):
            if not lo <= hi:
                raise ValueError(f"Input box channel {k} is empty ([{lo}, {hi}]).")
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "A_coeff", A_coeff)
        object.__setattr__(self, "B0", B0)
        object.__setattr__(self, "B_coeff", B_coeff)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "input_box", input_box)
        object.__setattr__(self, "A_stack", _frozen(np.stack(A_coeff)))
        object.__setattr__(self, "B_stack", _frozen(np.stack(B_coeff)))

    @property
    def n(self) -> int:
        """Return state dimension."""
        return self.A0.shape[0]

    @property
    def m(self) -> int:
        """Return input dimension."""
        return len(self.A_coeff)

    @property
    def p(self) -> int:
        """Return output dimension."""
        return self.C.shape[0]

    def to_dict(self) -> dict[str, Any]:
        """Return JSON-ready system document."""
        return {
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "A0": self.A0.tolist(),
            "A_coeff": [a.tolist() for a in self.A_coeff],
            "B0": self.B0.tolist(),
            "B_coeff": [b.tolist() for b in self.B_coeff],
            "C": self.C.tolist(),
            "P": self.P.tolist(),
            "input_box": [list(bounds) for bounds in self.input_box],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> InputAffineSystem:
        """Create system from JSON document and check declared dimensions."""
        system = cls(
            A0=data["A0"],
            A_coeff=tuple(data["A_coeff"]),
            B0=data["B0"],
            B_coeff=tuple(data["B_coeff"]),
            C=data["C"],
            P=data["P"],
            input_box=tuple(tuple(bounds) for bounds in data["input_box"]),
        )
        for key in ("n", "m", "p"):
            if key in data and data[key] != getattr(system, key):
                raise DimensionMismatchError(
                    f"Declared {key} = {data[key]} does not match matrices ({getattr(system, key)}).",
                )
        return system


def _input(sys: InputAffineSystem, u: npt.ArrayLike) -> ColVec:
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if u.shape != (sys.m,):
        raise DimensionMismatchError(f"Input has shape {u.shape}, expected ({sys.m},).")
    return u


def eval_A(sys: InputAffineSystem, u: npt.ArrayLike) -> Mat:
    """Return A(u) = A0 + sum_k u_k A_k."""
    u = _input(sys, u)
    return sys.A0 + np.tensordot(u, sys.A_stack, axes=1)


def eval_B(sys: InputAffineSystem, u: npt.ArrayLike) -> ColVec:
    """Return B(u) = B0 + sum_k u_k B_k."""
    u = _input(sys, u)
    return sys.B0 + u @ sys.B_stack


def vector_field(sys: InputAffineSystem, x: ColVec, u: npt.ArrayLike) -> ColVec:
    """Return A(u) x + B(u)."""
    return eval_A(sys, u) @ x + eval_B(sys, u)


@dataclass(frozen=True)
class Equilibrium:
    """Operating point (x*, u*) with the residual of A(u*)x* + B(u*)."""

    x_star: ColVec
    u_star: ColVec
    residual: float

    def to_dict(self) -> dict[str, Any]:
        """Return JSON-ready equilibrium."""
        return {"x_star": self.x_star.tolist(), "u_star": self.u_star.tolist(), "residual": self.residual}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Equilibrium:
        """Create equilibrium from JSON document."""
        return cls(
            x_star=as_vector(data["x_star"], "x_star"),
            u_star=as_vector(data["u_star"], "u_star"),
            residual=float(data.get("residual", 0.0)),
        )


def residual_scale(A: Mat, x: ColVec, b: ColVec) -> float:
    """Return the scale the equilibrium residual is measured against."""
    return max(1.0, inf_norm(A) * float(np.max(np.abs(x))), float(np.max(np.abs(b))))


def compute_equilibrium(sys: InputAffineSystem, u_star: npt.ArrayLike) -> Equilibrium:
    """Solve A(u*) x* = -B(u*) for the equilibrium state."""
    u_star = _input(sys, u_star).copy()
    A = eval_A(sys, u_star)
    B = eval_B(sys, u_star)
    x_star = solve_linear(A, -B)
    residual = float(np.max(np.abs(A @ x_star + B)))
    scale = residual_scale(A, x_star, B)
    if residual > EQUILIBRIUM_RESIDUAL_TOL * scale:
        raise ArithmeticError(f"Equilibrium residual {residual:.3e} exceeds tolerance (scale {scale:.3e}).")
    settings.logger.debug(f"Equilibrium at u* = {u_star.tolist()} with residual {residual:.3e}.")
    return Equilibrium(x_star=_frozen(x_star), u_star=_frozen(u_star), residual=residual)


def shift_to_error_coordinates(sys: InputAffineSystem, eq: Equilibrium) -> InputAffineSystem:
    """
    Rewrite the system in coordinates x - x*, u - u*.

    The shifted system has A0 = A(u*), unchanged A_k, B0 = 0 and
    B_k = A_k x* + B_k, so that its field at (0, 0) vanishes.
    """
    return InputAffineSystem(
        A0=eval_A(sys, eq.u_star),
        A_coeff=sys.A_coeff,
        B0=np.zeros(sys.n),
        B_coeff=tuple(a @ eq.x_star + b for a, b in zip(sys.A_coeff, sys.B_coeff)),
        C=sys.C,
        P=sys.P,
        input_box=tuple((lo - u, hi - u) for (lo, hi), u in zip(sys.input_box, eq.u_star)),
    )


class FeedbackKind(StrEnum):
    """Variants of state feedback laws."""

    LINEAR = "linear"
    SATURATED = "saturated"
    CONSTANT = "constant"


@dataclass(frozen=True)
class FeedbackLaw:
    """State feedback law: gain x (+ offset), optionally clamped componentwise."""

    kind: FeedbackKind
    gain: Mat
    offset: ColVec
    sat_lo: ColVec | None = None
    sat_hi: ColVec | None = None

    def __post_init__(self) -> None:
        """Validate offset and saturation bounds."""
        gain = _frozen(as_matrix(self.gain, "gain"))
        offset = _frozen(as_vector(self.offset, "offset"))
        if offset.shape != (gain.shape[0],):
            raise DimensionMismatchError("Offset must have one entry per gain row.")
        kind = FeedbackKind(self.kind)
        if kind is not FeedbackKind.CONSTANT and np.any(offset != 0.0):
            raise ValueError("Linear feedback laws must satisfy lambda(0) = 0 (zero offset).")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "offset", offset)
        if kind is FeedbackKind.SATURATED:
            if self.sat_lo is None or self.sat_hi is None:
                raise ValueError("Saturated feedback needs sat_lo and sat_hi.")
            lo = _frozen(as_vector(self.sat_lo, "sat_lo"))
            hi = _frozen(as_vector(self.sat_hi, "sat_hi"))
            if lo.shape != offset.shape or hi.shape != offset.shape:
                raise DimensionMismatchError("Saturation bounds must have one entry per input.")
            if not (np.all(lo < 0.0) and np.all(hi > 0.0)):
                raise ValueError("Saturation bounds must satisfy sat_lo < 0 < sat_hi.")
            object.__setattr__(self, "sat_lo", lo)
            object.__setattr__(self, "sat_hi", hi)

    @property
    def m(self) -> int:
        """Return number of inputs."""
        return self.gain.shape[0]

    @property
    def n(self) -> int:
        """Return state dimension."""
        return self.gain.shape[1]

    @classmethod
    def linear(cls, gain: npt.ArrayLike) -> FeedbackLaw:
        """Create unsaturated linear law lambda(x) = G x."""
        gain = as_matrix(gain, "gain")
        return cls(FeedbackKind.LINEAR, gain, np.zeros(gain.shape[0]))

    @classmethod
    def saturated(cls, gain: npt.ArrayLike, sat_lo: npt.ArrayLike, sat_hi: npt.ArrayLike) -> FeedbackLaw:
        """Create saturated linear law lambda(x) = clamp(G x, lo, hi)."""
        gain = as_matrix(gain, "gain")
        return cls(FeedbackKind.SATURATED, gain, np.zeros(gain.shape[0]), sat_lo, sat_hi)

    @classmethod
    def constant(cls, value: npt.ArrayLike, n: int) -> FeedbackLaw:
        """Create constant law lambda(x) = value."""
        value = as_vector(value, "value")
        return cls(FeedbackKind.CONSTANT, np.zeros((value.size, n)), value)

    def to_dict(self) -> dict[str, Any]:
        """Return JSON-ready feedback law."""
        data: dict[str, Any] = {
            "variant": self.kind.value,
            "gain": self.gain.tolist(),
            "offset": self.offset.tolist(),
        }
        if self.kind is FeedbackKind.SATURATED:
            data["sat_lo"] = self.sat_lo.tolist()
            data["sat_hi"] = self.sat_hi.tolist()
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> FeedbackLaw:
        """Create feedback law from JSON document."""
        return cls(
            kind=FeedbackKind(data["variant"]),
            gain=data["gain"],
            offset=data["offset"],
            sat_lo=data.get("sat_lo"),
            sat_hi=data.get("sat_hi"),
        )


def eval_feedback(law: FeedbackLaw, x: npt.ArrayLike) -> ColVec:
    """Evaluate lambda(x)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (law.n,):
        raise DimensionMismatchError(f"State has shape {x.shape}, expected ({law.n},).")
    return apply_feedback(law, x)


def apply_feedback(law: FeedbackLaw, x: np.ndarray) -> np.ndarray:
    """
    Evaluate lambda on one state or on a stack of states (one per row).

    No argument checks; used inside integration loops.
    """
    if law.kind is FeedbackKind.CONSTANT:
        return np.broadcast_to(law.offset, (*x.shape[:-1], law.m)).copy()
    raw = x @ law.gain.T
    if law.kind is FeedbackKind.SATURATED:
        return np.minimum(np.maximum(raw, law.sat_lo), law.sat_hi)
    return raw


def saturation_bounds(
    input_box: tuple[tuple[float, float], ...],
    margin: float = DEFAULT_SATURATION_MARGIN,
) -> tuple[ColVec, ColVec]:
    """
    Return clamp bounds keeping the input strictly inside a (shifted) box.

    Each bound is moved inwards by ``margin`` times the interval width.
    """
    lo = np.array([a + margin * (b - a) for a, b in input_box])
    hi = np.array([b - margin * (b - a) for a, b in input_box])
    return lo, hi


@dataclass(frozen=True)
class LyapunovSpec:
    """Quadratic Lyapunov candidate W(x) = scale * x' Q x."""

    Q: Mat
    scale: float = 1.0
    kind: str = "quadratic"

    def __post_init__(self) -> None:
        """Validate Q and scale."""
        if self.kind != "quadratic":
            raise ValueError(f"Unsupported Lyapunov kind '{self.kind}'.")
        Q = _frozen(as_matrix(self.Q, "Q"))
        if not is_positive_definite(Q):
            raise ValueError("Lyapunov matrix Q must be positive definite.")
        if not self.scale > 0:
            raise ValueError("Lyapunov scale must be positive.")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "scale", float(self.scale))

    def value(self, x: ColVec) -> float:
        """Return W(x)."""
        return float(self.scale * x @ self.Q @ x)

    def gradient(self, x: ColVec) -> ColVec:
        """Return grad W(x) = 2 scale Q x."""
        return 2.0 * self.scale * (self.Q @ x)

    def level_point(self, direction: ColVec, level: float) -> ColVec:
        """Scale direction d to t d with W(t d) = level."""
        return direction * np.sqrt(level / self.value(direction))

    def to_dict(self) -> dict[str, Any]:
        """Return JSON-ready Lyapunov specification."""
        return {"kind": self.kind, "Q": self.Q.tolist(), "scale": self.scale}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> LyapunovSpec:
        """Create Lyapunov specification from JSON document."""
        return cls(Q=data["Q"], scale=data.get("scale", 1.0), kind=data.get("kind", "quadratic"))
