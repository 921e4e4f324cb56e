"""
Plant and Luenberger observer in closed loop.

The loop is simulated in (x, xhat) coordinates, both given relative to the
operating point:

    u     = lambda(xhat)
    x'    = A(u) x + B(u)
    xhat' = A(u) xhat + B(u) - alpha P^-1 C' C (xhat - x)

The error ``eps = xhat - x`` obeys ``V(eps) = eps' P eps`` decaying at least
like ``-2 alpha |C eps|^2`` whenever P A(u) + A(u)' P <= 0.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING, Any

import numpy as np
import numpy.typing as npt
import scipy.linalg

from .analysis import adaptive_gain_from_correction
from .errors import DimensionMismatchError
from .linalg import ColVec, Mat, as_vector
from .system import FeedbackLaw, InputAffineSystem, LyapunovSpec, apply_feedback, eval_A, eval_B, eval_feedback

if TYPE_CHECKING:
    from .simulation import Trajectory

FINITE_DIFFERENCE_STEP = 1e-6


class GainKind(StrEnum):
    """Observer gain variants."""

    CONSTANT = "constant"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class GainPolicy:
    """Observer gain: a constant alpha > 0 or the adaptive alpha(xhat, C eps) built from W."""

    kind: GainKind
    alpha: float | None = None
    W: LyapunovSpec | None = None

    def __post_init__(self) -> None:
        """Validate variant fields."""
        kind = GainKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is GainKind.CONSTANT:
            if self.alpha is None or not self.alpha > 0 or not np.isfinite(self.alpha):
                raise ValueError(f"Constant observer gain must be positive, got {self.alpha}.")
            object.__setattr__(self, "alpha", float(self.alpha))
        elif self.W is None:
            raise ValueError("Adaptive observer gain needs a Lyapunov specification.")

    @classmethod
    def constant(cls, alpha: float) -> GainPolicy:
        """Create constant gain."""
        return cls(GainKind.CONSTANT, alpha=alpha)

    @classmethod
    def adaptive(cls, W: LyapunovSpec) -> GainPolicy:
        """Create adaptive gain."""
        return cls(GainKind.ADAPTIVE, W=W)

    @property
    def label(self) -> str:
        """Return short label for plots and tables."""
        if self.kind is GainKind.CONSTANT:
            return f"alpha={self.alpha:g}"
        return "adaptive"

    def to_dict(self) -> dict[str, Any]:
        """Return JSON-ready gain policy."""
        if self.kind is GainKind.CONSTANT:
            return {"variant": self.kind.value, "alpha": self.alpha}
        return {"variant": self.kind.value, "lyapunov": self.W.to_dict()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> GainPolicy:
        """Create gain policy from JSON document."""
        if GainKind(data["variant"]) is GainKind.CONSTANT:
            return cls.constant(data["alpha"])
        return cls.adaptive(LyapunovSpec.from_dict(data["lyapunov"]))


@dataclass(frozen=True)
class ClosedLoopSystem:
    """Shifted plant, feedback law and observer gain, with the operating point for physical values."""

    sys: InputAffineSystem
    law: FeedbackLaw
    gain: GainPolicy
    x_star: ColVec | None = None
    u_star: ColVec | None = None
    correction_sign: float = 1.0
    pinv_ct: Mat = field(init=False, repr=False, compare=False)
    pinv_ctc: Mat = field(init=False, repr=False, compare=False)
    A_flat: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        """Validate dimensions and precompute P^-1 C' and P^-1 C' C."""
        if self.law.n != self.sys.n or self.law.m != self.sys.m:
            raise DimensionMismatchError("Feedback law does not match the system dimensions.")
        if self.gain.W is not None and self.gain.W.Q.shape != (self.sys.n, self.sys.n):
            raise DimensionMismatchError("Lyapunov matrix does not match the state dimension.")
        x_star = np.zeros(self.sys.n) if self.x_star is None else as_vector(self.x_star, "x_star")
        u_star = np.zeros(self.sys.m) if self.u_star is None else as_vector(self.u_star, "u_star")
        if x_star.shape != (self.sys.n,) or u_star.shape != (self.sys.m,):
            raise DimensionMismatchError("Operating point does not match the system dimensions.")
        factor = scipy.linalg.cho_factor(self.sys.P)
        pinv_ct = scipy.linalg.cho_solve(factor, self.sys.C.T)
        object.__setattr__(self, "x_star", x_star)
        object.__setattr__(self, "u_star", u_star)
        object.__setattr__(self, "pinv_ct", pinv_ct)
        object.__setattr__(self, "pinv_ctc", pinv_ct @ self.sys.C)
        object.__setattr__(self, "A_flat", self.sys.A_stack.reshape(self.sys.m, -1))

    @property
    def n(self) -> int:
        """Return plant state dimension."""
        return self.sys.n

    def with_gain(self, gain: GainPolicy) -> ClosedLoopSystem:
        """Return same loop with another observer gain."""
        return ClosedLoopSystem(self.sys, self.law, gain, self.x_star, self.u_star, self.correction_sign)

    def with_correction_sign(self, sign: float) -> ClosedLoopSystem:
        """Return same loop with the observer correction multiplied by sign."""
        return ClosedLoopSystem(self.sys, self.law, self.gain, self.x_star, self.u_star, sign)

    def gain_value(self, xhat: ColVec, correction: ColVec) -> float:
        """Return alpha for the current estimate and correction direction P^-1 C' C eps."""
        if self.gain.kind is GainKind.CONSTANT:
            return self.gain.alpha
        return adaptive_gain_from_correction(self.gain.W, xhat, correction)

    def nominal_gain(self) -> float:
        """Return alpha at the origin."""
        return self.gain_value(np.zeros(self.n), np.zeros(self.n))

    def coefficients(self, xhat: ColVec) -> tuple[Mat, ColVec, ColVec]:
        """Return A(u), B(u) and u = lambda(xhat)."""
        u = eval_feedback(self.law, xhat)
        return eval_A(self.sys, u), eval_B(self.sys, u), u

    def _drift_terms(self, xhat: np.ndarray) -> tuple[Mat, ColVec]:
        """Return A(u) and B(u) at u = lambda(xhat) for a stack of estimates (leading axes kept)."""
        u = apply_feedback(self.law, xhat)
        A = self.sys.A0 + (u @ self.A_flat).reshape(*u.shape[:-1], self.n, self.n)
        return A, self.sys.B0 + u @ self.sys.B_stack

    def rhs(self, z: np.ndarray) -> np.ndarray:
        """Return the (x, xhat) field for a float array of size 2n, without argument checks."""
        pair = z.reshape(2, self.n)
        A, B = self._drift_terms(pair[1])
        correction = self.pinv_ctc @ (pair[1] - pair[0])
        rates = pair @ A.T + B
        rates[1] -= (self.correction_sign * self.gain_value(pair[1], correction)) * correction
        return rates.ravel()

    def error_rhs(self, w: np.ndarray) -> np.ndarray:
        """Return the (xhat, eps) field for a float array of size 2n, without argument checks."""
        pair = w.reshape(2, self.n)
        A, B = self._drift_terms(pair[0])
        correction = self.pinv_ctc @ pair[1]
        rates = pair @ A.T
        rates[0] += B
        rates -= (self.correction_sign * self.gain_value(pair[0], correction)) * correction
        return rates.ravel()

    def stacked_rhs(self, alphas: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
        """
        Return the field of one (x, xhat) copy per constant gain, stacked into a single state.

        Copy j occupies entries [2nj, 2n(j+1)) and is corrected with alphas[j].
        """
        n = self.n
        copies = len(alphas)
        gains = self.correction_sign * np.asarray(alphas, dtype=np.float64)[:, np.newaxis]
        pinv_ctc_t = self.pinv_ctc.T

        def rhs(z: np.ndarray) -> np.ndarray:
            pairs = z.reshape(copies, 2, n)
            A, B = self._drift_terms(pairs[:, 1])
            rates = pairs @ A.transpose(0, 2, 1) + B[:, np.newaxis, :]
            rates[:, 1] -= gains * ((pairs[:, 1] - pairs[:, 0]) @ pinv_ctc_t)
            return rates.ravel()

        return rhs


def _split(z: npt.ArrayLike, n: int) -> tuple[ColVec, ColVec]:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (2 * n,):
        raise DimensionMismatchError(f"Closed-loop state has shape {z.shape}, expected ({2 * n},).")
    return z[:n], z[n:]


def closed_loop_field(cls: ClosedLoopSystem, z: npt.ArrayLike) -> ColVec:
    """Return the right-hand side for z = (x, xhat)."""
    x, xhat = _split(z, cls.n)
    return cls.rhs(np.concatenate([x, xhat]))


def error_coordinates_field(cls: ClosedLoopSystem, w: npt.ArrayLike) -> ColVec:
    """Return the right-hand side for w = (xhat, eps) with eps = xhat - x."""
    xhat, eps = _split(w, cls.n)
    return cls.error_rhs(np.concatenate([xhat, eps]))


def feedback_jacobian(cls: ClosedLoopSystem, step: float = FINITE_DIFFERENCE_STEP) -> Mat:
    """Return d/dx [A(lambda(x)) x + B(lambda(x))] at 0 by central differences."""
    n = cls.n
    jacobian = np.empty((n, n))
    for j in range(n):
        offset = np.zeros(n)
        offset[j] = step
        forward = _drift(cls, offset)
        backward = _drift(cls, -offset)
        jacobian[:, j] = (forward - backward) / (2.0 * step)
    return jacobian


def _drift(cls: ClosedLoopSystem, x: ColVec) -> ColVec:
    A, B, _ = cls.coefficients(x)
    return A @ x + B


def error_block(cls: ClosedLoopSystem, alpha: float | None = None) -> Mat:
    """Return A0 - alpha P^-1 C' C (alpha defaults to the gain at the origin)."""
    alpha = cls.nominal_gain() if alpha is None else alpha
    return cls.sys.A0 - alpha * cls.pinv_ctc


def linearized_closed_loop(cls: ClosedLoopSystem, alpha: float | None = None) -> Mat:
    """
    Return the linearization at the origin in (xhat, eps) coordinates.

    The matrix is block upper triangular; the eps-block is exactly
    A0 - alpha P^-1 C' C.
    """
    alpha = cls.nominal_gain() if alpha is None else alpha
    n = cls.n
    return np.block(
        [
            [feedback_jacobian(cls), -alpha * cls.pinv_ctc],
            [np.zeros((n, n)), error_block(cls, alpha)],
        ],
    )


def lyapunov_V(P: npt.ArrayLike, eps: npt.ArrayLike) -> float:
    """Return V(eps) = eps' P eps."""
    P = np.asarray(P, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if P.shape != (eps.size, eps.size):
        raise DimensionMismatchError("P and eps do not fit together.")
    return float(eps @ P @ eps)


def decay_residual(traj: Trajectory, cls: ClosedLoopSystem) -> np.ndarray:
    """
    Return (V_(i+1) - V_i) / dt + (1/dt) int 2 alpha |C eps|^2 per recorded interval.

    Along a dissipative loop every value is at most zero up to quadrature error.
    For a constant gain the integral uses the trapezoid rule with end
    corrections from the error derivative; for an adaptive gain the plain
    trapezoid rule with the recorded gains.
    """
    n = cls.n
    states = traj.states
    eps = states[:, n:] - states[:, :n]
    xhat = states[:, n:] - traj.x_star
    dt = np.diff(traj.times)
    C_eps = eps @ cls.sys.C.T
    penalty = 2.0 * traj.gain_series * np.sum(C_eps**2, axis=1)
    integral = 0.5 * dt * (penalty[:-1] + penalty[1:])
    if cls.gain.kind is GainKind.CONSTANT:
        alpha = cls.gain.alpha
        u = apply_feedback(cls.law, xhat)
        eps_dot = eps @ cls.sys.A0.T + np.einsum("km,mab,kb->ka", u, cls.sys.A_stack, eps)
        eps_dot -= (cls.correction_sign * alpha) * (eps @ cls.pinv_ctc.T)
        derivative = 4.0 * alpha * np.sum(C_eps * (eps_dot @ cls.sys.C.T), axis=1)
        integral += dt**2 * (derivative[:-1] - derivative[1:]) / 12.0
    return (np.diff(traj.v_series) + integral) / dt


def decay_tolerance(traj: Trajectory, relative: float = 1e-6) -> float:
    """Return the admissible decay residual, relative to the largest V."""
    return relative * float(np.max(traj.v_series)) if len(traj.v_series) else 0.0
