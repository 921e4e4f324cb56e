"""
Numerical checks of the stabilization assumptions.

Contains the dissipativity scan over the input box, the Hautus detectability
test at the target input, Kalman observability stacks with an exact
determinant scan for singular inputs, and the sampling based gain bound.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt
import scipy.linalg
import sympy
from sympy.polys.domains import QQ
from sympy.polys.matrices import DomainMatrix

from . import settings
from .errors import DimensionMismatchError, NotStrictLyapunovError
from .linalg import (
    ColVec,
    Mat,
    as_matrix,
    as_vector,
    balance,
    eigenvalues,
    max_eig_symmetric,
    rank,
    solve_linear,
    spectral_norm,
)
from .system import FeedbackLaw, InputAffineSystem, LyapunovSpec, eval_A, eval_B, eval_feedback

DISSIPATIVITY_TOL = 1e-9
HAUTUS_TOL = 1e-9
SINGULAR_RELATIVE_TOL = 1e-9
BISECTION_WIDTH = 1e-12
STRICT_LYAPUNOV_TOL = 1e-12
LEVEL_INFLATION = 1.05
ADAPTIVE_GAIN_NOTE = "Adaptive gain is taken positive: max{W,1}/(2(1+|grad W|)(1+|P^-1 C'y|))."


def _complex_to_dict(value: complex | None) -> dict[str, float] | None:
    if value is None:
        return None
    return {"re": float(value.real), "im": float(value.imag)}


@dataclass(frozen=True)
class CompactBox:
    """Axis-aligned box of initial conditions."""

    lower: ColVec
    upper: ColVec

    def __post_init__(self) -> None:
        """Validate bounds."""
        lower = as_vector(self.lower, "lower")
        upper = as_vector(self.upper, "upper")
        if lower.shape != upper.shape:
            raise DimensionMismatchError("Box bounds differ in dimension.")
        if np.any(lower > upper):
            raise ValueError("Box lower bound exceeds upper bound.")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def symmetric(cls, radius: float, n: int, center: npt.ArrayLike | None = None) -> CompactBox:
        """Create box [c - r, c + r]^n."""
        center = np.zeros(n) if center is None else as_vector(center, "center")
        return cls(center - radius, center + radius)

    @property
    def dim(self) -> int:
        """Return dimension."""
        return self.lower.size

    def vertices(self) -> np.ndarray:
        """Return all 2^n corners, one per row."""
        return np.array(list(itertools.product(*zip(self.lower, self.upper))))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Return uniform samples, one per row."""
        return rng.uniform(self.lower, self.upper, size=(count, self.dim))

    def points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Return vertices followed by uniform samples."""
        return np.vstack([self.vertices(), self.sample(rng, count)])

    def to_dict(self) -> dict[str, Any]:
        """Return JSON-ready box."""
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CompactBox:
        """Create box from JSON document."""
        return cls(data["lower"], data["upper"])


@dataclass(frozen=True)
class DissipativityResult:
    """Worst eigenvalue of P A(u) + A(u)' P over the input box."""

    passed: bool
    worst_input: ColVec
    worst_eig: float
    vertex_worst: float
    grid_worst: float
    scale: float

    def to_dict(self) -> dict[str, Any]:
        """Return JSON-ready result."""
        return {
            "pass": self.passed,
            "worst_input": self.worst_input.tolist(),
            "worst_eig": self.worst_eig,
            "vertex_worst": self.vertex_worst,
            "grid_worst": self.grid_worst,
            "scale": self.scale,
        }


@dataclass(frozen=True)
class DetectabilityResult:
    """Outcome of a Hautus test."""

    passed: bool
    offending_eigenvalue: complex | None = None
    tested_eigenvalues: tuple[complex, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        """Return JSON-ready result."""
        return {
            "pass": self.passed,
            "offending_eigenvalue": _complex_to_dict(self.offending_eigenvalue),
            "tested_eigenvalues": [_complex_to_dict(value) for value in self.tested_eigenvalues],
        }


@dataclass(frozen=True)
class SingularInput:
    """Input value at which the observability stack loses rank."""

    u: float
    value: float

    def to_dict(self) -> dict[str, float]:
        """Return JSON-ready candidate."""
        return {"u": self.u, "value": self.value}


@dataclass(frozen=True)
class ObservabilityResult:
    """Rank at the target input plus singular input candidates over the box."""

    rank: int
    n: int
    det: float | None
    singular_inputs: tuple[SingularInput, ...] = ()

    @property
    def passed(self) -> bool:
        """Return True if the pair is observable at the target input."""
        return self.rank == self.n

    def to_dict(self) -> dict[str, Any]:
        """Return JSON-ready result."""
        return {
            "rank": self.rank,
            "n": self.n,
            "pass": self.passed,
            "det": self.det,
            "singular_inputs_found": [candidate.to_dict() for candidate in self.singular_inputs],
        }


@dataclass(frozen=True)
class SpectrumResult:
    """Eigenvalues of A(0) and the largest real part."""

    eigenvalues: tuple[complex, ...]
    max_real: float

    def to_dict(self) -> dict[str, Any]:
        """Return JSON-ready result."""
        return {
            "eigenvalues": [_complex_to_dict(value) for value in self.eigenvalues],
            "max_real": self.max_real,
            "hurwitz": self.max_real < 0,
        }


@dataclass(frozen=True)
class LyapunovDecayResult:
    """Worst sampled value of grad W(x) f(x) + W(x)."""

    passed: bool
    worst_value: float
    worst_point: ColVec

    def to_dict(self) -> dict[str, Any]:
        """Return JSON-ready result."""
        return {"pass": self.passed, "worst_value": self.worst_value, "worst_point": self.worst_point.tolist()}


@dataclass
class AnalysisReport:
    """Collected checks of a system around its operating point."""

    dissipativity: DissipativityResult
    detectability: DetectabilityResult
    observability: ObservabilityResult
    spectrum: SpectrumResult
    alpha0: float | None = None
    feedback_detectability: DetectabilityResult | None = None
    lyapunov_decay: LyapunovDecayResult | None = None
    notes: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        """Check report consistency."""
        if self.alpha0 is not None and not self.alpha0 > 0:
            raise ValueError("Gain bound alpha0 must be positive.")

    @property
    def assumptions_hold(self) -> bool:
        """Return True if dissipativity and target detectability hold."""
        return self.dissipativity.passed and self.detectability.passed

    def to_dict(self) -> dict[str, Any]:
        """Return JSON-ready report."""
        return {
            "dissipativity": self.dissipativity.to_dict(),
            "detectability": self.detectability.to_dict(),
            "observability": self.observability.to_dict(),
            "spectrum": self.spectrum.to_dict(),
            "alpha0": self.alpha0,
            "feedback_detectability": (
                self.feedback_detectability.to_dict() if self.feedback_detectability is not None else None
            ),
            "lyapunov_decay": self.lyapunov_decay.to_dict() if self.lyapunov_decay is not None else None,
            "notes": list(self.notes),
            "assumptions_hold": self.assumptions_hold,
        }

    def format_table(self) -> str:
        """Return human-readable summary."""

        def status(passed: bool) -> str:  # noqa: FBT001
            return "pass" if passed else "FAIL"

        rows = [
            ("dissipativity", status(self.dissipativity.passed), f"worst eig {self.dissipativity.worst_eig:.3e}"),
            (
                "detectability",
                status(self.detectability.passed),
                "" if self.detectability.passed else f"eigenvalue {self.detectability.offending_eigenvalue}",
            ),
            (
                "target observability",
                status(self.observability.passed),
                f"rank {self.observability.rank}/{self.observability.n}",
            ),
            (
                "singular inputs",
                str(len(self.observability.singular_inputs)),
                ", ".join(f"{candidate.u:.6g}" for candidate in self.observability.singular_inputs),
            ),
            ("A(0) spectrum", "hurwitz" if self.spectrum.max_real < 0 else "-", f"max Re {self.spectrum.max_real:.3e}"),
        ]
        if self.feedback_detectability is not None:
            rows.append(("feedback detectability", status(self.feedback_detectability.passed), ""))
        if self.lyapunov_decay is not None:
            rows.append(
                ("W decay", status(self.lyapunov_decay.passed), f"worst {self.lyapunov_decay.worst_value:.3e}"),
            )
        rows.append(("alpha0", "-" if self.alpha0 is None else f"{self.alpha0:.6g}", ""))
        width = max(len(name) for name, _, _ in rows)
        lines = [f"{name:<{width}}  {result:<8}  {detail}".rstrip() for name, result, detail in rows]
        lines.extend(f"note: {note}" for note in self.notes)
        return "\n".join(lines)


def _input_grid(sys: InputAffineSystem, u_samples: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, u_samples) for lo, hi in sys.input_box]
    return np.array(list(itertools.product(*axes)))


def _box_vertices(sys: InputAffineSystem) -> np.ndarray:
    return np.array(list(itertools.product(*sys.input_box)))


def dissipation_matrix(sys: InputAffineSystem, u: npt.ArrayLike) -> Mat:
    """Return P A(u) + A(u)' P."""
    PA = sys.P @ eval_A(sys, u)
    return PA + PA.T


def check_dissipativity(
    sys: InputAffineSystem,
    u_samples: int = 11,
    tol: float = DISSIPATIVITY_TOL,
) -> DissipativityResult:
    """
    Check P A(u) + A(u)' P <= 0 on the box vertices and a uniform grid.

    The symmetric part is affine in u, so the vertices decide the check; the
    grid is evaluated for diagnostics. The tolerance is relative to the
    largest entry of the symmetric part over the vertices.
    """
    if u_samples < 2:  # noqa: PLR2004
        raise ValueError("Dissipativity check needs at least two samples per channel.")
    if tol < 0:
        raise ValueError("Tolerance must be non-negative.")

    def worst_over(points: np.ndarray) -> tuple[float, ColVec]:
        values = [max_eig_symmetric(dissipation_matrix(sys, u)) for u in points]
        index = int(np.argmax(values))
        return values[index], points[index]

    vertices = _box_vertices(sys)
    scale = max(1.0, max(float(np.max(np.abs(dissipation_matrix(sys, u)))) for u in vertices))
    vertex_worst, vertex_input = worst_over(vertices)
    grid_worst, grid_input = worst_over(_input_grid(sys, u_samples))
    worst_eig, worst_input = (
        (vertex_worst, vertex_input) if vertex_worst >= grid_worst else (grid_worst, grid_input)
    )
    settings.logger.debug(f"Dissipativity: vertex worst {vertex_worst:.3e}, grid worst {grid_worst:.3e}.")
    return DissipativityResult(
        passed=worst_eig <= tol * scale,
        worst_input=np.asarray(worst_input, dtype=np.float64),
        worst_eig=worst_eig,
        vertex_worst=vertex_worst,
        grid_worst=grid_worst,
        scale=scale,
    )


def _normalized_pair(C: Mat, A: Mat) -> tuple[Mat, Mat, float]:
    """Balance A, carry the similarity over to C and scale both to unit norm."""
    balanced, diag_t = balance(A)
    C_balanced = C * diag_t
    a_scale = spectral_norm(balanced) if np.any(balanced) else 1.0
    c_scale = spectral_norm(C_balanced) if np.any(C_balanced) else 1.0
    return C_balanced / c_scale, balanced / a_scale, a_scale


def _hautus_rank_deficient(C: Mat, A: Mat, value: complex, tol: float) -> bool:
    n = A.shape[0]
    shifted = A - value * np.eye(n)
    if abs(value.imag) == 0.0:
        stack = np.vstack([shifted.real, C])
        return rank(stack, tol) < n
    # real representation of the complex stack [A - lambda I; C]
    real_part = np.vstack([shifted.real, C])
    imag_part = np.vstack([shifted.imag, np.zeros_like(C)])
    stack = np.block([[real_part, -imag_part], [imag_part, real_part]])
    return rank(stack, tol) < 2 * n


def check_detectability(C: npt.ArrayLike, A0: npt.ArrayLike, tol: float = HAUTUS_TOL) -> DetectabilityResult:
    """
    Run the Hautus test on the pair (C, A0).

    Every eigenvalue with real part >= -tol must satisfy
    rank [A0 - lambda I; C] = n. The test runs on the balanced pair scaled to
    unit norm; reported eigenvalues are in the original scale.
    """
    C = as_matrix(C, "C")
    A0 = as_matrix(A0, "A0")
    if C.shape[1] != A0.shape[0]:
        raise DimensionMismatchError("C and A0 do not fit together.")
    C_unit, A_unit, a_scale = _normalized_pair(C, A0)
    tested = []
    for value in eigenvalues(A_unit):
        if value.real < -tol:
            continue
        tested.append(complex(value) * a_scale)
        if _hautus_rank_deficient(C_unit, A_unit, complex(value), tol):
            settings.logger.debug(f"Hautus test fails at eigenvalue {value * a_scale}.")
            return DetectabilityResult(
                passed=False,
                offending_eigenvalue=complex(value) * a_scale,
                tested_eigenvalues=tuple(tested),
            )
    return DetectabilityResult(passed=True, tested_eigenvalues=tuple(tested))


def observability_matrix(C: npt.ArrayLike, A: npt.ArrayLike) -> Mat:
    """Return the Kalman stack [C; CA; ...; CA^(n-1)]."""
    C = as_matrix(C, "C")
    A = as_matrix(A, "A")
    if C.shape[1] != A.shape[0]:
        raise DimensionMismatchError("C and A do not fit together.")
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def observability_rank(C: npt.ArrayLike, A: npt.ArrayLike, tol: float = 1e-9) -> int:
    """Return rank of the Kalman stack of the balanced, unit-norm pair."""
    C_unit, A_unit, _ = _normalized_pair(as_matrix(C, "C"), as_matrix(A, "A"))
    return rank(observability_matrix(C_unit, A_unit), tol)


def check_target_observability(C: npt.ArrayLike, A0: npt.ArrayLike, tol: float = 1e-9) -> ObservabilityResult:
    """Check observability of (C, A0); the determinant is reported for square stacks."""
    C = as_matrix(C, "C")
    A0 = as_matrix(A0, "A0")
    n = A0.shape[0]
    det = float(exact_observability_det(C, A0)) if C.shape[0] == 1 else None
    return ObservabilityResult(rank=observability_rank(C, A0, tol), n=n, det=det)


def _rational_matrix(values: np.ndarray) -> DomainMatrix:
    rows = np.atleast_2d(values)
    return DomainMatrix([[_rational(value) for value in row] for row in rows], rows.shape, QQ)


def _rational(value: float) -> Any:  # noqa: ANN401
    return QQ(*float(value).as_integer_ratio())


def _sign(value: sympy.Rational) -> int:
    return int(sympy.sign(value))


def exact_observability_det(C: npt.ArrayLike, A: npt.ArrayLike) -> sympy.Rational:
    """Return the exact determinant of the square Kalman stack of the float pair."""
    C = as_matrix(C, "C")
    A = as_matrix(A, "A")
    if C.shape[0] != 1:
        raise DimensionMismatchError("Exact determinant needs a single output row.")
    return _exact_det(_rational_matrix(C), _rational_matrix(A))


def _exact_det(C: DomainMatrix, A: DomainMatrix) -> sympy.Rational:
    rows = [C]
    for _ in range(A.shape[0] - 1):
        rows.append(rows[-1] * A)
    return QQ.to_sympy(DomainMatrix.vstack(*rows).det())


@dataclass(frozen=True)
class ObservabilityPencil:
    """Exact rational copy of (C, A0, A1) of a single-input, single-output system."""

    C: DomainMatrix
    A0: DomainMatrix
    A1: DomainMatrix

    @classmethod
    def from_system(cls, sys: InputAffineSystem) -> ObservabilityPencil:
        """Convert the float coefficients once."""
        if sys.m != 1 or sys.p != 1:
            raise DimensionMismatchError("Exact determinant needs a single input and a single output.")
        return cls(_rational_matrix(sys.C), _rational_matrix(sys.A0), _rational_matrix(sys.A_coeff[0]))

    def det(self, u: float) -> sympy.Rational:
        """Return the determinant of the Kalman stack of (C, A0 + u A1), u taken exactly."""
        return _exact_det(self.C, self.A0 + self.A1 * _rational(u))


def scan_singular_inputs(sys: InputAffineSystem, grid: int = 200) -> list[SingularInput]:
    """
    Scan the input interval for values at which (C, A(u)) loses observability.

    With a single output the exact determinant of the Kalman stack is used;
    sign changes are refined by bisection on the exact sign down to a width
    of 1e-12. Otherwise the smallest singular value is scanned. Grid points
    below 1e-9 of the largest magnitude are candidates as well; candidates
    closer than one grid spacing are merged.
    """
    if sys.m != 1:
        raise DimensionMismatchError("Singular input scan supports a single input channel.")
    if grid < 10:  # noqa: PLR2004
        raise ValueError("Singular input scan needs at least 10 grid points.")
    lo, hi = sys.input_box[0]
    us = np.linspace(lo, hi, grid)
    spacing = (hi - lo) / (grid - 1) if hi > lo else 0.0
    exact = sys.p == 1
    candidates: list[SingularInput] = []

    if exact:
        det_at = ObservabilityPencil.from_system(sys).det
        dets = [det_at(float(u)) for u in us]
        values = np.array([float(det) for det in dets])
        for i in range(grid - 1):
            left, right = _sign(dets[i]), _sign(dets[i + 1])
            if left * right < 0:
                root = _bisect_sign_change(det_at, float(us[i]), float(us[i + 1]), left)
                candidates.append(SingularInput(u=root, value=float(det_at(root))))
    else:
        values = np.array(
            [np.linalg.svd(observability_matrix(sys.C, eval_A(sys, [u])), compute_uv=False)[-1] for u in us],
        )

    magnitude = np.abs(values)
    threshold = SINGULAR_RELATIVE_TOL * float(np.max(magnitude)) if np.any(magnitude) else 0.0
    candidates.extend(
        SingularInput(u=float(u), value=float(value))
        for u, value, size in zip(us, values, magnitude)
        if size <= threshold
    )
    return _merge_candidates(candidates, spacing)


def _bisect_sign_change(det_at: Callable[[float], sympy.Rational], left: float, right: float, left_sign: int) -> float:
    while right - left > BISECTION_WIDTH:
        middle = 0.5 * (left + right)
        if middle in (left, right):
            break
        sign = _sign(det_at(middle))
        if sign == 0:
            return middle
        if sign == left_sign:
            left = middle
        else:
            right = middle
    settings.logger.debug(f"Singular input refined to [{left:.15g}, {right:.15g}].")
    return 0.5 * (left + right)


def _merge_candidates(candidates: list[SingularInput], spacing: float) -> list[SingularInput]:
    merged: list[SingularInput] = []
    for candidate in sorted(candidates, key=lambda item: item.u):
        if merged and candidate.u - merged[-1].u <= spacing * (1 + 1e-9):
            if abs(candidate.value) < abs(merged[-1].value):
                merged[-1] = candidate
            continue
        merged.append(candidate)
    return merged


def eigen_spectrum(A0: npt.ArrayLike) -> SpectrumResult:
    """Return eigenvalues of A0 sorted by real part."""
    values = sorted((complex(value) for value in eigenvalues(A0)), key=lambda value: (value.real, value.imag))
    return SpectrumResult(eigenvalues=tuple(values), max_real=max(value.real for value in values))


def check_feedback_detectability(law: FeedbackLaw, sys: InputAffineSystem, tol: float = HAUTUS_TOL) -> DetectabilityResult:
    """Run the Hautus test on the pair (feedback gain, A(0))."""
    if law.n != sys.n:
        raise DimensionMismatchError("Feedback law and system differ in state dimension.")
    return check_detectability(law.gain, sys.A0, tol)


def closed_loop_drift(sys: InputAffineSystem, law: FeedbackLaw, x: ColVec) -> ColVec:
    """Return f(x) = A(lambda(x)) x + B(lambda(x))."""
    u = eval_feedback(law, x)
    return eval_A(sys, u) @ x + eval_B(sys, u)


def _rng(rng: np.random.Generator | None) -> np.random.Generator:
    return np.random.default_rng(settings.SEED) if rng is None else rng


def check_lyapunov_decay(
    sys: InputAffineSystem,
    law: FeedbackLaw,
    W: LyapunovSpec,
    box: CompactBox,
    samples: int = 1000,
    rng: np.random.Generator | None = None,
) -> LyapunovDecayResult:
    """Sample grad W(x) f(x) + W(x) over a box; it must stay non-positive."""
    rng = _rng(rng)
    best_value, best_point = -np.inf, np.zeros(sys.n)
    for x in box.points(rng, samples):
        value = float(W.gradient(x) @ closed_loop_drift(sys, law, x)) + W.value(x)
        if value > best_value:
            best_value, best_point = value, x
    scale = max(1.0, max(W.value(x) for x in box.vertices()))
    return LyapunovDecayResult(
        passed=best_value <= DISSIPATIVITY_TOL * scale,
        worst_value=best_value,
        worst_point=best_point,
    )


def _level_set_points(W: LyapunovSpec, level: float, rng: np.random.Generator, samples: int) -> np.ndarray:
    n = W.Q.shape[0]
    axes = np.vstack([np.eye(n), -np.eye(n)])
    directions = np.vstack([axes, rng.standard_normal((samples, n))])
    directions = directions[np.linalg.norm(directions, axis=1) > 0]
    return np.array([W.level_point(direction, level) for direction in directions])


def estimate_alpha0(
    sys: InputAffineSystem,
    law: FeedbackLaw,
    W: LyapunovSpec,
    K1: CompactBox,
    K2: CompactBox,
    samples: int = 2000,
    rng: np.random.Generator | None = None,
) -> float:
    """
    Estimate the gain bound alpha0 = -M1 / (R M2 |P^-1| |C|^2).

    R is the largest eigenvalue of P times the largest error energy e'Pe over
    the vertices and samples of K2. The level rho encloses K1 (inflated by
    5%); M1 = sup L_f W and M2 = 1 + sup |grad W| are sampled on W = rho
    along random and axis directions.
    """
    if K1.dim != sys.n or K2.dim != sys.n:
        raise DimensionMismatchError("Boxes must match the state dimension.")
    rng = _rng(rng)
    mu_max = max_eig_symmetric(sys.P)
    energy = max(float(eps @ sys.P @ eps) for eps in K2.points(rng, samples))
    R = mu_max * energy
    if R <= 0:
        raise ValueError("Error box K2 must contain a nonzero error.")
    rho = LEVEL_INFLATION * max(W.value(x) for x in K1.points(rng, samples))
    if rho <= 0:
        raise ValueError("Observer box K1 must contain a point with W > 0.")
    points = _level_set_points(W, rho, rng, samples)
    lie = [float(W.gradient(x) @ closed_loop_drift(sys, law, x)) for x in points]
    M1 = max(lie)
    M2 = 1.0 + max(float(np.linalg.norm(W.gradient(x))) for x in points)
    settings.logger.debug(f"Gain bound quantities: R = {R:.6g}, rho = {rho:.6g}, M1 = {M1:.6g}, M2 = {M2:.6g}.")
    if M1 >= -STRICT_LYAPUNOV_TOL:
        error_msg = f"Sampled sup of L_f W on the level set is {M1:.3e}; W is not a strict Lyapunov function."
        raise NotStrictLyapunovError(error_msg)
    P_inv_norm = spectral_norm(scipy.linalg.inv(sys.P))
    return -M1 / (R * M2 * P_inv_norm * spectral_norm(sys.C) ** 2)


def adaptive_gain_from_correction(W: LyapunovSpec, xhat: ColVec, correction: ColVec) -> float:
    """Return max{W, 1} / (2 (1 + |grad W|) (1 + |correction|)) for a precomputed P^-1 C' y."""
    return max(W.value(xhat), 1.0) / (
        2.0 * (1.0 + float(np.linalg.norm(W.gradient(xhat)))) * (1.0 + float(np.linalg.norm(correction)))
    )


def adaptive_gain(W: LyapunovSpec, xhat: npt.ArrayLike, y_err: npt.ArrayLike, C: npt.ArrayLike, P: npt.ArrayLike) -> float:
    """
    Return the state and output dependent observer gain.

    alpha(xhat, y) = max{W(xhat), 1} / (2 (1 + |grad W(xhat)|) (1 + |P^-1 C' y|)).
    The value is strictly positive.
    """
    C = as_matrix(C, "C")
    correction = solve_linear(P, C.T @ as_vector(y_err, "y_err"))
    return adaptive_gain_from_correction(W, as_vector(xhat, "xhat"), correction)


def analyze(
    sys: InputAffineSystem,
    law: FeedbackLaw | None = None,
    W: LyapunovSpec | None = None,
    K1: CompactBox | None = None,
    K2: CompactBox | None = None,
    grid: int = 200,
    samples: int = 2000,
) -> AnalysisReport:
    """Run all checks on a system given in error coordinates."""
    notes: list[str] = []
    dissipativity = check_dissipativity(sys)
    detectability = check_detectability(sys.C, sys.A0)
    target = check_target_observability(sys.C, sys.A0)
    singular = scan_singular_inputs(sys, grid) if sys.m == 1 else []
    observability = ObservabilityResult(rank=target.rank, n=target.n, det=target.det, singular_inputs=tuple(singular))
    report = AnalysisReport(
        dissipativity=dissipativity,
        detectability=detectability,
        observability=observability,
        spectrum=eigen_spectrum(sys.A0),
        notes=notes,
    )
    if law is not None:
        report.feedback_detectability = check_feedback_detectability(law, sys)
    if W is not None and law is not None:
        notes.append(ADAPTIVE_GAIN_NOTE)
        settings.logger.info(ADAPTIVE_GAIN_NOTE)
        if K1 is not None:
            report.lyapunov_decay = check_lyapunov_decay(sys, law, W, K1)
        if K1 is not None and K2 is not None:
            try:
                report.alpha0 = estimate_alpha0(sys, law, W, K1, K2, samples)
            except NotStrictLyapunovError as exc:
                notes.append(f"alpha0 not available: {exc}")
                settings.logger.warning(notes[-1])
    return report
