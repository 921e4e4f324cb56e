"""Module to test dissipativity, detectability, observability and gain bound checks."""

import numpy as np
import pytest

from dissiped import analysis, settings
from dissiped.analysis import CompactBox
from dissiped.errors import DimensionMismatchError, NotStrictLyapunovError
from dissiped.scenarios import HeatExchangerParams, build_harmonic_oscillator, build_heat_exchanger
from dissiped.system import FeedbackLaw, InputAffineSystem, LyapunovSpec, eval_A

ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])


def oscillator(box: tuple[float, float] = (-0.5, 0.5)) -> InputAffineSystem:
    """Return the oscillator with frequency 1 + u."""
    return InputAffineSystem(ROTATION, (ROTATION,), np.zeros(2), ([1.0, 0.0],), [[0.0, 1.0]], np.eye(2), (box,))


def contracting() -> InputAffineSystem:
    """Return x' = -x with a dummy input channel."""
    return InputAffineSystem(-np.eye(2), (np.zeros((2, 2)),), np.zeros(2), (np.zeros(2),), [[1.0, 0.0]], np.eye(2), ((-1, 1),))


def test_compact_box() -> None:
    """Vertices come first in the point set."""
    box = CompactBox.symmetric(2.0, 3)
    assert box.vertices().shape == (8, 3)
    points = box.points(np.random.default_rng(0), 5)
    assert points.shape == (13, 3)
    assert np.all(np.abs(points) <= 2.0)  # noqa: PLR2004
    with pytest.raises(ValueError, match="exceeds"):
        CompactBox([1.0], [0.0])


def test_dissipativity() -> None:
    """Skew-symmetric A(u) passes, an expanding system fails."""
    result = analysis.check_dissipativity(oscillator())
    assert result.passed
    assert abs(result.worst_eig) <= 1e-15  # noqa: PLR2004

    expanding = InputAffineSystem(np.eye(2), (np.zeros((2, 2)),), np.zeros(2), (np.zeros(2),), [[1.0, 0.0]], np.eye(2), ((0, 1),))
    result = analysis.check_dissipativity(expanding)
    assert not result.passed
    assert result.worst_eig == pytest.approx(2.0)
    with pytest.raises(ValueError, match="two samples"):
        analysis.check_dissipativity(expanding, u_samples=1)


def test_detectability() -> None:
    """Hautus test on detectable and undetectable pairs."""
    assert analysis.check_detectability([[0.0, 1.0]], ROTATION).passed
    assert analysis.check_detectability(np.eye(2), np.diag([3.0, 5.0])).passed
    result = analysis.check_detectability([[0.0, 1.0]], np.diag([1.0, -1.0]))
    assert not result.passed
    assert result.offending_eigenvalue == pytest.approx(1.0)
    # unobservable but stable mode is detectable
    assert analysis.check_detectability([[1.0, 0.0]], np.diag([1.0, -1.0])).passed


def test_detectability_complex_mode() -> None:
    """Unobserved oscillating mode is found through the complex Hautus stack."""
    A = np.zeros((3, 3))
    A[:2, :2] = ROTATION
    A[2, 2] = -1.0
    result = analysis.check_detectability([[0.0, 0.0, 1.0]], A)
    assert not result.passed
    assert abs(result.offending_eigenvalue.imag) == pytest.approx(1.0)


def test_observability() -> None:
    """Kalman rank and exact determinant of the oscillator."""
    system = oscillator()
    assert analysis.observability_rank(system.C, system.A0) == 2  # noqa: PLR2004
    assert analysis.observability_rank(system.C, eval_A(system, [-1.0])) == 1
    assert analysis.exact_observability_det(system.C, system.A0) == -1
    result = analysis.check_target_observability(system.C, system.A0)
    assert result.passed
    assert result.det == pytest.approx(-1.0)


def test_scan_singular_inputs() -> None:
    """Determinant -(1 + u) vanishes only at u = -1."""
    assert analysis.scan_singular_inputs(oscillator()) == []
    candidates = analysis.scan_singular_inputs(oscillator((-2.0, 0.0)))
    assert len(candidates) == 1
    assert candidates[0].u == pytest.approx(-1.0, abs=1e-11)


def test_scan_singular_inputs_heat_exchanger() -> None:
    """Triple root of the heat exchanger determinant at k^2/(gamma1 gamma2)."""
    params = HeatExchangerParams.from_name(u_M=4.0, u_star=1.0)
    bundle = build_heat_exchanger(params)
    candidates = analysis.scan_singular_inputs(bundle.shifted)
    assert len(candidates) == 1
    assert candidates[0].u + params.u_star == pytest.approx(params.singular_flow, abs=1e-9)


def test_spectrum_and_feedback_detectability() -> None:
    """Oscillator spectrum lies on the imaginary axis; (K, A0) is observable."""
    spectrum = analysis.eigen_spectrum(ROTATION)
    assert abs(spectrum.max_real) <= 1e-14  # noqa: PLR2004
    assert analysis.check_feedback_detectability(FeedbackLaw.linear([[-1.0, 0.0]]), oscillator()).passed


def test_estimate_alpha0() -> None:
    """Gain bound of x' = -x with W = |x|^2 on unit boxes."""
    system = contracting()
    box = CompactBox.symmetric(1.0, 2)
    alpha0 = analysis.estimate_alpha0(system, FeedbackLaw.linear([[0.0, 0.0]]), LyapunovSpec(np.eye(2)), box, box)
    rho = 1.05 * 2.0
    assert alpha0 == pytest.approx(2.0 * rho / (2.0 * (1.0 + 2.0 * np.sqrt(rho))), rel=1e-12)


def test_estimate_alpha0_not_strict() -> None:
    """L_f W vanishes on the x2 axis of the oscillator."""
    bundle = build_harmonic_oscillator()
    with pytest.raises(NotStrictLyapunovError):
        analysis.estimate_alpha0(bundle.shifted, bundle.law, bundle.lyapunov, bundle.K1, bundle.K2, samples=100)


def test_lyapunov_decay() -> None:
    """grad W f + W = -|x|^2 for the contracting system."""
    result = analysis.check_lyapunov_decay(
        contracting(),
        FeedbackLaw.linear([[0.0, 0.0]]),
        LyapunovSpec(np.eye(2)),
        CompactBox.symmetric(1.0, 2),
        samples=50,
    )
    assert result.passed
    assert result.worst_value <= 0.0


def test_adaptive_gain() -> None:
    """Adaptive gain formula and positivity."""
    W = LyapunovSpec(np.eye(2))
    C = np.array([[1.0, 0.0]])
    assert analysis.adaptive_gain(W, [0.0, 0.0], [0.0], C, np.eye(2)) == pytest.approx(0.5)
    assert analysis.adaptive_gain(W, [3.0, 4.0], [0.0], C, np.eye(2)) == pytest.approx(25.0 / 22.0)
    assert analysis.adaptive_gain(W, [0.0, 0.0], [3.0], C, np.eye(2)) == pytest.approx(1.0 / 8.0)


def test_analyze_report() -> None:
    """Full report of the oscillator."""
    bundle = build_harmonic_oscillator()
    report = analysis.analyze(bundle.shifted, bundle.law, bundle.lyapunov, bundle.K1, bundle.K2, samples=100)
    assert report.assumptions_hold
    assert report.alpha0 is None
    assert any("alpha0 not available" in note for note in report.notes)
    data = report.to_dict()
    assert data["assumptions_hold"] is True
    assert data["observability"]["rank"] == 2  # noqa: PLR2004
    assert data["observability"]["singular_inputs_found"] == []
    table = report.format_table()
    assert table.splitlines()[0].startswith("dissipativity")


def test_detectability_invariant_under_similarity() -> None:
    """(C T^-1, T A T^-1) has the same detectability verdict as (C, A)."""
    rng = np.random.default_rng(12)
    pairs = (
        (np.array([[0.0, 1.0]]), ROTATION),
        (np.array([[0.0, 1.0]]), np.diag([1.0, -1.0])),
        (np.array([[1.0, 0.0, 0.0]]), np.array([[-1.0, 1.0, 0.0], [0.0, -2.0, 0.0], [0.0, 0.0, 0.5]])),
    )
    for C, A in pairs:
        expected = analysis.check_detectability(C, A).passed
        for _ in range(5):
            T = np.eye(len(A)) + 0.3 * rng.standard_normal(A.shape)
            T_inv = np.linalg.inv(T)
            assert analysis.check_detectability(C @ T_inv, T @ A @ T_inv).passed == expected
    assert analysis.check_detectability(*pairs[0]).passed
    assert not analysis.check_detectability(*pairs[1]).passed


def test_heat_exchanger_pencil_determinant() -> None:
    """Exact determinant is k^3 gamma2^6 (k^2 - gamma1 gamma2 (u_bar + u*))^3 up to sign."""
    params = HeatExchangerParams.from_name()
    shifted = build_heat_exchanger(params).shifted
    pencil = analysis.ObservabilityPencil.from_system(shifted)
    lo, hi = shifted.input_box[0]
    for u_bar in np.linspace(lo, hi, 200):
        base = params.k**2 - params.gamma1 * params.gamma2 * (u_bar + params.u_star)
        expected = abs(params.k**3 * params.gamma2**6 * base**3)
        assert abs(float(pencil.det(float(u_bar)))) == pytest.approx(expected, rel=1e-6)


def test_pencil_matches_exact_determinant() -> None:
    """Pencil evaluation equals the determinant of the evaluated pair."""
    shifted = build_heat_exchanger().shifted
    pencil = analysis.ObservabilityPencil.from_system(shifted)
    lo, hi = shifted.input_box[0]
    for u_bar in (lo, 0.0, 0.5 * hi, hi):
        exact = analysis.exact_observability_det(shifted.C, eval_A(shifted, [u_bar]))
        assert float(pencil.det(u_bar)) == pytest.approx(float(exact), rel=1e-6)
    two_outputs = InputAffineSystem(
        -np.eye(2),
        (np.zeros((2, 2)),),
        np.zeros(2),
        (np.zeros(2),),
        np.eye(2),
        np.eye(2),
        ((-1, 1),),
    )
    with pytest.raises(DimensionMismatchError):
        analysis.ObservabilityPencil.from_system(two_outputs)


def test_analyze_log_levels() -> None:
    """Informational notes are logged at INFO, missing alpha0 at WARNING."""
    bundle = build_harmonic_oscillator()
    records = []
    handler = settings.logger.add(lambda message: records.append(message.record), level="DEBUG")
    try:
        analysis.analyze(bundle.shifted, bundle.law, bundle.lyapunov, bundle.K1, bundle.K2, samples=100)
    finally:
        settings.logger.remove(handler)
    levels = {record["message"]: record["level"].name for record in records}
    assert levels[analysis.ADAPTIVE_GAIN_NOTE] == "INFO"
    warnings = [message for message, level in levels.items() if level == "WARNING"]
    assert any(message.startswith("alpha0 not available") for message in warnings)
