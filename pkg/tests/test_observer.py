"""Module to test the plant/observer closed loop."""

import numpy as np
import pytest

from dissiped import observer
from dissiped.observer import ClosedLoopSystem, GainKind, GainPolicy
from dissiped.scenarios import build_cuk, build_harmonic_oscillator
from dissiped.simulation import SimConfig, integrate
from dissiped.system import LyapunovSpec


def harmonic_loop(alpha: float = 1.0) -> ClosedLoopSystem:
    """Return the oscillator loop with constant gain."""
    return build_harmonic_oscillator().closed_loop(GainPolicy.constant(alpha))


def test_gain_policy() -> None:
    """Constant gains must be positive; adaptive gains need W."""
    assert GainPolicy.constant(2).label == "alpha=2"
    assert GainPolicy.adaptive(LyapunovSpec(np.eye(2))).kind is GainKind.ADAPTIVE
    with pytest.raises(ValueError, match="positive"):
        GainPolicy.constant(0.0)
    with pytest.raises(ValueError, match="Lyapunov"):
        GainPolicy(GainKind.ADAPTIVE)
    adaptive = GainPolicy.adaptive(LyapunovSpec(np.eye(2), scale=2.0))
    assert GainPolicy.from_dict(adaptive.to_dict()).W.scale == 2.0  # noqa: PLR2004


def test_fields_agree() -> None:
    """(xhat, eps) field is the difference form of the (x, xhat) field."""
    cls = harmonic_loop(1.5)
    z = np.array([0.3, -0.7, 0.1, 0.4])
    x, xhat = z[:2], z[2:]
    z_dot = observer.closed_loop_field(cls, z)
    w_dot = observer.error_coordinates_field(cls, np.concatenate([xhat, xhat - x]))
    np.testing.assert_allclose(w_dot[:2], z_dot[2:], atol=1e-14)
    np.testing.assert_allclose(w_dot[2:], z_dot[2:] - z_dot[:2], atol=1e-14)


def test_observer_matches_plant_without_error() -> None:
    """Observer started on the plant state follows it."""
    cls = harmonic_loop()
    z_dot = observer.closed_loop_field(cls, [0.2, -0.1, 0.2, -0.1])
    np.testing.assert_array_equal(z_dot[:2], z_dot[2:])


def test_error_block_and_linearization() -> None:
    """eps-block is A0 - alpha P^-1 C'C and the linearization is block triangular."""
    cls = harmonic_loop(2.0)
    block = observer.error_block(cls)
    np.testing.assert_allclose(block, [[0.0, -1.0], [1.0, -2.0]])
    assert np.all(np.linalg.eigvals(block).real < 0)

    np.testing.assert_allclose(observer.feedback_jacobian(cls), [[-1.0, -1.0], [1.0, 0.0]], atol=1e-8)
    linearized = observer.linearized_closed_loop(cls)
    np.testing.assert_array_equal(linearized[2:, :2], np.zeros((2, 2)))
    np.testing.assert_allclose(linearized[2:, 2:], block)


def test_lyapunov_V() -> None:
    """Error energy."""
    assert observer.lyapunov_V(np.diag([1.0, 2.0]), [1.0, 1.0]) == pytest.approx(3.0)


def test_adaptive_gain_value() -> None:
    """Adaptive loop evaluates the gain at the estimate."""
    bundle = build_harmonic_oscillator()
    cls = bundle.closed_loop(GainPolicy.adaptive(bundle.lyapunov))
    assert cls.nominal_gain() == pytest.approx(0.5)
    assert cls.gain_value(np.array([3.0, 4.0]), np.zeros(2)) == pytest.approx(25.0 / 22.0)


def test_decay_residual() -> None:
    """Error energy decays like -2 alpha |C eps|^2; a flipped correction violates it."""
    bundle = build_harmonic_oscillator()
    cfg = SimConfig(t_final=2.0, h=1e-3)
    cls = harmonic_loop()
    traj = integrate(cls, bundle.z0, cfg)
    assert np.max(observer.decay_residual(traj, cls)) <= observer.decay_tolerance(traj)
    assert np.all(np.diff(traj.v_series) <= 1e-12)  # noqa: PLR2004

    flipped = cls.with_correction_sign(-1.0)
    traj = integrate(flipped, bundle.z0, cfg)
    assert np.max(observer.decay_residual(traj, flipped)) > observer.decay_tolerance(traj)


def test_fields_agree_on_random_points() -> None:
    """eps' equals xhat' - x' on random states of the Cuk loop, for constant and adaptive gains."""
    bundle = build_cuk()
    rng = np.random.default_rng(3)
    scale = np.abs(bundle.equilibrium.x_star)
    for gain in (GainPolicy.constant(10.0), GainPolicy.adaptive(bundle.lyapunov)):
        cls = bundle.closed_loop(gain)
        for _ in range(20):
            x, xhat = rng.uniform(-scale, scale), rng.uniform(-scale, scale)
            z_dot = cls.rhs(np.concatenate([x, xhat]))
            w_dot = cls.error_rhs(np.concatenate([xhat, xhat - x]))
            tol = 1e-12 * np.max(np.abs(z_dot))
            np.testing.assert_allclose(w_dot[4:], z_dot[4:] - z_dot[:4], rtol=0, atol=tol)
            np.testing.assert_allclose(w_dot[:4], z_dot[4:], rtol=0, atol=tol)
            np.testing.assert_array_equal(observer.closed_loop_field(cls, np.concatenate([x, xhat])), z_dot)


def test_stacked_rhs_matches_single_loops() -> None:
    """Stacked field evaluates every gain copy like its own loop."""
    bundle = build_cuk()
    alphas = [1.0, 10.0, 100.0]
    cls = bundle.closed_loop(GainPolicy.constant(1.0))
    rng = np.random.default_rng(5)
    scale = np.tile(np.abs(bundle.equilibrium.x_star), 2 * len(alphas))
    z = rng.uniform(-scale, scale)
    stacked = cls.stacked_rhs(alphas)(z)
    for j, alpha in enumerate(alphas):
        single = cls.with_gain(GainPolicy.constant(alpha)).rhs(z[8 * j : 8 * (j + 1)])
        tol = 1e-12 * np.max(np.abs(single))
        np.testing.assert_allclose(stacked[8 * j : 8 * (j + 1)], single, rtol=1e-12, atol=tol)


def test_adaptive_gain_positive_and_bounded() -> None:
    """Adaptive gain stays positive and bounds the correction along a run."""
    bundle = build_harmonic_oscillator()
    W = bundle.lyapunov
    cls = bundle.closed_loop(GainPolicy.adaptive(W))
    rng = np.random.default_rng(11)
    for _ in range(1000):
        xhat = rng.uniform(-10.0, 10.0, 2)
        assert cls.gain_value(xhat, cls.pinv_ctc @ rng.uniform(-10.0, 10.0, 2)) > 0

    traj = integrate(cls, bundle.z0, SimConfig(t_final=5.0, h=1e-3, record_every=5))
    xhat = traj.states[:, 2:] - traj.x_star
    assert np.all(traj.gain_series > 0)
    for i, eps in enumerate(traj.errors):
        correction = traj.gain_series[i] * np.linalg.norm(cls.pinv_ctc @ eps)
        bound = max(W.value(xhat[i]), 1.0) / (2.0 * (1.0 + np.linalg.norm(W.gradient(xhat[i]))))
        assert correction <= bound
    assert np.all(np.diff(traj.v_series) <= 1e-12)  # noqa: PLR2004
