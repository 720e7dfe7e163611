"""Friction model: sliding asymptotics and presliding hysteresis."""

import numpy as np
import pytest

from payloadcal.friction import (
    FrictionError,
    FrictionSpec,
    FrictionState,
    friction_torque,
    friction_torque_batch,
)


def advance(spec, qd, n, dt=0.005, state=None):
    state = state or FrictionState()
    tau = None
    for _ in range(n):
        tau, state = friction_torque(spec, state, qd, dt)
    return tau, state


class TestSlidingRegime:
    def test_saturates_to_coulomb_plus_viscous(self, friction):
        qd = np.full(6, 0.8)  # well above the smoothing velocity
        tau, _ = advance(friction, qd, 400)
        expected = friction.coulomb + friction.viscous * qd
        assert np.allclose(tau, expected, rtol=1e-3)

    def test_odd_symmetry(self, friction):
        qd = np.array([0.5, -0.5, 0.3, -0.3, 1.0, -1.0])
        tau_p, _ = advance(friction, qd, 300)
        tau_n, _ = advance(friction, -qd, 300)
        assert np.allclose(tau_p, -tau_n, atol=1e-12)

    def test_viscous_only_is_linear(self):
        spec = FrictionSpec.viscous_only()
        for scale in (0.5, 2.0):
            qd = scale * np.array([0.1, -0.2, 0.3, 0.05, -0.15, 0.25])
            tau, _ = friction_torque(spec, FrictionState(), qd, 0.005)
            assert np.allclose(tau, spec.viscous * qd, atol=1e-12)


class TestPresliding:
    def test_bristle_state_stays_clamped(self, friction):
        state = FrictionState()
        rng = np.random.default_rng(5)
        for _ in range(200):
            qd = rng.normal(0, 0.01, 6)
            _, state = friction_torque(friction, state, qd, 0.005)
            assert np.all(np.abs(state.z) <= friction.bristle_limit + 1e-15)

    def test_hysteresis_loop_encloses_area(self, friction):
        """Slow triangular velocity cycle: torque-velocity curve on the way
        up differs from the way down."""
        n = 400
        qd_up = np.linspace(-0.015, 0.015, n)
        cycle = np.concatenate([qd_up, qd_up[::-1]])
        state = FrictionState()
        taus = []
        for v in cycle:
            tau, state = friction_torque(friction, state, np.full(6, v), 0.005)
            taus.append(tau[0])
        taus = np.asarray(taus)
        fwd = taus[:n]
        back = taus[n:][::-1]
        assert np.max(np.abs(fwd - back)) > 0.01

    def test_zero_velocity_keeps_state(self, friction):
        _, state = advance(friction, np.full(6, 0.01), 100)
        tau1, state1 = friction_torque(friction, state, np.zeros(6), 0.005)
        assert np.allclose(state1.z, state.z)
        assert np.any(tau1 != 0.0)  # presliding torque persists at rest


def test_batch_matches_sequential(friction, rng):
    qds = rng.normal(0, 0.2, (300, 6))
    tau_b, end_b = friction_torque_batch(friction, FrictionState(), qds, 0.005)
    state = FrictionState()
    for i in range(300):
        tau, state = friction_torque(friction, state, qds[i], 0.005)
        assert np.allclose(tau_b[i], tau, atol=1e-12)
    assert np.allclose(end_b.z, state.z, atol=1e-14)


class TestValidation:
    def test_negative_coefficient_rejected(self):
        with pytest.raises(FrictionError):
            FrictionSpec(
                coulomb=[-1.0] * 6,
                viscous=[0.1] * 6,
                stribeck_vel=[0.02] * 6,
                presliding_stiffness=[10.0] * 6,
            )

    def test_bad_dt_rejected(self, friction):
        with pytest.raises(FrictionError):
            friction_torque(friction, FrictionState(), np.zeros(6), 0.0)

    def test_none_preset_is_frictionless(self):
        spec = FrictionSpec.none()
        tau, _ = friction_torque(spec, FrictionState(), np.full(6, 0.5), 0.01)
        assert np.allclose(tau, 0.0)
