"""Regressor and payload-recovery oracles."""

import numpy as np
import pytest

from payloadcal.friction import FrictionSpec, FrictionState, friction_torque_batch
from payloadcal.ident import (
    IdentError,
    StackedCalibration,
    estimate_param_variation,
    modelbased_calibrate,
    payload_jacobian,
    regressor_matrix,
    solve_payload,
    stack_calibration,
)
from payloadcal.robot import (
    JointState,
    PayloadSpec,
    attach_payload,
    inverse_dynamics,
    inverse_dynamics_batch,
    random_states,
)
from payloadcal.trajectory import calibration_trajectory


class TestRegressor:
    def test_identity_with_inverse_dynamics(self, params):
        for s in random_states(params, 20, seed=0):
            y = regressor_matrix(params, s)
            assert np.allclose(y @ params.pi, inverse_dynamics(params, s), atol=1e-10)

    def test_identity_under_scaled_parameters(self, params, rng):
        """The regressor depends only on kinematics, not on the inertial
        values, so it predicts torque for any parameter vector."""
        s = random_states(params, 1, seed=5)[0]
        y = regressor_matrix(params, s)
        pi = params.pi * rng.uniform(0.2, 2.0, size=60)
        assert np.allclose(y @ pi, inverse_dynamics(params.with_pi(pi), s), atol=1e-10)

    def test_payload_delta_identity(self, params, payload_091):
        s = random_states(params, 1, seed=9)[0]
        loaded = attach_payload(params, payload_091)
        y = regressor_matrix(params, s)
        delta = inverse_dynamics(loaded, s) - inverse_dynamics(params, s)
        assert np.allclose(y @ (loaded.pi - params.pi), delta, atol=1e-10)


class TestPayloadJacobian:
    def test_matches_attach_payload(self, params, payload_091):
        jac = payload_jacobian(params)
        loaded = attach_payload(params, payload_091)
        assert np.allclose(jac @ payload_091.p, loaded.pi - params.pi, atol=1e-12)

    def test_only_last_link_rows_nonzero(self, params):
        jac = payload_jacobian(params)
        assert np.allclose(jac[:50], 0.0)
        assert np.any(jac[50:] != 0.0)


def calibration_states(rate=100.0, speed_scale=2.0):
    traj = calibration_trajectory(rate=rate, speed_scale=speed_scale)
    return [JointState(q, qd, qdd) for q, qd, qdd in zip(traj.q, traj.qd, traj.qdd)]


class TestRecovery:
    def test_exact_recovery_from_noiseless_torques(self, params, payload_091):
        """Doubled-speed calibration move, no noise, linear friction (which
        cancels in the loaded-minus-unloaded delta): the recovered mass and
        CoM are exact to numerical precision."""
        states = calibration_states()
        loaded = attach_payload(params, payload_091)
        q = np.array([s.q for s in states])
        qd = np.array([s.qd for s in states])
        qdd = np.array([s.qdd for s in states])
        dtau = inverse_dynamics_batch(loaded, q, qd, qdd) - inverse_dynamics_batch(
            params, q, qd, qdd
        )
        stack = stack_calibration(params, states, list(dtau))
        est = estimate_param_variation(stack)
        for kwargs in ({}, {"weights": est.singular_values}):
            sol = solve_payload(
                est.eps, payload_jacobian(params), row_space=est.row_space, **kwargs
            )
            assert sol.payload.mass == pytest.approx(0.91, rel=1e-6)
            assert np.allclose(sol.payload.com, [0, 0, 0.075], atol=1e-6)

    def test_row_space_projection_required(self, params, payload_091):
        """Without restricting to the identifiable subspace the minimum-norm
        estimate redistributes payload parameters across links and the
        naive solve misses badly."""
        states = calibration_states()
        loaded = attach_payload(params, payload_091)
        q = np.array([s.q for s in states])
        qd = np.array([s.qd for s in states])
        qdd = np.array([s.qdd for s in states])
        dtau = inverse_dynamics_batch(loaded, q, qd, qdd) - inverse_dynamics_batch(
            params, q, qd, qdd
        )
        stack = stack_calibration(params, states, list(dtau))
        est = estimate_param_variation(stack)
        naive = solve_payload(est.eps, payload_jacobian(params))
        assert abs(naive.payload.mass - 0.91) > 0.05

    def test_modelbased_calibrate_with_viscous_friction(self, params, payload_091):
        """End-to-end currents path: friction identical in both runs drops
        out of the measured-minus-estimated current delta."""
        spec = FrictionSpec.viscous_only()
        states = calibration_states()
        q = np.array([s.q for s in states])
        qd = np.array([s.qd for s in states])
        qdd = np.array([s.qdd for s in states])
        k = np.array([0.71, 0.81, 0.40, 0.11, 0.14, 0.08])
        tau_f, _ = friction_torque_batch(spec, FrictionState(), qd, 0.01)
        loaded = attach_payload(params, payload_091)
        y_mea = (inverse_dynamics_batch(loaded, q, qd, qdd) + tau_f) / k
        y_est = (inverse_dynamics_batch(params, q, qd, qdd) + tau_f) / k
        result = modelbased_calibrate(params, states, y_mea, y_est, k)
        assert result.payload.mass == pytest.approx(0.91, rel=1e-6)
        assert np.allclose(result.payload.com, [0, 0, 0.075], atol=1e-6)
        assert np.allclose(
            result.calibrated_params.pi - params.pi,
            attach_payload(params, payload_091).pi - params.pi,
            atol=1e-5,
        )

    def test_zero_delta_recovers_zero_payload(self, params):
        states = calibration_states()[:50]
        dtau = [np.zeros(6) for _ in states]
        stack = stack_calibration(params, states, dtau)
        est = estimate_param_variation(stack)
        sol = solve_payload(est.eps, payload_jacobian(params), row_space=est.row_space)
        assert sol.payload.mass == 0.0
        assert np.allclose(sol.payload.p, 0.0)


class TestStackValidation:
    def test_single_frame_rejected(self, params):
        s = random_states(params, 1, seed=2)[0]
        y = regressor_matrix(params, s)
        with pytest.raises(IdentError):
            StackedCalibration(y, np.zeros(6))

    def test_length_mismatch_rejected(self, params):
        states = random_states(params, 3, seed=2)
        with pytest.raises(IdentError):
            stack_calibration(params, states, [np.zeros(6)] * 2)

    def test_rank_reported(self, params):
        states = calibration_states()[:100]
        stack = stack_calibration(params, states, [np.zeros(6)] * 100)
        est = estimate_param_variation(stack)
        assert 0 < est.rank < 60
        assert est.row_space.shape == (est.rank, 60)
