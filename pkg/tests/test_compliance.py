"""Joint compliance loop, wrench estimation, task-space admittance."""

import numpy as np
import pytest

from payloadcal.compliance import (
    BASE_DEADZONE,
    CALIBRATED_DEADZONE,
    WE_MEMORY,
    ComplianceConfig,
    ComplianceEpisode,
    ComplianceError,
    OnlineFeatureBuilder,
    TaskComplianceConfig,
    apply_deadzone,
    episodes_to_training_set,
    estimate_wrench,
    external_residual,
    generate_contact_episodes,
    joint_compliance_step,
    run_joint_compliance,
    task_compliance_step,
    train_we,
    we_inputs_from_frames,
)
from payloadcal.friction import FrictionState, friction_torque
from payloadcal.mlp import TrainConfig
from payloadcal.plant import SensorSpec
from payloadcal.robot import JointState, attach_payload, inverse_dynamics, jacobian
from payloadcal.signals import md_features

HOME = np.deg2rad([0.0, 40.0, 50.0, 45.0, 45.0, 0.0])


@pytest.fixture(scope="module")
def quiet100():
    return SensorSpec.default(rate=100.0, noise_std=0.0)


class PerfectEstimator:
    """Analytic loaded-arm current prediction for the compliance loop.

    Features are [q, qd, qdd, md]; friction is zero at rest, so the
    rigid-body torque alone reproduces the plant currents exactly while the
    robot holds still.
    """

    def __init__(self, params, payload, sensors):
        self.loaded = attach_payload(params, payload)
        self.k = sensors.motor_constants

    def predict(self, feats):
        feats = np.atleast_2d(feats)
        out = np.empty((len(feats), 6))
        for i, f in enumerate(feats):
            state = JointState(f[:6], f[6:12], f[12:18])
            out[i] = inverse_dynamics(self.loaded, state) / self.k
        return out


class UnloadedEstimator(PerfectEstimator):
    def __init__(self, params, sensors):
        self.loaded = params
        self.k = sensors.motor_constants


class TestDeadzone:
    def test_zero_inside(self):
        dz = np.full(6, 2.0)
        assert np.allclose(apply_deadzone(np.full(6, 1.5), dz), 0.0)

    def test_continuous_at_edge(self):
        dz = np.full(6, 2.0)
        assert np.allclose(apply_deadzone(np.full(6, 2.0), dz), 0.0)
        out = apply_deadzone(np.full(6, 2.1), dz)
        assert np.allclose(out, 0.1)

    def test_sign_preserved(self):
        dz = np.full(6, 1.0)
        assert np.all(apply_deadzone(np.full(6, -3.0), dz) == -2.0)

    def test_calibrated_boundaries_not_larger(self):
        assert np.all(CALIBRATED_DEADZONE <= BASE_DEADZONE)


class TestConfig:
    def test_bad_gain_rejected(self):
        with pytest.raises(ComplianceError):
            ComplianceConfig(admittance_gain=np.zeros(6), deadzone=np.ones(6))

    def test_negative_deadzone_rejected(self):
        with pytest.raises(ComplianceError):
            ComplianceConfig(admittance_gain=np.ones(6), deadzone=-np.ones(6))

    def test_velocity_clipping(self):
        cfg = ComplianceConfig(
            admittance_gain=np.full(6, 1.0), deadzone=np.zeros(6),
            velocity_limit=0.2,
        )
        res = external_residual(np.full(6, 50.0), 0.0, 0.0, cfg.deadzone)
        qd = joint_compliance_step(cfg, res)
        assert np.all(qd == 0.2)


class TestOnlineFeatures:
    def test_matches_offline_pipeline(self, rng):
        rate = 100.0
        qd = rng.normal(0.0, 0.05, (300, 6))
        offline = md_features(qd, rate)
        builder = OnlineFeatureBuilder(rate)
        online = np.array(
            [builder.step(np.zeros(6), qd[i], np.zeros(6))[18:] for i in range(300)]
        )
        assert np.allclose(online, offline)


class TestJointCompliance:
    def test_null_motion_with_perfect_estimator(self, params, friction, quiet100,
                                                payload_091):
        """Loaded hold, calibrated estimator, no contact: the commanded
        velocity stays exactly zero and the robot does not move."""
        est = PerfectEstimator(params, payload_091, quiet100)
        ep = run_joint_compliance(
            params, payload_091, friction, quiet100, est,
            ComplianceConfig.default(calibrated=True), HOME, 2.0, seed=0,
        )
        assert np.all(ep.qd_cmd == 0.0)
        assert np.allclose(ep.q, HOME)

    def test_uncalibrated_estimator_drifts(self, params, friction, quiet100):
        from payloadcal.robot import PayloadSpec

        heavy = PayloadSpec.from_mass_com(2.73, [0.0, 0.0, 0.129])
        est = UnloadedEstimator(params, quiet100)
        ep = run_joint_compliance(
            params, heavy, friction, quiet100, est,
            ComplianceConfig.default(calibrated=True), HOME, 2.0, seed=0,
        )
        assert np.max(np.abs(ep.q - HOME)) > 0.01

    def test_responds_to_contact(self, params, friction, quiet100, payload_091):
        est = PerfectEstimator(params, payload_091, quiet100)

        def push(t):
            return np.array([0.0, 0.0, -40.0, 0.0, 0.0, 0.0]) if t > 0.5 else np.zeros(6)

        ep = run_joint_compliance(
            params, payload_091, friction, quiet100, est,
            ComplianceConfig.default(calibrated=True), HOME, 1.5, seed=0,
            wrench_fn=push,
        )
        before = ep.t <= 0.5
        assert np.all(ep.qd_cmd[before] == 0.0)
        assert np.max(np.abs(ep.qd_cmd[~before])) > 0.0

    def test_episode_csv_header(self, tmp_path, params, friction, quiet100,
                                payload_091):
        est = PerfectEstimator(params, payload_091, quiet100)
        ep = run_joint_compliance(
            params, payload_091, friction, quiet100, est,
            ComplianceConfig.default(), HOME, 0.2, seed=0,
        )
        path = tmp_path / "ep.csv"
        ep.save_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# schema_version: 1"
        assert lines[1].split(",")[:2] == ["t", "q1"]
        assert lines[1].split(",")[-6:] == ["fx", "fy", "fz", "tx", "ty", "tz"]
        assert len(lines) == 2 + len(ep.t)


class TestWrenchInputs:
    def test_memory_stacking(self):
        frames = np.arange(12.0).reshape(4, 3)
        x = we_inputs_from_frames(frames, memory=2)
        assert x.shape == (4, 9)
        # current frame first, then one and two steps back
        assert np.array_equal(x[3], np.concatenate([frames[3], frames[2], frames[1]]))

    def test_padding_with_first_frame(self):
        frames = np.arange(6.0).reshape(2, 3)
        x = we_inputs_from_frames(frames, memory=2)
        assert np.array_equal(x[0], np.concatenate([frames[0]] * 3))

    def test_training_set_shapes(self, rng):
        eps = []
        for _ in range(3):
            n = 50
            eps.append(
                ComplianceEpisode(
                    t=np.arange(n) / 100.0,
                    q=np.zeros((n, 6)),
                    qd_cmd=np.zeros((n, 6)),
                    y_ext=np.zeros((n, 6)),
                    wrench_true=rng.normal(size=(n, 6)),
                    features=rng.normal(size=(n, 24)),
                )
            )
        x, y = episodes_to_training_set(eps)
        assert x.shape == (150, 24 * (WE_MEMORY + 1))
        assert y.shape == (150, 6)


class TestWrenchEstimation:
    def test_learns_linear_wrench_map(self, rng):
        """Wrench proportional to the residual frame entries is learnable
        from episode data alone."""
        w_map = rng.normal(size=(6, 6))
        eps = []
        for _ in range(4):
            n = 200
            resid = rng.normal(size=(n, 6))
            feats = np.hstack([np.zeros((n, 18)), resid])
            eps.append(
                ComplianceEpisode(
                    t=np.arange(n) / 100.0, q=np.zeros((n, 6)),
                    qd_cmd=np.zeros((n, 6)), y_ext=resid,
                    wrench_true=resid @ w_map, features=feats,
                )
            )
        cfg = TrainConfig(lr=3e-3, batch_size=512, dropout=0.0, epochs=300, seed=0)
        model = train_we(eps[:3], cfg, width=32)
        pred = estimate_wrench(model, eps[3])
        denom = np.var(eps[3].wrench_true)
        assert np.mean((pred - eps[3].wrench_true) ** 2) < 0.1 * denom

    def test_contact_episode_generation(self, params, friction, quiet100,
                                        payload_091):
        est = PerfectEstimator(params, payload_091, quiet100)
        eps = generate_contact_episodes(
            params, payload_091, friction, quiet100, est, n_episodes=2, seed=0,
            episode_s=2.0,
        )
        assert len(eps) == 2
        for ep in eps:
            assert ep.features.shape == (len(ep.t), 24)
            # residual reflects the injected wrench through J^T
            active = np.any(ep.wrench_true != 0.0, axis=1)
            if np.any(active):
                assert np.mean(np.abs(ep.y_ext[active])) > np.mean(
                    np.abs(ep.y_ext[~active])
                )


class TestTaskCompliance:
    def test_zero_wrench_zero_motion(self, params):
        step = task_compliance_step(
            TaskComplianceConfig(), params, HOME, np.zeros(6)
        )
        assert np.all(step.joint_velocity == 0.0)
        assert not step.near_singular

    def test_wrench_inside_deadzone_ignored(self, params):
        cfg = TaskComplianceConfig()
        w = np.concatenate([np.full(3, 2.0), np.full(3, 0.5)])  # below boundaries
        step = task_compliance_step(cfg, params, HOME, w)
        assert np.all(step.cart_velocity == 0.0)

    def test_motion_direction_follows_force(self, params):
        cfg = TaskComplianceConfig()
        w = np.array([20.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        step = task_compliance_step(cfg, params, HOME, w)
        v_cart = jacobian(params, HOME) @ step.joint_velocity
        assert v_cart[0] > 0.0

    def test_singularity_flagged(self, params):
        step = task_compliance_step(
            TaskComplianceConfig(), params, np.zeros(6), np.zeros(6)
        )
        assert step.near_singular

    def test_velocity_limit(self, params):
        cfg = TaskComplianceConfig(velocity_limit=0.1)
        w = np.full(6, 1e3)
        step = task_compliance_step(cfg, params, HOME, w)
        assert np.all(np.abs(step.cart_velocity) <= 0.1 + 1e-12)
