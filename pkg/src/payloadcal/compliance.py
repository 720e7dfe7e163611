"""Closed-loop applications on the simulated plant.

Sensorless joint-space admittance with per-joint deadzones, and external
wrench estimation feeding task-space admittance with damped least-squares
inverse kinematics.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import mlp
from .friction import FrictionSpec, FrictionState, friction_torque, friction_torque_batch
from .mlp import MlpModel, TrainConfig
from .plant import SensorSpec
from .robot import (
    N_JOINTS,
    JointState,
    PayloadSpec,
    RobotParams,
    attach_payload,
    inverse_dynamics,
    inverse_dynamics_batch,
    jacobian,
)
from .signals import (
    MD_ENTER_THRESHOLD,
    MD_EXIT_THRESHOLD,
    MD_WINDOW_SECONDS,
)
from .trajectory import sample_excitation_spec, sample_trajectory

WE_MEMORY = 5                       # past frames fed to the wrench model
WE_FRAME_DIM = 3 * N_JOINTS + N_JOINTS  # q, qd, qdd, residual
WE_INPUT_DIM = (WE_MEMORY + 1) * WE_FRAME_DIM

# Deadzone boundaries [%use]: uncalibrated base-model operation and the
# smaller boundaries the calibrated estimator affords.
BASE_DEADZONE = np.array([6.0, 6.0, 6.0, 9.0, 11.0, 11.0])
CALIBRATED_DEADZONE = np.array([6.0, 6.0, 4.0, 6.5, 7.0, 7.0])


class ComplianceError(ValueError):
    pass


@dataclass(frozen=True)
class ComplianceConfig:
    admittance_gain: np.ndarray      # [rad/s per %use] per joint
    deadzone: np.ndarray             # [%use] per joint
    velocity_limit: float = 0.5      # [rad/s]
    mode: str = "joint"

    def __post_init__(self):
        gain = np.asarray(self.admittance_gain, dtype=float)
        dz = np.asarray(self.deadzone, dtype=float)
        if gain.shape != (N_JOINTS,) or np.any(gain <= 0):
            raise ComplianceError("admittance gains must be 6 positive values")
        if dz.shape != (N_JOINTS,) or np.any(dz < 0):
            raise ComplianceError("deadzones must be >= 0")
        object.__setattr__(self, "admittance_gain", gain)
        object.__setattr__(self, "deadzone", dz)

    @classmethod
    def default(cls, calibrated=True):
        dz = CALIBRATED_DEADZONE if calibrated else BASE_DEADZONE
        return cls(admittance_gain=np.full(N_JOINTS, 0.01), deadzone=dz)


@dataclass
class ExternalResidual:
    y_ext: np.ndarray
    y_dz: np.ndarray


def apply_deadzone(y, dz):
    """Subtract-and-clamp deadzone: zero inside, continuous at the edge."""
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.maximum(np.abs(y) - dz, 0.0)


def external_residual(y_mea, y_est, r_est, deadzone):
    y_ext = np.asarray(y_mea, dtype=float) - np.asarray(y_est) - np.asarray(r_est)
    return ExternalResidual(y_ext=y_ext, y_dz=apply_deadzone(y_ext, deadzone))


def joint_compliance_step(config: ComplianceConfig, residual: ExternalResidual):
    """Commanded joint velocity from a deadzone-processed residual."""
    qd = config.admittance_gain * residual.y_dz
    return np.clip(qd, -config.velocity_limit, config.velocity_limit)


def equivalent_torque(y, sensors: SensorSpec):
    """Currents [%use] to torque [Nm] through the per-joint motor constants."""
    return np.asarray(y, dtype=float) * sensors.motor_constants


class OnlineFeatureBuilder:
    """Streaming equivalent of the offline feature construction: trinary
    motion state with hysteresis plus a trailing-window mean."""

    def __init__(self, rate):
        self.window = max(1, int(round(MD_WINDOW_SECONDS * rate)))
        self.state = np.zeros(N_JOINTS)
        self.history = []

    def step(self, q, qd, qdd):
        mag = np.abs(qd)
        self.state = np.where(mag > MD_ENTER_THRESHOLD, np.sign(qd), self.state)
        self.state = np.where(mag < MD_EXIT_THRESHOLD, 0.0, self.state)
        self.history.append(self.state.copy())
        if len(self.history) > self.window:
            self.history.pop(0)
        md = np.sum(self.history, axis=0) / self.window
        return np.concatenate([q, qd, qdd, md])


@dataclass
class ComplianceEpisode:
    t: np.ndarray
    q: np.ndarray                # commanded positions
    qd_cmd: np.ndarray           # commanded velocities
    y_ext: np.ndarray            # estimated external residual, pre-deadzone
    wrench_true: np.ndarray      # injected end-effector wrench
    y_mea: np.ndarray = None
    features: np.ndarray = None

    def save_csv(self, path):
        cols = (
            ["t"]
            + [f"q{i+1}" for i in range(N_JOINTS)]
            + [f"qd_cmd{i+1}" for i in range(N_JOINTS)]
            + [f"y_ext{i+1}" for i in range(N_JOINTS)]
            + ["fx", "fy", "fz", "tx", "ty", "tz"]
        )
        data = np.hstack(
            [self.t[:, None], self.q, self.qd_cmd, self.y_ext, self.wrench_true]
        )
        with open(path, "w") as f:
            f.write("# schema_version: 1\n")
            f.write(",".join(cols) + "\n")
            np.savetxt(f, data, delimiter=",", fmt="%.17g")


def run_joint_compliance(
    params: RobotParams,
    payload: PayloadSpec,
    friction: FrictionSpec,
    sensors: SensorSpec,
    estimator,
    config: ComplianceConfig,
    q_start,
    duration,
    seed,
    wrench_fn=None,
):
    """Closed-loop joint compliance on the simulated plant.

    ``estimator.predict(features)`` must return the calibrated current
    estimate (base plus residual compensation).  ``wrench_fn(t)`` may inject
    an external end-effector wrench, mapped to joint torque through J^T.
    """
    loaded = attach_payload(params, payload)
    rng = np.random.default_rng(seed)
    dt = 1.0 / sensors.sampling_rate
    n = int(round(duration * sensors.sampling_rate))
    builder = OnlineFeatureBuilder(sensors.sampling_rate)
    fric_state = FrictionState()
    q = np.asarray(q_start, dtype=float).copy()
    qd_cmd = np.zeros(N_JOINTS)
    rows_t, rows_q, rows_qd, rows_ext, rows_w, rows_y = [], [], [], [], [], []
    for i in range(n):
        t = i * dt
        state = JointState(q, qd_cmd, np.zeros(N_JOINTS), t)
        tau = inverse_dynamics(loaded, state)
        tau_f, fric_state = friction_torque(friction, fric_state, qd_cmd, dt)
        tau = tau + tau_f
        w = np.zeros(6) if wrench_fn is None else np.asarray(wrench_fn(t), dtype=float)
        if np.any(w):
            tau = tau + jacobian(params, q).T @ w
        y_mea = tau / sensors.motor_constants
        if sensors.current_noise_std > 0:
            y_mea = y_mea + rng.normal(0.0, sensors.current_noise_std, N_JOINTS)
        feat = builder.step(q, qd_cmd, np.zeros(N_JOINTS))
        y_hat = np.asarray(estimator.predict(feat[None, :]))[0]
        res = external_residual(y_mea, y_hat, 0.0, config.deadzone)
        qd_cmd = joint_compliance_step(config, res)
        rows_t.append(t)
        rows_q.append(q.copy())
        rows_qd.append(qd_cmd.copy())
        rows_ext.append(res.y_ext.copy())
        rows_w.append(w.copy())
        rows_y.append(y_mea.copy())
        q = np.clip(q + qd_cmd * dt, params.q_min, params.q_max)
    return ComplianceEpisode(
        t=np.asarray(rows_t),
        q=np.asarray(rows_q),
        qd_cmd=np.asarray(rows_qd),
        y_ext=np.asarray(rows_ext),
        wrench_true=np.asarray(rows_w),
        y_mea=np.asarray(rows_y),
    )


# ---- wrench estimation -------------------------------------------------

# Work pose for contact tasks.  The Jacobian keeps its smallest singular
# value >= ~0.14 everywhere within WORK_HALFWIDTH of this pose, so external
# wrenches stay observable from joint currents; near the calibration home
# pose the arm is close to singular and force components become
# unrecoverable regardless of estimator quality.
WORK_POSE_DEG = np.array([-52.0, -39.0, 0.0, -90.0, -90.0, -40.0])
WORK_HALFWIDTH = 0.5


def work_region(params: RobotParams, halfwidth=WORK_HALFWIDTH):
    """Joint-range restriction around the contact work pose."""
    work = np.deg2rad(WORK_POSE_DEG)
    return replace(
        params,
        q_min=np.maximum(params.q_min, work - halfwidth),
        q_max=np.minimum(params.q_max, work + halfwidth),
    )


@dataclass
class AnalyticEstimator:
    """Current prediction from the rigid-body + friction model.

    Used by the wrench loop: after model-based payload identification the
    analytic model predicts load motion currents near the sensor noise
    floor, so the external residual carries the contact wrench with minimal
    systematic error.  ``predict`` accepts feature frames and reads the
    (q, qd, qdd) columns.
    """

    params: RobotParams
    payload: PayloadSpec
    friction: FrictionSpec
    sensors: SensorSpec

    def __post_init__(self):
        self._loaded = attach_payload(self.params, self.payload)

    def predict(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        q, qd, qdd = x[:, :6], x[:, 6:12], x[:, 12:18]
        tau = inverse_dynamics_batch(self._loaded, q, qd, qdd)
        tau_f, _ = friction_torque_batch(
            self.friction, FrictionState(), qd, 1.0 / self.sensors.sampling_rate
        )
        return (tau + tau_f) / self.sensors.motor_constants


def _piecewise_wrench(rng, n_frames, rate, hold_s=1.0, force_mag=15.0, torque_mag=3.0,
                      zero_prob=0.3):
    """Random piecewise-constant wrench schedule, (n_frames, 6)."""
    hold = max(1, int(round(hold_s * rate)))
    w = np.zeros((n_frames, 6))
    i = 0
    while i < n_frames:
        if rng.uniform() < zero_prob:
            seg = np.zeros(6)
        else:
            seg = np.concatenate(
                [rng.uniform(-force_mag, force_mag, 3), rng.uniform(-torque_mag, torque_mag, 3)]
            )
        w[i : i + hold] = seg
        i += hold
    return w


def generate_contact_episodes(
    params: RobotParams,
    payload: PayloadSpec,
    friction: FrictionSpec,
    sensors: SensorSpec,
    estimator,
    n_episodes,
    seed,
    episode_s=6.0,
    wrench_kwargs=None,
    sampling_params=None,
    omega_scale=0.3,
):
    """Simulated contact data for wrench-model training.

    Each episode follows a slow excitation segment while a random
    piecewise-constant wrench is injected through J^T; measured currents go
    through the calibrated estimator to produce external residuals, and the
    injected wrench is the ground truth target.  ``sampling_params`` bounds
    the trajectory sampling (e.g. to the estimator's operating region)
    while the dynamics always use the full ``params``.
    """
    from .signals import md_features  # local import to avoid cycles

    loaded = attach_payload(params, payload)
    rng = np.random.default_rng(seed)
    episodes = []
    dt = 1.0 / sensors.sampling_rate
    for ep in range(n_episodes):
        spec = sample_excitation_spec(
            sampling_params if sampling_params is not None else params,
            seed=int(rng.integers(2**31)), duration=episode_s, omega_scale=omega_scale,
        )
        traj = sample_trajectory(spec, sensors.sampling_rate, tag="contact")
        n = len(traj)
        wrench = _piecewise_wrench(rng, n, sensors.sampling_rate, **(wrench_kwargs or {}))
        tau = inverse_dynamics_batch(loaded, traj.q, traj.qd, traj.qdd)
        tau_f, _ = friction_torque_batch(friction, FrictionState(), traj.qd, dt)
        tau = tau + tau_f
        for i in range(n):
            tau[i] += jacobian(params, traj.q[i]).T @ wrench[i]
        y_mea = tau / sensors.motor_constants
        if sensors.current_noise_std > 0:
            y_mea = y_mea + rng.normal(0.0, sensors.current_noise_std, y_mea.shape)
        md = md_features(traj.qd, sensors.sampling_rate)
        feats = np.hstack([traj.q, traj.qd, traj.qdd, md])
        y_hat = estimator.predict(feats)
        y_ext = y_mea - y_hat
        episodes.append(
            ComplianceEpisode(
                t=traj.t,
                q=traj.q,
                qd_cmd=traj.qd,
                y_ext=y_ext,
                wrench_true=wrench,
                y_mea=y_mea,
                features=np.hstack([traj.q, traj.qd, traj.qdd, y_ext]),
            )
        )
    return episodes


def we_inputs_from_frames(frames, memory=WE_MEMORY):
    """Stack each frame with its preceding ``memory`` frames.

    The first frames reuse the earliest frame as padding; output is
    (N, (memory + 1) * frame_dim) ordered current-frame-first.
    """
    frames = np.asarray(frames, dtype=float)
    n = len(frames)
    cols = []
    for k in range(memory + 1):
        idx = np.maximum(np.arange(n) - k, 0)
        cols.append(frames[idx])
    return np.hstack(cols)


def episodes_to_training_set(episodes, memory=WE_MEMORY):
    xs, ys = [], []
    for ep in episodes:
        xs.append(we_inputs_from_frames(ep.features, memory))
        ys.append(ep.wrench_true)
    return np.vstack(xs), np.vstack(ys)


def train_we(episodes, cfg: TrainConfig, width=128, memory=WE_MEMORY):
    """Wrench model: stacked joint states + residuals -> end-effector wrench."""
    x, y = episodes_to_training_set(episodes, memory)
    model = mlp.we_architecture(x.shape[1], width=width, seed=cfg.seed)
    mlp.train(model, x, y, cfg)
    return model


def estimate_wrench(model: MlpModel, episode: ComplianceEpisode, memory=WE_MEMORY):
    return model.predict(we_inputs_from_frames(episode.features, memory))


# ---- task compliance ---------------------------------------------------


@dataclass
class TaskComplianceConfig:
    gain: np.ndarray = field(default_factory=lambda: np.full(6, 0.01))
    deadzone: np.ndarray = field(default_factory=lambda: np.array([3.0, 3.0, 3.0, 0.8, 0.8, 0.8]))
    velocity_limit: float = 0.3
    dls_damping: float = 1e-3
    singularity_threshold: float = 1e-3


@dataclass
class TaskStep:
    cart_velocity: np.ndarray
    joint_velocity: np.ndarray
    near_singular: bool


def task_compliance_step(config: TaskComplianceConfig, params, q, wrench_est):
    """Cartesian admittance on the deadzone-processed wrench, resolved to
    joint velocities by damped least squares."""
    w_dz = apply_deadzone(wrench_est, config.deadzone)
    v = np.clip(config.gain * w_dz, -config.velocity_limit, config.velocity_limit)
    jac = jacobian(params, q)
    sv = np.linalg.svd(jac, compute_uv=False)
    near_singular = bool(sv[-1] < config.singularity_threshold)
    lam = config.dls_damping
    qd = jac.T @ np.linalg.solve(jac @ jac.T + lam**2 * np.eye(6), v)
    return TaskStep(cart_velocity=v, joint_velocity=qd, near_singular=near_singular)
