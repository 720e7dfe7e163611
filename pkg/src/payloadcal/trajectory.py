"""Motion programs: Fourier excitation, interruption insertion, and the
short constant-speed calibration trajectory."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .robot import N_JOINTS, RobotParams

DEFAULT_HARMONICS = 5
BASE_OMEGA = 0.15 * np.pi          # fundamental frequency of the original design [rad/s]
COEFF_RANGE = 0.5                  # |a|, |b| upper bound [rad/s]
PAUSE_EXEC_RANGE = (1.0, 3.0)      # seconds of execution between pauses
PAUSE_LEN_RANGE = (7.0, 9.0)       # pause duration [s]

CALIB_START_DEG = np.array([0.0, 40.0, 50.0, 45.0, 45.0, 0.0])
CALIB_SPEED_DEG = np.array([3.0, 3.0, 3.0, -3.0, -3.0, -3.0])
CALIB_DURATION = 4.0


class TrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class FourierTrajectorySpec:
    """Finite Fourier series per joint (coefficients in rad/s)."""

    omega: float
    a: np.ndarray              # (L, 6)
    b: np.ndarray              # (L, 6)
    q0: np.ndarray             # (6,)
    duration: float

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        if a.shape != b.shape or a.shape[1] != N_JOINTS or a.shape[0] < 1:
            raise TrajectoryError("coefficient arrays must be (L, 6) with L >= 1")
        if self.omega <= 0 or self.duration <= 0:
            raise TrajectoryError("omega and duration must be > 0")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "q0", np.asarray(self.q0, dtype=float))

    @property
    def harmonics(self):
        return self.a.shape[0]


def eval_fourier(spec: FourierTrajectorySpec, t):
    """Evaluate (q, qd, qdd) at time(s) t from the analytic series."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > spec.duration):
        raise TrajectoryError("t outside [0, duration]")
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    q = np.tile(spec.q0, (t.size, 1))
    qd = np.zeros((t.size, N_JOINTS))
    qdd = np.zeros((t.size, N_JOINTS))
    for l in range(1, spec.harmonics + 1):
        w = l * spec.omega
        s = np.sin(w * t)[:, None]
        c = np.cos(w * t)[:, None]
        al = spec.a[l - 1][None, :]
        bl = spec.b[l - 1][None, :]
        q += (al / w) * s - (bl / w) * c
        qd += al * c + bl * s
        qdd += (-al * s + bl * c) * w
    if scalar:
        return q[0], qd[0], qdd[0]
    return q, qd, qdd


@dataclass
class Trajectory:
    """Uniformly sampled joint trajectory."""

    t: np.ndarray              # (N,)
    q: np.ndarray              # (N, 6)
    qd: np.ndarray
    qdd: np.ndarray
    rate: float                # [Hz]
    tag: str = "test"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0):
            raise TrajectoryError("time must be strictly increasing")
        n = len(self.t)
        for name in ("q", "qd", "qdd"):
            if getattr(self, name).shape != (n, N_JOINTS):
                raise TrajectoryError(f"{name} shape mismatch")

    def __len__(self):
        return len(self.t)

    @property
    def duration(self):
        return float(len(self.t) / self.rate)


def check_limits(params: RobotParams, spec: FourierTrajectorySpec, resolution=1e-3):
    """True when the evaluated positions stay within limits over the full
    duration, checked on a 1 ms grid."""
    t = np.arange(0.0, spec.duration + resolution / 2, resolution)
    t = np.clip(t, 0.0, spec.duration)
    q, _, _ = eval_fourier(spec, t)
    return bool(np.all(q >= params.q_min) and np.all(q <= params.q_max))


def sample_excitation_spec(
    params: RobotParams,
    seed,
    duration=60.0,
    harmonics=DEFAULT_HARMONICS,
    omega_scale=0.5,
    max_rejections=1000,
):
    """Randomly sampled excitation coefficients, rejection-checked on limits.

    Coefficients are uniform in [-0.5, 0.5] rad/s; the offset pose is drawn
    from the joint ranges shrunk by the series' worst-case amplitude; the
    fundamental frequency is scaled down to keep speeds low.
    """
    rng = np.random.default_rng(seed)
    omega = BASE_OMEGA * omega_scale
    half_range = (params.q_max - params.q_min) / 2
    for _ in range(max_rejections):
        a = rng.uniform(-COEFF_RANGE, COEFF_RANGE, (harmonics, N_JOINTS))
        b = rng.uniform(-COEFF_RANGE, COEFF_RANGE, (harmonics, N_JOINTS))
        l = np.arange(1, harmonics + 1)[:, None]
        # worst-case excursion of each joint around its offset
        amp = np.sum((np.abs(a) + np.abs(b)) / (l * omega), axis=0)
        # shrink joints whose excursion cannot fit inside their range
        scale = np.minimum(1.0, 0.45 * half_range / amp)
        a, b, amp = a * scale, b * scale, amp * scale
        lo = params.q_min + amp
        hi = params.q_max - amp
        if np.any(lo >= hi):
            continue
        q0 = rng.uniform(lo, hi)
        spec = FourierTrajectorySpec(omega, a, b, q0, duration)
        if check_limits(params, spec):
            return spec
    raise TrajectoryError("could not sample an in-limit excitation trajectory")


def sample_trajectory(spec: FourierTrajectorySpec, rate, tag="excitation"):
    n = int(round(spec.duration * rate))
    t = np.arange(n) / rate
    q, qd, qdd = eval_fourier(spec, t)
    return Trajectory(t, q, qd, qdd, rate, tag=tag, meta={"omega": spec.omega})


def insert_interruptions(traj: Trajectory, seed, pause_probability=1.0):
    """Freeze each joint during independently scheduled pauses.

    A pause of t_p ~ U[7, 9] s follows every t_e ~ U[1, 3] s of execution,
    per joint.  Resumed segments continue the source curve with a per-joint
    time offset, so commanded positions stay continuous.
    """
    if pause_probability <= 0:
        return traj
    rng = np.random.default_rng(seed)
    n_in = len(traj)
    dt = 1.0 / traj.rate

    # per-joint map from output frame to source frame (or -1 while paused)
    schedules = []
    for _ in range(N_JOINTS):
        src = []
        i = 0
        while i < n_in:
            n_exec = max(1, int(round(rng.uniform(*PAUSE_EXEC_RANGE) * traj.rate)))
            n_pause = int(round(rng.uniform(*PAUSE_LEN_RANGE) * traj.rate))
            if rng.uniform() > pause_probability:
                n_pause = 0
            upper = min(i + n_exec, n_in)
            src.extend(range(i, upper))
            i = upper
            if i < n_in and n_pause:
                src.extend([-1] * n_pause)
        schedules.append(np.asarray(src, dtype=int))

    n_out = max(len(s) for s in schedules)
    q = np.empty((n_out, N_JOINTS))
    qd = np.zeros((n_out, N_JOINTS))
    qdd = np.zeros((n_out, N_JOINTS))
    for j, src in enumerate(schedules):
        held = traj.q[0, j]
        src_full = np.full(n_out, -1, dtype=int)
        src_full[: len(src)] = src
        for k in range(n_out):
            s = src_full[k]
            if s >= 0:
                held = traj.q[s, j]
                q[k, j] = held
                qd[k, j] = traj.qd[s, j]
                qdd[k, j] = traj.qdd[s, j]
            else:
                q[k, j] = held
    t = np.arange(n_out) * dt
    meta = dict(traj.meta, interrupted=True)
    return Trajectory(t, q, qd, qdd, traj.rate, tag=traj.tag, meta=meta)


def calibration_pose(t, start_deg=None, speed_deg=None):
    """Pose of the calibration trajectory at time t (piecewise constant
    speed out for 2 s, reversed for 2 s, back at the start at t = 4)."""
    start = np.deg2rad(CALIB_START_DEG if start_deg is None else np.asarray(start_deg, float))
    v = np.deg2rad(CALIB_SPEED_DEG if speed_deg is None else np.asarray(speed_deg, float))
    half = CALIB_DURATION / 2
    t = float(t)
    if t <= half:
        return start + v * t
    return start + v * half - v * (t - half)


def calibration_trajectory(rate=100.0, speed_scale=1.0, start_deg=None):
    """The 4-second two-phase calibration trajectory (400 frames at 100 Hz).

    All joints move at constant +/-3 deg/s for 2 s and reverse for the final
    2 s; ``speed_scale=2`` is the doubled-velocity variant used by the
    model-based and fine-tuning schemes.
    """
    start = np.deg2rad(CALIB_START_DEG if start_deg is None else np.asarray(start_deg, float))
    v = np.deg2rad(CALIB_SPEED_DEG) * speed_scale
    n = int(round(CALIB_DURATION * rate))
    t = np.arange(n) / rate
    half = CALIB_DURATION / 2
    q = np.where(
        t[:, None] <= half,
        start + v[None, :] * t[:, None],
        start + v[None, :] * half - v[None, :] * (t[:, None] - half),
    )
    qd = np.where(t[:, None] < half, v[None, :], -v[None, :])
    qdd = np.zeros_like(q)
    return Trajectory(
        t, q, qd, qdd, rate, tag="calibration", meta={"speed_scale": speed_scale}
    )


def trajectory_to_csv(traj: Trajectory, path):
    header = "t," + ",".join(f"q{i+1}" for i in range(6)) + "," + ",".join(
        f"qd{i+1}" for i in range(6)
    )
    data = np.hstack([traj.t[:, None], traj.q, traj.qd])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")
