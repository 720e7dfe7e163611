"""Ground-truth simulated plant: position-commanded arm, motor currents out.

The trajectory is assumed perfectly tracked (the modelled robot is position
controlled); measured current per joint is (rigid-body torque + friction +
injected external torque) / motor constant plus Gaussian noise, positions
are quantized, and everything is reproducible per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .friction import FrictionSpec, FrictionState, friction_torque, friction_torque_batch
from .robot import (
    N_JOINTS,
    JointState,
    PayloadSpec,
    RobotParams,
    attach_payload,
    inverse_dynamics,
    inverse_dynamics_batch,
)
from .trajectory import Trajectory

LOG_SCHEMA_VERSION = 1

# Table-derived per-joint motor constants [Nm per %use]
DEFAULT_MOTOR_CONSTANTS = (0.71, 0.81, 0.40, 0.11, 0.14, 0.08)


class PlantError(ValueError):
    pass


@dataclass(frozen=True)
class SensorSpec:
    motor_constants: np.ndarray      # [Nm / %use]
    current_noise_std: float = 0.3   # [%use]
    position_quantum: float = 1e-5   # [rad]
    sampling_rate: float = 100.0     # [Hz]

    def __post_init__(self):
        k = np.asarray(self.motor_constants, dtype=float)
        if k.shape != (N_JOINTS,) or np.any(k <= 0):
            raise PlantError("motor constants must be 6 positive values")
        if self.sampling_rate not in (100.0, 200.0):
            raise PlantError("sampling rate must be 100 or 200 Hz")
        object.__setattr__(self, "motor_constants", k)

    @classmethod
    def default(cls, rate=100.0, noise_std=0.3):
        return cls(
            motor_constants=DEFAULT_MOTOR_CONSTANTS,
            current_noise_std=noise_std,
            sampling_rate=rate,
        )


@dataclass
class RawLog:
    """Columnar measurement log: time, quantized positions, currents."""

    t: np.ndarray             # (N,)
    q: np.ndarray             # (N, 6) [rad], quantized
    y: np.ndarray             # (N, 6) measured current [%use]
    rate: float
    payload_id: str = "none"
    schema_version: int = LOG_SCHEMA_VERSION
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def save(self, path):
        with open(path, "w") as f:
            f.write(f"# schema_version: {self.schema_version}\n")
            f.write(f"# rate: {self.rate:.17g}\n")
            f.write(f"# payload_id: {self.payload_id}\n")
            cols = ["t"] + [f"q{i+1}" for i in range(6)] + [f"y{i+1}" for i in range(6)]
            f.write(",".join(cols) + "\n")
            data = np.hstack([self.t[:, None], self.q, self.y])
            np.savetxt(f, data, delimiter=",", fmt="%.17g")

    @classmethod
    def load(cls, path):
        header = {}
        with open(path) as f:
            for line in f:
                if not line.startswith("#"):
                    break
                key, _, val = line[1:].partition(":")
                header[key.strip()] = val.strip()
        version = int(header.get("schema_version", -1))
        if version != LOG_SCHEMA_VERSION:
            raise PlantError(f"unsupported log schema version {version}")
        data = np.loadtxt(path, delimiter=",", skiprows=len(header) + 1)
        data = np.atleast_2d(data)
        return cls(
            t=data[:, 0],
            q=data[:, 1:7],
            y=data[:, 7:13],
            rate=float(header["rate"]),
            payload_id=header.get("payload_id", "none"),
        )


def plant_torque(
    params_loaded: RobotParams,
    friction: FrictionSpec,
    fric_state: FrictionState,
    state: JointState,
    dt,
):
    """One frame of true joint torque: rigid body plus friction."""
    tau_rb = inverse_dynamics(params_loaded, state)
    tau_f, fric_state = friction_torque(friction, fric_state, state.qd, dt)
    return tau_rb + tau_f, fric_state


def simulate_log(
    params: RobotParams,
    payload: PayloadSpec,
    friction: FrictionSpec,
    sensors: SensorSpec,
    traj: Trajectory,
    seed,
    payload_id=None,
    external_torque=None,
):
    """Run the plant over a trajectory and return the measurement log.

    ``external_torque``, when given, is called per frame index and joint
    state and must return an extra joint torque (used to inject contact
    wrenches mapped through the Jacobian transpose).
    """
    loaded = attach_payload(params, payload)
    bad = np.flatnonzero(
        np.any(traj.q < params.q_min, axis=1) | np.any(traj.q > params.q_max, axis=1)
    )
    if bad.size:
        raise PlantError(f"trajectory violates joint limits at frame {bad[0]}")
    if abs(traj.rate - sensors.sampling_rate) > 1e-9:
        raise PlantError("trajectory rate must match the sensor sampling rate")
    rng = np.random.default_rng(seed)
    dt = 1.0 / sensors.sampling_rate
    n = len(traj)
    tau = inverse_dynamics_batch(loaded, traj.q, traj.qd, traj.qdd)
    tau_f, _ = friction_torque_batch(friction, FrictionState(), traj.qd, dt)
    tau = tau + tau_f
    if external_torque is not None:
        for i in range(n):
            state = JointState(traj.q[i], traj.qd[i], traj.qdd[i], traj.t[i])
            tau[i] = tau[i] + external_torque(i, state)
    y = tau / sensors.motor_constants
    if sensors.current_noise_std > 0:
        y = y + rng.normal(0.0, sensors.current_noise_std, y.shape)
    q_meas = traj.q
    if sensors.position_quantum > 0:
        q_meas = np.round(traj.q / sensors.position_quantum) * sensors.position_quantum
    return RawLog(
        t=traj.t.copy(),
        q=q_meas,
        y=y,
        rate=sensors.sampling_rate,
        payload_id=payload_id or "none",
        meta={"tag": traj.tag},
    )
