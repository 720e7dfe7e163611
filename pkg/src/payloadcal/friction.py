"""Joint friction: smoothed Coulomb + viscous sliding plus Dahl pre-sliding.

The Dahl bristle state produces the hysteresis loops that make stationary
and slowly-reversing joints hard for purely velocity-based models, which is
the phenomenon the interruption-rich excitation trajectories target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .robot import N_JOINTS


class FrictionError(ValueError):
    pass


@dataclass(frozen=True)
class FrictionSpec:
    coulomb: np.ndarray            # [Nm]
    viscous: np.ndarray            # [Nm s/rad]
    stribeck_vel: np.ndarray       # tanh smoothing velocity [rad/s]
    presliding_stiffness: np.ndarray  # Dahl bristle stiffness [Nm/rad]

    def __post_init__(self):
        for name in ("coulomb", "viscous", "stribeck_vel", "presliding_stiffness"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (N_JOINTS,):
                raise FrictionError(f"{name} must have {N_JOINTS} entries")
            if np.any(v < 0):
                raise FrictionError(f"{name} must be >= 0")
            object.__setattr__(self, name, v)

    @property
    def bristle_limit(self):
        """Max |bristle deflection|: coulomb / stiffness (0 where undefined)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            lim = np.where(
                self.presliding_stiffness > 0,
                self.coulomb / np.maximum(self.presliding_stiffness, 1e-300),
                0.0,
            )
        return lim

    @classmethod
    def default(cls):
        return cls(
            coulomb=[1.5, 1.8, 1.0, 0.4, 0.35, 0.25],
            viscous=[1.2, 1.5, 0.8, 0.3, 0.25, 0.2],
            stribeck_vel=[0.02] * 6,
            presliding_stiffness=[300.0, 300.0, 200.0, 80.0, 80.0, 60.0],
        )

    @classmethod
    def viscous_only(cls, viscous=(1.2, 1.5, 0.8, 0.3, 0.25, 0.2)):
        """Linear friction, used by the exact-recovery oracle runs."""
        return cls(
            coulomb=np.zeros(6),
            viscous=viscous,
            stribeck_vel=[0.02] * 6,
            presliding_stiffness=np.zeros(6),
        )

    @classmethod
    def none(cls):
        return cls(np.zeros(6), np.zeros(6), [0.02] * 6, np.zeros(6))


@dataclass
class FrictionState:
    z: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))

    def copy(self):
        return FrictionState(self.z.copy())


def friction_torque(spec: FrictionSpec, state: FrictionState, qd, dt):
    """Advance the bristle state over dt and return (torque, new_state).

    Sliding part: coulomb * tanh(qd / v_s) + viscous * qd.  Pre-sliding part:
    stiffness * z, faded out by (1 - tanh|qd/v_s|) so the sliding branch takes
    over asymptotically and the total saturates at coulomb + viscous * qd.
    """
    if dt <= 0:
        raise FrictionError("dt must be > 0")
    qd = np.asarray(qd, dtype=float)
    zmax = spec.bristle_limit
    z = state.z.copy()
    active = zmax > 0
    if np.any(active):
        # Dahl: dz/dt = qd - |qd| z / zmax, clamped to the bristle limit
        dz = qd - np.abs(qd) * np.divide(z, zmax, out=np.zeros_like(z), where=active)
        z = np.where(active, np.clip(z + dz * dt, -zmax, zmax), 0.0)
    s = np.tanh(qd / spec.stribeck_vel)
    fade = 1.0 - np.tanh(np.abs(qd) / spec.stribeck_vel)
    tau = spec.coulomb * s + spec.viscous * qd + spec.presliding_stiffness * z * fade
    return tau, FrictionState(z)


def friction_torque_batch(spec: FrictionSpec, state: FrictionState, qd_frames, dt):
    """Friction torque over a whole trajectory; returns (tau, final_state).

    The bristle state is inherently sequential, so frames are stepped in
    order, but each step is cheap elementwise work.
    """
    if dt <= 0:
        raise FrictionError("dt must be > 0")
    qd_frames = np.atleast_2d(np.asarray(qd_frames, dtype=float))
    n = len(qd_frames)
    zmax = spec.bristle_limit
    active = zmax > 0
    z = state.z.copy()
    zs = np.empty((n, N_JOINTS))
    if np.any(active):
        inv_zmax = np.divide(1.0, zmax, out=np.zeros_like(zmax), where=active)
        abs_qd = np.abs(qd_frames)
        for i in range(n):
            dz = qd_frames[i] - abs_qd[i] * z * inv_zmax
            z = np.clip(z + dz * dt, -zmax, zmax)
            zs[i] = z
        zs[:, ~active] = 0.0
        z = np.where(active, z, 0.0)
    else:
        zs[:] = 0.0
    s = np.tanh(qd_frames / spec.stribeck_vel)
    fade = 1.0 - np.tanh(np.abs(qd_frames) / spec.stribeck_vel)
    tau = spec.coulomb * s + spec.viscous * qd_frames + spec.presliding_stiffness * zs * fade
    return tau, FrictionState(z)
