"""Fast end-effector payload calibration on a simulated 6-DOF manipulator."""

from .robot import (
    JointState,
    PayloadSpec,
    RobotParams,
    attach_payload,
    inverse_dynamics,
    jacobian,
    load_robot,
)

__all__ = [
    "JointState",
    "PayloadSpec",
    "RobotParams",
    "attach_payload",
    "inverse_dynamics",
    "jacobian",
    "load_robot",
]

__version__ = "0.1.0"
