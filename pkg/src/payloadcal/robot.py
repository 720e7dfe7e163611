"""Rigid-body model of a 6R serial manipulator.

Kinematics follow the modified Denavit-Hartenberg (Craig) convention.  Each
link carries a 10-vector of inertial parameters expressed about the link
frame origin: (m, h_x, h_y, h_z, I_xx, I_xy, I_xz, I_yy, I_yz, I_zz) with
h = m * com.  Joint torques are linear in the stacked 60-vector of these
parameters, which is what the identification layer exploits.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

N_JOINTS = 6
PARAMS_PER_LINK = 10


class RobotModelError(ValueError):
    """Invalid robot description or joint state."""


def inertia_vec_to_matrix(v):
    """(Ixx, Ixy, Ixz, Iyy, Iyz, Izz) -> symmetric 3x3."""
    ixx, ixy, ixz, iyy, iyz, izz = v
    return np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])


def inertia_matrix_to_vec(m):
    return np.array([m[0, 0], m[0, 1], m[0, 2], m[1, 1], m[1, 2], m[2, 2]])


def _skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rpy_matrix(roll, pitch, yaw):
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1.0]])
    ry = np.array([[cp, 0, sp], [0, 1.0, 0], [-sp, 0, cp]])
    rx = np.array([[1.0, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return rz @ ry @ rx


def transform_inertial_params(p10, rotation, translation):
    """Re-express a 10-vector of inertial parameters in a new frame.

    The body's frame B maps into the target frame A as x_A = R x_B + t.
    Works through the second-moment matrix S = integral(x x^T dm), which is
    linear in the parameters, so the returned vector is linear in ``p10``.
    """
    p10 = np.asarray(p10, dtype=float)
    m = p10[0]
    h = p10[1:4]
    inertia = inertia_vec_to_matrix(p10[4:10])
    s = 0.5 * np.trace(inertia) * np.eye(3) - inertia
    t = np.asarray(translation, dtype=float)
    r = np.asarray(rotation, dtype=float)
    h_a = r @ h + m * t
    s_a = (
        m * np.outer(t, t)
        + np.outer(t, r @ h)
        + np.outer(r @ h, t)
        + r @ s @ r.T
    )
    inertia_a = np.trace(s_a) * np.eye(3) - s_a
    out = np.empty(10)
    out[0] = m
    out[1:4] = h_a
    out[4:10] = inertia_matrix_to_vec(inertia_a)
    return out


@dataclass(frozen=True)
class PayloadSpec:
    """End-effector payload parameter 10-vector in the tool frame.

    Layout matches the link inertial vector: (m, m*c, inertia about the tool
    frame origin as 6 symmetric components).
    """

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (10,):
            raise RobotModelError(f"payload vector must have 10 entries, got {p.shape}")
        if p[0] < 0:
            raise RobotModelError("payload mass must be >= 0")
        if p[0] == 0 and np.any(p != 0):
            raise RobotModelError("massless payload must be all-zero")
        object.__setattr__(self, "p", p)

    @property
    def mass(self):
        return float(self.p[0])

    @property
    def com(self):
        if self.p[0] == 0:
            return np.zeros(3)
        return self.p[1:4] / self.p[0]

    @classmethod
    def zero(cls):
        return cls(np.zeros(10))

    @classmethod
    def from_mass_com(cls, mass, com, inertia_com=None):
        """Build a payload from mass and CoM; inertia defaults to the
        point-mass tensor about the tool origin."""
        com = np.asarray(com, dtype=float)
        p = np.zeros(10)
        p[0] = mass
        p[1:4] = mass * com
        point = mass * ((com @ com) * np.eye(3) - np.outer(com, com))
        if inertia_com is not None:
            point = point + inertia_vec_to_matrix(np.asarray(inertia_com, dtype=float))
        p[4:10] = inertia_matrix_to_vec(point)
        return cls(p)


@dataclass(frozen=True)
class JointState:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("q", "qd", "qdd"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (N_JOINTS,):
                raise RobotModelError(f"{name} must have {N_JOINTS} entries")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class RobotParams:
    """Kinematic and inertial description of a 6R arm (modified DH)."""

    alpha: np.ndarray          # twist of the previous link [rad]
    a: np.ndarray              # length of the previous link [m]
    d: np.ndarray              # joint offset [m]
    theta_offset: np.ndarray   # joint angle offset [rad]
    inertial: np.ndarray       # (6, 10) per-link parameters about link origins
    q_min: np.ndarray
    q_max: np.ndarray
    gravity: np.ndarray
    tool_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    tool_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    name: str = "unnamed"

    def __post_init__(self):
        for name in ("alpha", "a", "d", "theta_offset", "q_min", "q_max"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (N_JOINTS,):
                raise RobotModelError(f"{name} must have {N_JOINTS} entries")
            object.__setattr__(self, name, v)
        inertial = np.asarray(self.inertial, dtype=float)
        if inertial.shape != (N_JOINTS, PARAMS_PER_LINK):
            raise RobotModelError("inertial must be (6, 10)")
        object.__setattr__(self, "inertial", inertial)
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float))
        if np.any(self.q_min >= self.q_max):
            raise RobotModelError("joint limits must satisfy q_min < q_max")

    def validate(self):
        """Check physical plausibility of the inertial parameters."""
        for i, row in enumerate(self.inertial):
            if row[0] <= 0:
                raise RobotModelError(f"link {i + 1} mass must be > 0")
            eig = np.linalg.eigvalsh(inertia_vec_to_matrix(row[4:10]))
            if np.min(eig) < -1e-12:
                raise RobotModelError(f"link {i + 1} inertia tensor is not PSD")
        return self

    @property
    def pi(self):
        """Stacked dynamics parameter vector in R^60."""
        return self.inertial.reshape(-1).copy()

    def with_pi(self, pi):
        pi = np.asarray(pi, dtype=float).reshape(N_JOINTS, PARAMS_PER_LINK)
        return replace(self, inertial=pi)

    def within_limits(self, q, margin=0.0):
        q = np.asarray(q)
        return bool(np.all(q >= self.q_min + margin) and np.all(q <= self.q_max - margin))

    def check_state(self, state: JointState):
        if not self.within_limits(state.q):
            raise RobotModelError(f"joint position outside limits: {state.q}")


def load_robot(path=None):
    """Load a robot fixture; defaults to the packaged generic6r arm."""
    if path is None:
        ref = importlib.resources.files("payloadcal.fixtures") / "generic6r.yaml"
        text = ref.read_text()
    else:
        with open(path) as f:
            text = f.read()
    doc = yaml.safe_load(text)
    joints = doc["joints"]
    links = doc["links"]
    if len(joints) != N_JOINTS or len(links) != N_JOINTS:
        raise RobotModelError("fixture must describe exactly 6 joints and 6 links")
    inertial = np.zeros((N_JOINTS, PARAMS_PER_LINK))
    for i, link in enumerate(links):
        m = float(link["mass"])
        com = np.asarray(link["com"], dtype=float)
        icom = link["inertia_com"]  # xx, yy, zz, xy, xz, yz
        icom_mat = np.array(
            [
                [icom[0], icom[3], icom[4]],
                [icom[3], icom[1], icom[5]],
                [icom[4], icom[5], icom[2]],
            ]
        )
        # parallel-axis shift of the CoM tensor to the link frame origin
        i_origin = icom_mat + m * ((com @ com) * np.eye(3) - np.outer(com, com))
        inertial[i, 0] = m
        inertial[i, 1:4] = m * com
        inertial[i, 4:10] = inertia_matrix_to_vec(i_origin)
    tool = doc.get("tool", {})
    rot = rpy_matrix(*tool.get("rotation_rpy", [0.0, 0.0, 0.0]))
    params = RobotParams(
        alpha=[j["alpha"] for j in joints],
        a=[j["a"] for j in joints],
        d=[j["d"] for j in joints],
        theta_offset=[j["theta_offset"] for j in joints],
        inertial=inertial,
        q_min=[j["q_min"] for j in joints],
        q_max=[j["q_max"] for j in joints],
        gravity=doc["gravity"],
        tool_rotation=rot,
        tool_translation=np.asarray(tool.get("translation", [0, 0, 0]), dtype=float),
        name=doc.get("name", "unnamed"),
    )
    return params.validate()


def _link_transforms(params, q):
    """Per-joint (R_prev_i, p_prev_i): frame i pose in frame i-1."""
    theta = np.asarray(q) + params.theta_offset
    out = []
    for i in range(N_JOINTS):
        ca, sa = np.cos(params.alpha[i]), np.sin(params.alpha[i])
        ct, st = np.cos(theta[i]), np.sin(theta[i])
        r = np.array(
            [
                [ct, -st, 0.0],
                [st * ca, ct * ca, -sa],
                [st * sa, ct * sa, ca],
            ]
        )
        p = np.array([params.a[i], -params.d[i] * sa, params.d[i] * ca])
        out.append((r, p))
    return out

def forward_kinematics(params, q):
    """Pose (R, p) of every link frame plus the tool frame, in the base."""
    poses = []
    r0 = np.eye(3)
    p0 = np.zeros(3)
    for r, p in _link_transforms(params, q):
        p0 = p0 + r0 @ p
        r0 = r0 @ r
        poses.append((r0.copy(), p0.copy()))
    tool = (r0 @ params.tool_rotation, p0 + r0 @ params.tool_translation)
    return poses, tool


def tool_pose(params, q):
    return forward_kinematics(params, q)[1]


def jacobian(params, q):
    """Geometric Jacobian (linear over angular) of the tool point, 6x6."""
    poses, (_, p_tool) = forward_kinematics(params, q)
    jac = np.zeros((6, N_JOINTS))
    for i, (r, p) in enumerate(poses):
        z = r[:, 2]
        jac[0:3, i] = np.cross(z, p_tool - p)
        jac[3:6, i] = z
    return jac


def _kinematic_pass(params, state):
    """Forward Newton-Euler pass: per-link angular velocity/acceleration and
    origin linear acceleration (gravity folded into the base acceleration),
    all in the link's own frame."""
    transforms = _link_transforms(params, state.q)
    w = np.zeros(3)
    wd = np.zeros(3)
    acc = -params.gravity.astype(float)
    out = []
    for i in range(N_JOINTS):
        r, p = transforms[i]
        rt = r.T
        acc = rt @ (acc + np.cross(wd, p) + np.cross(w, np.cross(w, p)))
        w_new = rt @ w
        wd = rt @ wd + np.cross(w_new, [0.0, 0.0, state.qd[i]])
        wd = wd + np.array([0.0, 0.0, state.qdd[i]])
        w = w_new + np.array([0.0, 0.0, state.qd[i]])
        out.append((w, wd, acc))
    return transforms, out


def inverse_dynamics(params, state):
    """Rigid-body joint torques (inertial + Coriolis + gravity), no friction.

    Recursive Newton-Euler with link wrenches taken about the link frame
    origins, which keeps every step linear in the inertial parameters.
    """
    params.check_state(state)
    transforms, kin = _kinematic_pass(params, state)
    f = np.zeros(3)
    n = np.zeros(3)
    tau = np.zeros(N_JOINTS)
    for i in range(N_JOINTS - 1, -1, -1):
        w, wd, acc = kin[i]
        m = params.inertial[i, 0]
        h = params.inertial[i, 1:4]
        inertia = inertia_vec_to_matrix(params.inertial[i, 4:10])
        f_link = m * acc + np.cross(wd, h) + np.cross(w, np.cross(w, h))
        n_link = inertia @ wd + np.cross(w, inertia @ w) + np.cross(h, acc)
        if i < N_JOINTS - 1:
            r_next, p_next = transforms[i + 1]
            f_child = r_next @ f
            n = n_link + r_next @ n + np.cross(p_next, f_child)
            f = f_link + f_child
        else:
            f = f_link
            n = n_link
        tau[i] = n[2]
    return tau


def inverse_dynamics_batch(params, q, qd, qdd):
    """Rigid-body torques for a batch of states, vectorized over frames.

    Same recursion as :func:`inverse_dynamics` with every quantity carrying
    a leading frame axis; used by the plant to keep long simulations cheap.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    qd = np.atleast_2d(np.asarray(qd, dtype=float))
    qdd = np.atleast_2d(np.asarray(qdd, dtype=float))
    n_frames = len(q)
    theta = q + params.theta_offset
    rs, ps = [], []
    for i in range(N_JOINTS):
        ca, sa = np.cos(params.alpha[i]), np.sin(params.alpha[i])
        ct, st = np.cos(theta[:, i]), np.sin(theta[:, i])
        r = np.empty((n_frames, 3, 3))
        r[:, 0, 0], r[:, 0, 1], r[:, 0, 2] = ct, -st, 0.0
        r[:, 1, 0], r[:, 1, 1], r[:, 1, 2] = st * ca, ct * ca, -sa
        r[:, 2, 0], r[:, 2, 1], r[:, 2, 2] = st * sa, ct * sa, ca
        rs.append(r)
        ps.append(np.array([params.a[i], -params.d[i] * sa, params.d[i] * ca]))

    w = np.zeros((n_frames, 3))
    wd = np.zeros((n_frames, 3))
    acc = np.tile(-params.gravity.astype(float), (n_frames, 1))
    kin = []
    for i in range(N_JOINTS):
        r, p = rs[i], ps[i]
        v = acc + np.cross(wd, p) + np.cross(w, np.cross(w, p))
        acc = np.einsum("nji,nj->ni", r, v)
        w_new = np.einsum("nji,nj->ni", r, w)
        z_qd = np.zeros((n_frames, 3))
        z_qd[:, 2] = qd[:, i]
        wd = np.einsum("nji,nj->ni", r, wd) + np.cross(w_new, z_qd)
        wd[:, 2] += qdd[:, i]
        w = w_new + z_qd
        kin.append((w, wd, acc))

    f = np.zeros((n_frames, 3))
    n = np.zeros((n_frames, 3))
    tau = np.empty((n_frames, N_JOINTS))
    for i in range(N_JOINTS - 1, -1, -1):
        w, wd, acc = kin[i]
        m = params.inertial[i, 0]
        h = params.inertial[i, 1:4]
        inertia = inertia_vec_to_matrix(params.inertial[i, 4:10])
        f_link = m * acc + np.cross(wd, h) + np.cross(w, np.cross(w, h))
        n_link = wd @ inertia.T + np.cross(w, w @ inertia.T) + np.cross(h, acc)
        if i < N_JOINTS - 1:
            r_next, p_next = rs[i + 1], ps[i + 1]
            f_child = np.einsum("nij,nj->ni", r_next, f)
            n = n_link + np.einsum("nij,nj->ni", r_next, n) + np.cross(p_next, f_child)
            f = f_link + f_child
        else:
            f = f_link
            n = n_link
        tau[:, i] = n[:, 2]
    return tau


def gravity_torque(params, q):
    return inverse_dynamics(params, JointState(q, np.zeros(6), np.zeros(6)))


def attach_payload(params, payload: PayloadSpec):
    """Compose the payload into the last link through the tool transform.

    The resulting parameter vector is the loaded pi; the operation is linear
    in the payload 10-vector.
    """
    delta = transform_inertial_params(
        payload.p, params.tool_rotation, params.tool_translation
    )
    inertial = params.inertial.copy()
    inertial[-1] += delta
    return replace(params, inertial=inertial)


def random_states(params, n, seed, margin=0.05, qd_scale=1.0, qdd_scale=2.0):
    """In-limit random joint states for property tests and oracles."""
    rng = np.random.default_rng(seed)
    lo = params.q_min + margin
    hi = params.q_max - margin
    states = []
    for _ in range(n):
        q = rng.uniform(lo, hi)
        qd = rng.uniform(-qd_scale, qd_scale, N_JOINTS)
        qdd = rng.uniform(-qdd_scale, qdd_scale, N_JOINTS)
        states.append(JointState(q, qd, qdd))
    return states
