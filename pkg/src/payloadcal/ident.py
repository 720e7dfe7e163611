"""Model-based payload identification.

Builds the regressor that makes rigid-body torque linear in the 60 inertial
parameters, solves the stacked least-squares problem for the parameter
variation caused by a payload, and recovers the payload 10-vector from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .robot import (
    N_JOINTS,
    PARAMS_PER_LINK,
    JointState,
    PayloadSpec,
    RobotParams,
    _kinematic_pass,
    _skew,
    attach_payload,
)

N_PARAMS = N_JOINTS * PARAMS_PER_LINK

SVD_CUTOFF = 1e-8  # relative singular-value cutoff for all pseudoinverses


class IdentError(ValueError):
    pass


def _inertia_product_basis(v):
    """Matrix L(v) with L(v) @ (Ixx,Ixy,Ixz,Iyy,Iyz,Izz) == I(vec) @ v."""
    x, y, z = v
    return np.array(
        [
            [x, y, z, 0.0, 0.0, 0.0],
            [0.0, x, 0.0, y, z, 0.0],
            [0.0, 0.0, x, 0.0, y, z],
        ]
    )


def regressor_matrix(params: RobotParams, state: JointState):
    """Y(q, qd, qdd) in R^{6x60} with Y @ pi == inverse_dynamics."""
    params.check_state(state)
    transforms, kin = _kinematic_pass(params, state)
    y = np.zeros((N_JOINTS, N_PARAMS))
    f = np.zeros((3, N_PARAMS))
    n = np.zeros((3, N_PARAMS))
    for i in range(N_JOINTS - 1, -1, -1):
        w, wd, acc = kin[i]
        sl = slice(i * PARAMS_PER_LINK, (i + 1) * PARAMS_PER_LINK)
        if i < N_JOINTS - 1:
            r_next, p_next = transforms[i + 1]
            f_child = r_next @ f
            n = r_next @ n + _skew(p_next) @ f_child
            f = f_child
        # link i's own wrench contribution, linear in its 10 parameters
        f[:, sl.start] += acc
        f[:, sl.start + 1 : sl.start + 4] += _skew(wd) + _skew(w) @ _skew(w)
        n[:, sl.start + 1 : sl.start + 4] += -_skew(acc)
        n[:, sl.start + 4 : sl.stop] += (
            _inertia_product_basis(wd) + _skew(w) @ _inertia_product_basis(w)
        )
        y[i] = n[2]
    return y


@dataclass
class StackedCalibration:
    """Stacked regressors and torque variations over N calibration frames."""

    ybar: np.ndarray        # (6N, 60)
    dtau: np.ndarray        # (6N,)

    def __post_init__(self):
        if self.ybar.ndim != 2 or self.ybar.shape[1] != N_PARAMS:
            raise IdentError("stacked regressor must be (6N, 60)")
        if self.ybar.shape[0] % N_JOINTS != 0 or self.ybar.shape[0] < 2 * N_JOINTS:
            raise IdentError("need at least 2 frames of stacked rows")
        if self.dtau.shape != (self.ybar.shape[0],):
            raise IdentError("torque stack length mismatch")

    @property
    def n_frames(self):
        return self.ybar.shape[0] // N_JOINTS


def stack_calibration(params, states, dtau_frames):
    """Build the stacked formulation from per-frame states and delta-torques."""
    blocks = [regressor_matrix(params, s) for s in states]
    return StackedCalibration(np.vstack(blocks), np.concatenate(dtau_frames))


@dataclass
class ParamVariationEstimate:
    eps: np.ndarray            # (60,) minimum-norm parameter variation
    rank: int                  # effective rank at the SVD cutoff
    row_space: np.ndarray      # (rank, 60) retained right singular vectors
    residual_norm: float
    singular_values: np.ndarray | None = None   # (rank,) matching row_space


def estimate_param_variation(stack: StackedCalibration, cutoff=SVD_CUTOFF):
    """Minimum-norm least squares for the parameter variation (stacked form)."""
    u, s, vt = np.linalg.svd(stack.ybar, full_matrices=False)
    if s[0] == 0:
        raise IdentError("degenerate stack: zero regressor")
    rank = int(np.sum(s > cutoff * s[0]))
    ur = u[:, :rank]
    sr = s[:rank]
    vr = vt[:rank]
    eps = vr.T @ ((ur.T @ stack.dtau) / sr)
    residual = float(np.linalg.norm(stack.ybar @ eps - stack.dtau))
    return ParamVariationEstimate(eps, rank, vr, residual, sr.copy())


def payload_jacobian(params: RobotParams):
    """Constant 60x10 map from the payload vector to the pi variation.

    Column k is the pi delta produced by attaching the unit payload e_k; the
    composition through the tool transform is linear, so this is exact.
    """
    base_pi = params.pi
    jac = np.zeros((N_PARAMS, PARAMS_PER_LINK))
    for k in range(PARAMS_PER_LINK):
        e = np.zeros(10)
        e[k] = 1.0
        if k == 0:
            loaded = attach_payload(params, PayloadSpec(e))
            jac[:, k] = loaded.pi - base_pi
        else:
            # mass 0 forbids other components; use mass 1 plus e_k and
            # subtract the pure-mass column afterwards (linearity)
            e[0] = 1.0
            loaded = attach_payload(params, PayloadSpec(e))
            jac[:, k] = loaded.pi - base_pi
    for k in range(1, PARAMS_PER_LINK):
        jac[:, k] -= jac[:, 0]
    return jac


@dataclass
class PayloadSolution:
    payload: PayloadSpec
    residual_norm: float
    rank: int


def solve_payload(eps, j_eps, row_space=None, weights=None, point_mass=False,
                  cutoff=SVD_CUTOFF):
    """Least-squares payload recovery p = J_eps^# eps.

    When ``row_space`` (the retained right singular vectors of the stacked
    regressor) is supplied, the fit is restricted to the identifiable
    subspace: minimum-norm eps estimates zero out parameter directions the
    trajectory cannot see, and comparing J_eps against such an estimate
    outside that subspace would corrupt the recovered mass and CoM.

    ``weights`` (the matching singular values) additionally scales each
    identifiable direction by how strongly the trajectory excites it.  The
    minimum-norm eps carries an error of noise/sigma per direction, so an
    unweighted fit lets the weakest directions dominate; weighting restores
    the original torque-space least squares.

    ``point_mass`` restricts the fit to the mass and first-moment columns,
    dropping the rotational-inertia directions that a short, slow
    calibration move cannot separate.
    """
    eps = np.asarray(eps, dtype=float)
    if row_space is not None:
        lhs = row_space @ j_eps
        rhs = row_space @ eps
        if weights is not None:
            w = np.asarray(weights, dtype=float)
            lhs = lhs * w[:, None]
            rhs = rhs * w
    else:
        lhs = j_eps
        rhs = eps
    n_cols = 4 if point_mass else j_eps.shape[1]
    u, s, vt = np.linalg.svd(lhs[:, :n_cols], full_matrices=False)
    rank = int(np.sum(s > cutoff * s[0])) if s[0] > 0 else 0
    p = np.zeros(j_eps.shape[1])
    if rank:
        p[:n_cols] = vt[:rank].T @ ((u[:, :rank].T @ rhs) / s[:rank])
    residual = float(np.linalg.norm(j_eps @ p - eps))
    if p[0] <= 0:
        # a payload estimate with non-positive mass is noise; report zero
        p[:] = 0.0
    return PayloadSolution(PayloadSpec(p), residual, rank)


@dataclass
class ModelBasedResult:
    payload: PayloadSpec
    calibrated_params: RobotParams
    eps_estimate: ParamVariationEstimate
    solution: PayloadSolution


def modelbased_calibrate(params, states, y_mea, y_est, motor_constants,
                         point_mass=False):
    """Full model-based pipeline on one calibration log.

    ``y_mea``/``y_est`` are (N, 6) measured and load-free-estimated currents
    in %use; the delta is converted to torque through the motor constants,
    stacked, and chained through the two least-squares stages.  With noisy
    estimates ``point_mass=True`` trades the exactness of the full
    10-parameter fit for the robustness of a mass-plus-CoM one.
    """
    y_mea = np.asarray(y_mea, dtype=float)
    y_est = np.asarray(y_est, dtype=float)
    k = np.asarray(motor_constants, dtype=float)
    dtau = (y_mea - y_est) * k
    stack = stack_calibration(params, states, list(dtau))
    est = estimate_param_variation(stack)
    j_eps = payload_jacobian(params)
    sol = solve_payload(
        est.eps,
        j_eps,
        row_space=est.row_space,
        weights=est.singular_values,
        point_mass=point_mass,
    )
    return ModelBasedResult(
        payload=sol.payload,
        calibrated_params=attach_payload(params, sol.payload),
        eps_estimate=est,
        solution=sol,
    )
