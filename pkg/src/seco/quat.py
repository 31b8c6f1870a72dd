"""Quaternion and dual-quaternion algebra for coupled attitude/translation states.

Conventions
-----------
* Quaternions are stored scalar-last: ``q = [x, y, z, w]`` as numpy arrays of
  shape ``(..., 4)``.
* Dual quaternions are stored as ``[real | dual]`` arrays of shape ``(..., 8)``.
  A rigid pose with attitude ``q`` and inertial position ``r`` has
  ``real = q`` and ``dual = 0.5 * (r, 0) ⊗ q``.
* The reduced dual velocity is ``(omega_B, v_B)`` (6 numbers); its 8-dim lift
  inserts zeros at indices 3 and 7.

All functions broadcast over leading dimensions, so they work on single
elements as well as stacked trajectories.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "quat_identity",
    "quat_normalize",
    "quat_conj",
    "quat_mul",
    "quat_cross",
    "skew",
    "quat_op_left",
    "quat_op_right",
    "rotate_to_body",
    "rotate_to_inertial",
    "dq_identity",
    "dq_conj",
    "dq_mul",
    "dq_cross",
    "dq_op_left",
    "dq_op_right",
    "dq_from_pose",
    "dq_normalize",
    "extract_position",
    "lift_dual_velocity",
    "sclerp",
]


def quat_identity() -> np.ndarray:
    """Identity quaternion [0, 0, 0, 1]."""
    return np.array([0.0, 0.0, 0.0, 1.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Return q scaled to unit 2-norm."""
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_conj(q: np.ndarray) -> np.ndarray:
    """Quaternion conjugate: negate the vector part, keep the scalar."""
    q = np.asarray(q, dtype=float)
    out = q.copy()
    out[..., :3] *= -1.0
    return out


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric cross-product matrix: skew(v) @ u == cross(v, u)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Quaternion product a ⊗ b (scalar-last convention)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    av, aw = a[..., :3], a[..., 3:4]
    bv, bw = b[..., :3], b[..., 3:4]
    v = aw * bv + bw * av + np.cross(av, bv)
    w = aw * bw - np.sum(av * bv, axis=-1, keepdims=True)
    return np.concatenate([v, w], axis=-1)


def quat_cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Quaternion cross product: the product a ⊗ b with scalar part zeroed."""
    out = quat_mul(a, b)
    out[..., 3] = 0.0
    return out


def quat_op_left(a: np.ndarray) -> np.ndarray:
    """Left multiplication operator: quat_op_left(a) @ b == a ⊗ b."""
    a = np.asarray(a, dtype=float)
    av, aw = a[..., :3], a[..., 3]
    m = np.zeros(a.shape[:-1] + (4, 4))
    m[..., :3, :3] = aw[..., None, None] * np.eye(3) + skew(av)
    m[..., :3, 3] = av
    m[..., 3, :3] = -av
    m[..., 3, 3] = aw
    return m


def quat_op_right(b: np.ndarray) -> np.ndarray:
    """Right multiplication operator: quat_op_right(b) @ a == a ⊗ b."""
    b = np.asarray(b, dtype=float)
    bv, bw = b[..., :3], b[..., 3]
    m = np.zeros(b.shape[:-1] + (4, 4))
    m[..., :3, :3] = bw[..., None, None] * np.eye(3) - skew(bv)
    m[..., :3, 3] = bv
    m[..., 3, :3] = -bv
    m[..., 3, 3] = bw
    return m


def rotate_to_body(q: np.ndarray, v_inertial: np.ndarray) -> np.ndarray:
    """Express an inertial-frame vector in the body frame: q* ⊗ (v, 0) ⊗ q."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v_inertial, dtype=float)
    pure = np.concatenate([v, np.zeros(v.shape[:-1] + (1,))], axis=-1)
    return quat_mul(quat_mul(quat_conj(q), pure), q)[..., :3]


def rotate_to_inertial(q: np.ndarray, v_body: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rotate_to_body`: q ⊗ (v, 0) ⊗ q*."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v_body, dtype=float)
    pure = np.concatenate([v, np.zeros(v.shape[:-1] + (1,))], axis=-1)
    return quat_mul(quat_mul(q, pure), quat_conj(q))[..., :3]


def dq_identity() -> np.ndarray:
    """Identity dual quaternion (identity attitude, zero translation)."""
    out = np.zeros(8)
    out[3] = 1.0
    return out


def dq_conj(a: np.ndarray) -> np.ndarray:
    """Dual-quaternion conjugate: conjugate both quaternion halves."""
    a = np.asarray(a, dtype=float)
    out = a.copy()
    out[..., 0:3] *= -1.0
    out[..., 4:7] *= -1.0
    return out


def dq_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dual-quaternion product a ⊗ b.

    Real part is the product of real parts; the dual part follows the
    product rule ``a_r ⊗ b_d + a_d ⊗ b_r``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    real = quat_mul(a[..., :4], b[..., :4])
    dual = quat_mul(a[..., :4], b[..., 4:]) + quat_mul(a[..., 4:], b[..., :4])
    return np.concatenate([real, dual], axis=-1)


def dq_cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dual-quaternion cross product (quaternion cross on each graded part)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    real = quat_cross(a[..., :4], b[..., :4])
    dual = quat_cross(a[..., :4], b[..., 4:]) + quat_cross(a[..., 4:], b[..., :4])
    return np.concatenate([real, dual], axis=-1)


def dq_op_left(a: np.ndarray) -> np.ndarray:
    """8x8 left multiplication operator: dq_op_left(a) @ b == a ⊗ b."""
    a = np.asarray(a, dtype=float)
    m = np.zeros(a.shape[:-1] + (8, 8))
    real = quat_op_left(a[..., :4])
    m[..., :4, :4] = real
    m[..., 4:, 4:] = real
    m[..., 4:, :4] = quat_op_left(a[..., 4:])
    return m


def dq_op_right(b: np.ndarray) -> np.ndarray:
    """8x8 right multiplication operator: dq_op_right(b) @ a == a ⊗ b."""
    b = np.asarray(b, dtype=float)
    m = np.zeros(b.shape[:-1] + (8, 8))
    real = quat_op_right(b[..., :4])
    m[..., :4, :4] = real
    m[..., 4:, 4:] = real
    m[..., 4:, :4] = quat_op_right(b[..., 4:])
    return m


def dq_from_pose(q: np.ndarray, r_inertial: np.ndarray) -> np.ndarray:
    """Build the unit dual quaternion for attitude ``q`` at position ``r``.

    Parameters
    ----------
    q : (..., 4) unit attitude quaternion.
    r_inertial : (..., 3) position in the inertial frame, meters.

    Raises
    ------
    ValueError
        If ``q`` deviates from unit norm by more than 1e-6.
    """
    q = np.asarray(q, dtype=float)
    r = np.asarray(r_inertial, dtype=float)
    if np.any(np.abs(np.linalg.norm(q, axis=-1) - 1.0) > 1e-6):
        raise ValueError("attitude quaternion must be unit to build a pose")
    pure = np.concatenate([r, np.zeros(r.shape[:-1] + (1,))], axis=-1)
    dual = 0.5 * quat_mul(pure, q)
    return np.concatenate([q, dual], axis=-1)


def extract_position(dq: np.ndarray) -> np.ndarray:
    """Recover the inertial position from a unit dual quaternion.

    Inverts the pose encoding: r = vector part of 2 * dual ⊗ real*.
    """
    dq = np.asarray(dq, dtype=float)
    return 2.0 * quat_mul(dq[..., 4:], quat_conj(dq[..., :4]))[..., :3]


def dq_normalize(dq: np.ndarray) -> np.ndarray:
    """Re-impose the unit dual quaternion constraints.

    Normalizes the real part and removes the dual-part component along the
    real part, so that ``‖real‖ = 1`` and ``realᵀ dual = 0``.
    """
    dq = np.asarray(dq, dtype=float)
    real = dq[..., :4]
    dual = dq[..., 4:]
    n = np.linalg.norm(real, axis=-1, keepdims=True)
    real = real / n
    dual = dual / n
    dual = dual - np.sum(real * dual, axis=-1, keepdims=True) * real
    return np.concatenate([real, dual], axis=-1)


def lift_dual_velocity(omega_body: np.ndarray, v_body: np.ndarray) -> np.ndarray:
    """Lift the reduced dual velocity (omega, v) to its 8-dim pure form."""
    omega = np.asarray(omega_body, dtype=float)
    v = np.asarray(v_body, dtype=float)
    zero = np.zeros(omega.shape[:-1] + (1,))
    return np.concatenate([omega, zero, v, zero], axis=-1)


def _screw_power(rel: np.ndarray, t: float) -> np.ndarray:
    """Raise a unit dual quaternion to the power ``t`` via screw parameters."""
    real = rel[:4]
    dual = rel[4:]
    sin_half = np.linalg.norm(real[:3])
    half = np.arctan2(sin_half, real[3])
    if sin_half < 1e-12:
        # Degenerate screw (no rotation): the motion is pure translation and
        # the power reduces to scaling the translation.
        r = extract_position(rel)
        return dq_from_pose(quat_identity(), t * r)
    axis = real[:3] / sin_half
    # Screw pitch terms from the dual part: dual scalar = -(d/2) sin(half),
    # dual vector = sin(half) * moment + (d/2) cos(half) * axis.
    d_half = -dual[3] / sin_half
    moment = (dual[:3] - d_half * real[3] * axis) / sin_half
    half_t = t * half
    d_half_t = t * d_half
    s, c = np.sin(half_t), np.cos(half_t)
    real_t = np.concatenate([s * axis, [c]])
    dual_t = np.concatenate([s * moment + d_half_t * c * axis, [-d_half_t * s]])
    return np.concatenate([real_t, dual_t])


def sclerp(dq0: np.ndarray, dq1: np.ndarray, t: float) -> np.ndarray:
    """Screw linear interpolation between two unit dual quaternions.

    Follows the constant-twist screw path ``dq0 ⊗ (dq0* ⊗ dq1)^t``; endpoints
    are exact and the result is renormalized. The shorter rotation arc is
    taken (sign flip on the relative element when its scalar is negative).
    """
    dq0 = np.asarray(dq0, dtype=float)
    dq1 = np.asarray(dq1, dtype=float)
    rel = dq_mul(dq_conj(dq0), dq1)
    if rel[3] < 0.0:
        rel = -rel
    return dq_normalize(dq_mul(dq0, _screw_power(rel, float(t))))
