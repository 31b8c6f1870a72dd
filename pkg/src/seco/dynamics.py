"""Vehicle dynamics: equations of motion, analytic Jacobians, exact discretization.

State vector layout (15 scalars)::

    index 0      mass [kg]
    index 1:9    unit dual quaternion [real | dual] (pose)
    index 9:12   body angular velocity [rad/s]
    index 12:15  body-frame velocity [m/s]

Control vector layout (6 scalars)::

    index 0      thrust magnitude T [N]
    index 1      gimbal deflection angle delta [rad]
    index 2      gimbal azimuth angle phi [rad]
    index 3:6    body torque [N m]

The free final time is handled by time dilation: trajectories are
parameterized on the normalized horizon [0, 1) and the dilation factor ``s``
(the time of flight) multiplies the physical state derivative. All functions
broadcast over leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quat

NX = 15
NU = 6

IDX_MASS = 0
SL_DQ = slice(1, 9)
SL_DQ_REAL = slice(1, 5)
SL_DQ_TILT = slice(1, 3)  # first two vector components of the real part
SL_DQ_DUAL = slice(5, 9)
SL_OMEGA = slice(9, 12)
SL_VEL = slice(12, 15)

IDX_T = 0
IDX_DELTA = 1
IDX_PHI = 2
SL_TAU = slice(3, 6)

_CONJ_SIGNS = np.array([-1.0, -1.0, -1.0, 1.0])
# columns of an 8x8 operator that act on the reduced (omega, v) velocity
_VEL_COLS = np.array([0, 1, 2, 4, 5, 6])


class SingularMassError(ValueError):
    """Raised when the mass state is non-positive."""


class PropagationError(RuntimeError):
    """Raised when numerical propagation produces non-finite values."""


def _det3(m: np.ndarray) -> float:
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def inv3(m: np.ndarray) -> np.ndarray:
    """Closed-form (adjugate) inverse of a 3x3 matrix; no factorization call."""
    m = np.asarray(m, dtype=float)
    det = _det3(m)
    if abs(det) < 1e-300:
        raise ValueError("singular 3x3 matrix")
    adj = np.empty((3, 3))
    adj[0, 0] = m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]
    adj[0, 1] = m[0, 2] * m[2, 1] - m[0, 1] * m[2, 2]
    adj[0, 2] = m[0, 1] * m[1, 2] - m[0, 2] * m[1, 1]
    adj[1, 0] = m[1, 2] * m[2, 0] - m[1, 0] * m[2, 2]
    adj[1, 1] = m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
    adj[1, 2] = m[0, 2] * m[1, 0] - m[0, 0] * m[1, 2]
    adj[2, 0] = m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]
    adj[2, 1] = m[0, 1] * m[2, 0] - m[0, 0] * m[2, 1]
    adj[2, 2] = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return adj / det


@dataclass
class VehicleParams:
    """Physical vehicle parameters.

    ``inertia`` is the mass-normalized inertia shape (m^2): the physical
    inertia tensor is ``m(t) * inertia``, so attitude dynamics track
    mass depletion.
    """

    g: float
    alpha_me: float
    alpha_rcs: float
    l_cm: float
    inertia: np.ndarray
    m_i: float
    m_f: float
    inertia_inv: np.ndarray = field(init=False, repr=False)
    lever: np.ndarray = field(init=False, repr=False)
    g_inertial: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        if self.inertia.shape != (3, 3):
            raise ValueError("inertia shape must be 3x3")
        if not np.allclose(self.inertia, self.inertia.T, atol=1e-12):
            raise ValueError("inertia shape must be symmetric")
        # Sylvester criterion keeps the check factorization-free
        j = self.inertia
        if not (j[0, 0] > 0 and j[0, 0] * j[1, 1] - j[0, 1] ** 2 > 0 and _det3(j) > 0):
            raise ValueError("inertia shape must be positive definite")
        if self.l_cm <= 0:
            raise ValueError("moment arm l_cm must be positive")
        if not (self.m_i > self.m_f > 0):
            raise ValueError("masses must satisfy m_i > m_f > 0")
        self.inertia_inv = inv3(self.inertia)
        self.lever = np.array([0.0, 0.0, -self.l_cm])
        self.g_inertial = np.array([0.0, 0.0, -self.g])


@dataclass
class DiscreteDynamics:
    """Per-interval blocks of the exactly discretized LTV system.

    For ``N`` temporal nodes there are ``N - 1`` intervals; deviations from
    the reference trajectory satisfy::

        dx[k+1] = A[k] @ dx[k] + B_minus[k] @ du[k] + B_plus[k] @ du[k+1]
                  + S[k] * ds + d[k]

    and ``d[k] = x_prop[k] - xbar[k+1]`` stitches the propagated reference
    onto the next node.
    """

    A: np.ndarray  # (K, NX, NX)
    B_minus: np.ndarray  # (K, NX, NU)
    B_plus: np.ndarray  # (K, NX, NU)
    S: np.ndarray  # (K, NX)
    d: np.ndarray  # (K, NX)
    x_prop: np.ndarray  # (K, NX)


def pack_state(m, dq, omega_body, v_body) -> np.ndarray:
    """Assemble a 15-dim state vector (broadcasts over leading dims)."""
    m = np.asarray(m, dtype=float)
    return np.concatenate(
        [
            m[..., None],
            np.asarray(dq, dtype=float),
            np.asarray(omega_body, dtype=float),
            np.asarray(v_body, dtype=float),
        ],
        axis=-1,
    )


def thrust_vector(T, delta, phi) -> np.ndarray:
    """Body-frame thrust vector from spherical gimbal coordinates."""
    T = np.asarray(T, dtype=float)
    sd, cd = np.sin(delta), np.cos(delta)
    sp, cp = np.sin(phi), np.cos(phi)
    return np.stack([T * sd * cp, T * sd * sp, T * cd], axis=-1)


def thrust_vector_jacobian(T, delta, phi) -> np.ndarray:
    """Jacobian of the thrust vector wrt (T, delta, phi), shape (..., 3, 3)."""
    T = np.asarray(T, dtype=float)
    sd, cd = np.sin(delta), np.cos(delta)
    sp, cp = np.sin(phi), np.cos(phi)
    cols = [
        np.stack([sd * cp, sd * sp, cd], axis=-1),
        np.stack([T * cd * cp, T * cd * sp, -T * sd], axis=-1),
        np.stack([-T * sd * sp, T * sd * cp, np.zeros_like(T)], axis=-1),
    ]
    return np.stack(cols, axis=-1)


def eom(x: np.ndarray, u: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Continuous-time state derivative (wall-clock time).

    Mass depletes with main-engine thrust and RCS torque effort; the pose
    follows the dual-quaternion kinematics; the velocities follow rigid-body
    dynamics with the gimbaled-thrust wrench and mass-normalized inertia.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    m = x[..., IDX_MASS]
    if np.any(m <= 0.0):
        raise SingularMassError("non-positive mass in equations of motion")
    dq = x[..., SL_DQ]
    omega = x[..., SL_OMEGA]
    v = x[..., SL_VEL]
    q = dq[..., :4]
    T, delta, phi = u[..., IDX_T], u[..., IDX_DELTA], u[..., IDX_PHI]
    tau = u[..., SL_TAU]

    tvec = thrust_vector(T, delta, phi)
    g_body = quat.rotate_to_body(q, np.broadcast_to(params.g_inertial, q.shape[:-1] + (3,)))
    minv = 1.0 / m[..., None]

    mdot = -(params.alpha_me * T + params.alpha_rcs * np.linalg.norm(tau, axis=-1) / params.l_cm)
    dqdot = 0.5 * quat.dq_mul(dq, quat.lift_dual_velocity(omega, v))
    j_om = omega @ params.inertia.T
    torque = np.cross(params.lever, tvec) + tau
    omdot = (-np.cross(omega, j_om) + torque * minv) @ params.inertia_inv.T
    vdot = -np.cross(omega, v) + tvec * minv + g_body
    return np.concatenate([mdot[..., None], dqdot, omdot, vdot], axis=-1)


def dilated_eom(x: np.ndarray, u: np.ndarray, s: float, params: VehicleParams) -> np.ndarray:
    """State derivative with respect to normalized time: s * eom(x, u)."""
    if np.any(np.asarray(s) <= 0.0):
        raise ValueError("dilation factor must be positive")
    return s * eom(x, u, params)


def eom_jacobians(x: np.ndarray, u: np.ndarray, params: VehicleParams):
    """Value and analytic Jacobians of :func:`eom`.

    Returns ``(f, dfdx, dfdu)`` with shapes (..., 15), (..., 15, 15) and
    (..., 15, 6). The torque-norm gradient in the mass row uses the zero
    subgradient at tau = 0 (the norm is not differentiable there).
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    batch = x.shape[:-1]
    m = x[..., IDX_MASS]
    if np.any(m <= 0.0):
        raise SingularMassError("non-positive mass in equations of motion")
    dq = x[..., SL_DQ]
    omega = x[..., SL_OMEGA]
    v = x[..., SL_VEL]
    q = dq[..., :4]
    T, delta, phi = u[..., IDX_T], u[..., IDX_DELTA], u[..., IDX_PHI]
    tau = u[..., SL_TAU]

    f = eom(x, u, params)
    dfdx = np.zeros(batch + (NX, NX))
    dfdu = np.zeros(batch + (NX, NU))

    minv = 1.0 / m[..., None]
    minv2 = (1.0 / m**2)[..., None]
    tvec = thrust_vector(T, delta, phi)
    dtvec = thrust_vector_jacobian(T, delta, phi)
    lever_skew = quat.skew(params.lever)

    # mass row: no state dependence; control columns from the depletion law
    dfdu[..., IDX_MASS, IDX_T] = -params.alpha_me
    tau_norm = np.linalg.norm(tau, axis=-1, keepdims=True)
    safe = np.where(tau_norm > 0.0, tau_norm, 1.0)
    dfdu[..., IDX_MASS, SL_TAU] = np.where(
        tau_norm > 0.0, -params.alpha_rcs * tau / (params.l_cm * safe), 0.0
    )

    # pose kinematics: bilinear in (dq, lifted velocity)
    lifted = quat.lift_dual_velocity(omega, v)
    dfdx[..., SL_DQ, SL_DQ] = 0.5 * quat.dq_op_right(lifted)
    dfdx[..., SL_DQ, 9:15] = 0.5 * quat.dq_op_left(dq)[..., :, _VEL_COLS]

    # angular velocity row
    j_om = omega @ params.inertia.T
    torque = np.cross(params.lever, tvec) + tau
    jinv = params.inertia_inv
    dfdx[..., SL_OMEGA, IDX_MASS] = -(torque * minv2) @ jinv.T
    dfdx[..., SL_OMEGA, SL_OMEGA] = jinv @ (quat.skew(j_om) - quat.skew(omega) @ params.inertia)
    dfdu[..., SL_OMEGA, 0:3] = minv[..., None] * (jinv @ lever_skew @ dtvec)
    dfdu[..., SL_OMEGA, SL_TAU] = minv[..., None] * np.broadcast_to(jinv, batch + (3, 3))

    # velocity row
    g_tilde = np.concatenate([params.g_inertial, [0.0]])
    gq = quat.quat_mul(np.broadcast_to(g_tilde, q.shape), q)
    qg = quat.quat_mul(quat.quat_conj(q), np.broadcast_to(g_tilde, q.shape))
    dg_dq = (quat.quat_op_right(gq) * _CONJ_SIGNS + quat.quat_op_left(qg))[..., :3, :]
    dfdx[..., SL_VEL, IDX_MASS] = -tvec * minv2
    dfdx[..., SL_VEL, SL_DQ_REAL] = dg_dq
    dfdx[..., SL_VEL, SL_OMEGA] = quat.skew(v)
    dfdx[..., SL_VEL, SL_VEL] = -quat.skew(omega)
    dfdu[..., SL_VEL, 0:3] = minv[..., None] * dtvec

    return f, dfdx, dfdu


def jacobians(x: np.ndarray, u: np.ndarray, s: float, params: VehicleParams):
    """Jacobians of the time-dilated dynamics about (x, u, s).

    Returns ``(A, B, S)``: A = s * d f/dx, B = s * d f/du and S = f, the
    sensitivity to the dilation factor.
    """
    f, dfdx, dfdu = eom_jacobians(x, u, params)
    return s * dfdx, s * dfdu, f


def foh(u_k: np.ndarray, u_kp1: np.ndarray, tau: float, tau_k: float, tau_kp1: float) -> np.ndarray:
    """First-order-hold control interpolation on [tau_k, tau_kp1]."""
    width = tau_kp1 - tau_k
    if width <= 0.0:
        raise ValueError("empty interpolation interval")
    if tau < tau_k - 1e-12 * width or tau > tau_kp1 + 1e-12 * width:
        raise ValueError("interpolation time outside the interval")
    sig_plus = (tau - tau_k) / width
    return (1.0 - sig_plus) * np.asarray(u_k, float) + sig_plus * np.asarray(u_kp1, float)


def _rk4_step(deriv, y, t, h):
    k1 = deriv(t, y)
    k2 = deriv(t + 0.5 * h, tuple(a + 0.5 * h * b for a, b in zip(y, k1)))
    k3 = deriv(t + 0.5 * h, tuple(a + 0.5 * h * b for a, b in zip(y, k2)))
    k4 = deriv(t + h, tuple(a + h * b for a, b in zip(y, k3)))
    return tuple(
        a + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
    )


def discretize_ltv(dynamics_fn, xbar: np.ndarray, ubar: np.ndarray, sbar: float, n_substeps: int = 20) -> DiscreteDynamics:
    """Exact FOH discretization of a time-dilated system about a reference.

    ``dynamics_fn(x, u) -> (f, dfdx, dfdu)`` supplies the wall-clock dynamics
    and its Jacobians for batched inputs. The reference is propagated
    nonlinearly from each node while the sensitivity blocks are integrated
    alongside it (state transition, two FOH input maps, dilation column), so
    no matrix is ever inverted. All intervals integrate in parallel.
    """
    xbar = np.asarray(xbar, dtype=float)
    ubar = np.asarray(ubar, dtype=float)
    n = xbar.shape[0]
    if n < 2:
        raise ValueError("need at least two temporal nodes")
    nx = xbar.shape[1]
    nu = ubar.shape[1]
    k = n - 1
    dtau = 1.0 / k

    x0 = xbar[:-1].copy()
    pa = np.broadcast_to(np.eye(nx), (k, nx, nx)).copy()
    pbm = np.zeros((k, nx, nu))
    pbp = np.zeros((k, nx, nu))
    ps = np.zeros((k, nx))

    u_lo = ubar[:-1]
    u_hi = ubar[1:]

    def deriv(t_local, y):
        x, a_, bm_, bp_, s_ = y
        sig_plus = t_local / dtau
        sig_minus = 1.0 - sig_plus
        u = sig_minus * u_lo + sig_plus * u_hi
        f, dfdx, dfdu = dynamics_fn(x, u)
        a_mat = sbar * dfdx
        b_mat = sbar * dfdu
        return (
            sbar * f,
            a_mat @ a_,
            a_mat @ bm_ + sig_minus * b_mat,
            a_mat @ bp_ + sig_plus * b_mat,
            (a_mat @ s_[..., None])[..., 0] + f,
        )

    y = (x0, pa, pbm, pbp, ps)
    h = dtau / n_substeps
    t = 0.0
    for _ in range(n_substeps):
        y = _rk4_step(deriv, y, t, h)
        t += h
    x_prop, a_k, bm_k, bp_k, s_k = y
    for idx, blk in enumerate((x_prop, a_k, bm_k, bp_k, s_k)):
        if not np.all(np.isfinite(blk)):
            bad = int(np.argwhere(~np.isfinite(blk.reshape(k, -1)).all(axis=1))[0, 0])
            raise PropagationError(f"discretization diverged on interval {bad} (block {idx})")
    d_k = x_prop - xbar[1:]
    return DiscreteDynamics(A=a_k, B_minus=bm_k, B_plus=bp_k, S=s_k, d=d_k, x_prop=x_prop)


def discretize(xbar: np.ndarray, ubar: np.ndarray, sbar: float, params: VehicleParams, n_substeps: int = 20) -> DiscreteDynamics:
    """Vehicle-specific exact discretization about a reference trajectory."""

    def dynamics_fn(x, u):
        return eom_jacobians(x, u, params)

    return discretize_ltv(dynamics_fn, xbar, ubar, sbar, n_substeps)


def single_shot(x1: np.ndarray, u: np.ndarray, s: float, params: VehicleParams, n_substeps: int = 20) -> np.ndarray:
    """Open-loop propagation of the nonlinear dynamics across the horizon.

    Integrates from the node-1 state under FOH controls and the dilation
    factor ``s``; returns the state at every temporal node.
    """
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    dtau = 1.0 / (n - 1)
    out = np.zeros((n, x1.shape[-1]))
    out[0] = x1
    x = np.asarray(x1, dtype=float).copy()
    h = dtau / n_substeps

    for k in range(n - 1):
        def deriv(t_local, y):
            sig_plus = t_local / dtau
            uc = (1.0 - sig_plus) * u[k] + sig_plus * u[k + 1]
            return (s * eom(y[0], uc, params),)

        t = 0.0
        yk = (x,)
        for _ in range(n_substeps):
            yk = _rk4_step(deriv, yk, t, h)
            t += h
        x = yk[0]
        if not np.all(np.isfinite(x)):
            raise PropagationError(f"propagation diverged on interval {k}")
        out[k + 1] = x
    return out
