"""Constraint classification and conic-subproblem assembly.

Every path constraint is mapped to a closed-form projection set on the
virtual state or the controls; the dynamics remain the only equality
(zero-cone) constraint. Global bounds and their tighter slant-range-triggered
counterparts are combined into single sets using the reference trajectory's
trigger values, and the two quadratic pose constraints (minimum altitude,
line-of-sight cone) are linearized about the reference into halfspaces on the
dual-quaternion slice.

State slice layout is shared with :mod:`seco.dynamics`; paper-style 1-based
dual-quaternion indices map to 0-based storage as: components 1:2 -> dq[0:2]
(tilt), 3:8 -> dq[2:8], 5:8 -> dq[4:8] (dual part).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .dynamics import NX, DiscreteDynamics, pack_state
from .sets import AffineSubspace, Ball, Box, Halfspace, ProductSet, Singleton, TwoHalfspaces

logger = logging.getLogger(__name__)

DQ_START = 1  # state index where the dual quaternion begins
OMEGA_START = 9
VEL_START = 12


class InfeasibleReferenceError(ValueError):
    """A combined control window is empty: the reference left its bounds."""


class UndefinedGeometryError(ValueError):
    """A pose linearization is undefined (vehicle at the target point)."""


@dataclass
class ConstraintParams:
    """Path-constraint bounds and boundary conditions (SI units, radians)."""

    T_min: float
    T_max: float
    Tdot_max: float
    delta_max: float
    deltadot_max: float
    phidot_max: float
    tau_max: float
    theta_max: float
    theta_stc_max: float
    omega_max: float
    omega_stc_max: float
    v_max: float
    v_stc_max: float
    h_min: float
    rho_min: float
    rho_max: float
    mu_stc_max: float
    p_B: np.ndarray
    m_i: float
    m_f: float
    r_I_i: np.ndarray
    r_I_f: np.ndarray
    v_I_i: np.ndarray
    v_z_I_f: float
    q_i: np.ndarray
    q_f: np.ndarray
    omega_B_i: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("p_B", "r_I_i", "r_I_f", "v_I_i", "q_i", "q_f", "omega_B_i"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (0.0 < self.T_min < self.T_max):
            raise ValueError("thrust bounds must satisfy 0 < T_min < T_max")
        if not (0.0 < self.rho_min < self.rho_max):
            raise ValueError("trigger radii must satisfy 0 < rho_min < rho_max")
        pairs = [
            ("theta", self.theta_max, self.theta_stc_max),
            ("omega", self.omega_max, self.omega_stc_max),
            ("v", self.v_max, self.v_stc_max),
        ]
        for name, global_bound, stc_bound in pairs:
            if not global_bound > stc_bound > 0.0:
                raise ValueError(f"{name}: global bound must exceed the triggered bound")
        norm_pb = np.linalg.norm(self.p_B)
        if norm_pb == 0.0:
            raise ValueError("sensor direction p_B must be nonzero")
        self.p_B = self.p_B / norm_pb
        # subsurface-exclusion feasibility: the triggered tilt bound must leave
        # room for the sensor cone given the boresight cant angle
        cos_bore = abs(self.p_B @ np.array([0.0, 0.0, 1.0]))
        gamma_boresight = np.arccos(np.clip(cos_bore, -1.0, 1.0))
        if self.theta_stc_max > np.pi / 2 - self.mu_stc_max - gamma_boresight + 1e-12:
            raise ValueError(
                "triggered tilt bound too large for the sensor cone: "
                f"theta_stc={np.rad2deg(self.theta_stc_max):.2f} deg exceeds "
                f"{np.rad2deg(np.pi / 2 - self.mu_stc_max - gamma_boresight):.2f} deg"
            )
        self.q_i = quat.quat_normalize(self.q_i)
        self.q_f = quat.quat_normalize(self.q_f)


@dataclass
class Weights:
    """Objective weights: fuel cost, soft trust region, virtual-state penalty.

    The virtual-state penalty dominates by several orders of magnitude so
    that the true state tracks its constrained copy tightly at convergence;
    the preconditioner absorbs the resulting objective ill-conditioning.
    """

    w_m: float = 1.0
    w_tr: float = 0.5
    w_tr_s: float = 0.1
    w_vse: float = 2.0e4

    def validate(self):
        if min(self.w_m, self.w_tr, self.w_tr_s, self.w_vse) <= 0.0:
            raise ValueError("all objective weights must be positive")


_Z_TILDE = np.array([0.0, 0.0, 1.0, 0.0])


def min_altitude_matrix() -> np.ndarray:
    """8x8 quadratic form whose value at a unit pose is the altitude."""
    m = np.zeros((8, 8))
    op = quat.quat_op_left(_Z_TILDE)
    m[:4, 4:] = op.T
    m[4:, :4] = op
    return m


def los_matrix(p_B: np.ndarray) -> np.ndarray:
    """8x8 quadratic form giving the inertial projection of the sensor axis."""
    p_tilde = np.concatenate([np.asarray(p_B, dtype=float), [0.0]])
    op = quat.quat_op_right(p_tilde)
    m = np.zeros((8, 8))
    m[:4, 4:] = op.T
    m[4:, :4] = op
    return m


def trigger(position_norm: float, rho_min: float, rho_max: float) -> float:
    """Sign-valued trigger: +1 inside the slant-range window, -1 outside, 0 on it."""
    if not 0.0 < rho_min < rho_max:
        raise ValueError("trigger radii must satisfy 0 < rho_min < rho_max")
    return float(np.sign((rho_max - position_norm) * (position_norm - rho_min)))


def rate_bound(psi: float, global_bound: float, stc_bound: float) -> float:
    """Single-expression combined bound: the triggered value inside the window."""
    return max(-psi * global_bound, stc_bound)


def tilt_halfspace(dq_ref: np.ndarray, half_angle_sin: float) -> Halfspace | None:
    """Halfspace linearization of the tilt-cone bound on the first two pose
    components; ``None`` when the reference is upright (constraint vacuous)."""
    n = np.asarray(dq_ref, dtype=float)[0:2]
    norm = np.linalg.norm(n)
    if norm == 0.0:
        logger.debug("upright reference: tilt halfspace dropped for this node")
        return None
    return Halfspace(n, norm * half_angle_sin)


def linearize_min_altitude(dq_ref: np.ndarray, h_min: float) -> Halfspace:
    """First-order halfspace for altitude >= h_min about the reference pose."""
    dq_ref = np.asarray(dq_ref, dtype=float)
    mg = min_altitude_matrix()
    alt = dq_ref @ mg @ dq_ref
    n = -2.0 * mg @ dq_ref
    return Halfspace(n, n @ dq_ref - (h_min - alt))


def linearize_los(dq_ref: np.ndarray, mu_max: float, p_B: np.ndarray) -> Halfspace:
    """First-order halfspace for the line-of-sight cone about the reference.

    The nonsmooth range term uses the reference subgradient of twice the
    dual-part norm; a reference at the target has no defined direction.
    """
    dq_ref = np.asarray(dq_ref, dtype=float)
    dual = dq_ref[4:]
    dual_norm = np.linalg.norm(dual)
    if dual_norm == 0.0:
        raise UndefinedGeometryError("line-of-sight linearization undefined at the target")
    ml = los_matrix(p_B)
    value = dq_ref @ ml @ dq_ref + 2.0 * dual_norm * np.cos(mu_max)
    n = 2.0 * ml @ dq_ref
    n[4:] += 2.0 * np.cos(mu_max) * dual / dual_norm
    return Halfspace(n, n @ dq_ref - value)


def _pad_to_dq(h: Halfspace) -> np.ndarray:
    out = np.zeros(8)
    out[0:2] = h.normal
    return out


def combined_state_sets(psibar: np.ndarray, dqbar: np.ndarray, cons: ConstraintParams) -> list:
    """Per-node virtual-state sets for the interior nodes.

    Returns a list of length N whose first and last entries are ``None``
    (boundary nodes carry their own sets). Each interior entry constrains the
    pose slice by one or two halfspaces, the angular rate by a box and the
    speed by a ball, with bounds switched by the reference trigger value.
    """
    n = len(psibar)
    out: list = [None] * n
    for k in range(1, n - 1):
        psi = psibar[k]
        in_window = psi >= 0.0
        wb = rate_bound(psi, cons.omega_max, cons.omega_stc_max)
        vb = rate_bound(psi, cons.v_max, cons.v_stc_max)
        half_sin = np.sin((cons.theta_stc_max if in_window else cons.theta_max) / 2.0)
        tilt = tilt_halfspace(dqbar[k], half_sin)
        if in_window:
            pose_hs = linearize_los(dqbar[k], cons.mu_stc_max, cons.p_B)
        else:
            pose_hs = linearize_min_altitude(dqbar[k], cons.h_min)
        if tilt is not None:
            pose_set = TwoHalfspaces(_pad_to_dq(tilt), tilt.offset, pose_hs.normal, pose_hs.offset)
        else:
            pose_set = Halfspace(pose_hs.normal, pose_hs.offset)
        out[k] = ProductSet(
            NX,
            [
                (DQ_START, pose_set),
                (OMEGA_START, Box(-wb * np.ones(3), wb * np.ones(3))),
                (VEL_START, Ball(np.zeros(3), vb)),
            ],
        )
    return out


def combined_control_sets(ubar: np.ndarray, sbar: float, cons: ConstraintParams) -> list:
    """Per-node control boxes combining magnitude and rate-window bounds.

    The first node keeps pure magnitude bounds; later nodes intersect them
    with a rate window centered on the previous node's reference control, so
    rate limits hold exactly once the reference matches the solution.
    """
    ubar = np.asarray(ubar, dtype=float)
    n = ubar.shape[0]
    dt = sbar / (n - 1)
    mag_lo = np.array([cons.T_min, 0.0, 0.0, -cons.tau_max, -cons.tau_max, -cons.tau_max])
    mag_hi = np.array([cons.T_max, cons.delta_max, 2.0 * np.pi, cons.tau_max, cons.tau_max, cons.tau_max])
    rates = np.array([cons.Tdot_max, cons.deltadot_max, cons.phidot_max])
    out = [Box(mag_lo, mag_hi)]
    for k in range(1, n):
        lo = mag_lo.copy()
        hi = mag_hi.copy()
        center = ubar[k - 1, 0:3]
        lo[0:3] = np.maximum(lo[0:3], center - rates * dt)
        hi[0:3] = np.minimum(hi[0:3], center + rates * dt)
        if np.any(lo > hi + 1e-12 * np.maximum(1.0, np.abs(hi))):
            raise InfeasibleReferenceError(
                f"empty combined control window at node {k}: reference violates its bounds"
            )
        out.append(Box(lo, hi))
    return out


def terminal_pose_graph(r_I_f: np.ndarray) -> np.ndarray:
    """Linear map tying the terminal dual part to the free roll components."""
    r_tilde = np.concatenate([np.asarray(r_I_f, dtype=float), [0.0]])
    return 0.5 * quat.quat_op_left(r_tilde)[:, 2:4]


def boundary_sets(cons: ConstraintParams) -> tuple[ProductSet, ProductSet]:
    """Initial-node singleton and terminal-node product set.

    The terminal set fixes an upright attitude with free roll: zero tilt
    components, the dual part on the graph of the terminal-position map, a
    mass floor, and the prescribed vertical touchdown velocity.
    """
    dq_i = quat.dq_from_pose(cons.q_i, cons.r_I_i)
    v_b_i = quat.rotate_to_body(cons.q_i, cons.v_I_i)
    x_init = pack_state(cons.m_i, dq_i, cons.omega_B_i, v_b_i)
    node1 = ProductSet(NX, [(0, Singleton(x_init))])

    omega_hat_f = np.array([0.0, 0.0, 0.0, 0.0, 0.0, cons.v_z_I_f])
    node_n = ProductSet(
        NX,
        [
            (0, Box([cons.m_f], [np.inf])),
            (DQ_START, Singleton([0.0, 0.0])),
            (DQ_START + 2, AffineSubspace.from_graph(terminal_pose_graph(cons.r_I_f))),
            (OMEGA_START, Singleton(omega_hat_f)),
        ],
    )
    return node1, node_n


@dataclass
class RawSubproblem:
    """Scaled-frame conic subproblem before hypersphere preconditioning.

    Blocks are the discretized LTV maps in deviation variables; ``q_*`` hold
    the linear cost (fuel term only, since trust-region and virtual-state
    penalties are centered quadratics); sets act on absolute scaled variables.
    """

    n: int
    nx: int
    nu: int
    A: np.ndarray
    B_minus: np.ndarray
    B_plus: np.ndarray
    S: np.ndarray
    d: np.ndarray
    q_x: np.ndarray
    q_xi: np.ndarray
    q_u: np.ndarray
    q_s: float
    set_x1: ProductSet
    sets_xi: list
    sets_u: list
    set_s: Box
    xbar: np.ndarray
    ubar: np.ndarray
    sbar: float
    weights: Weights


def assemble(
    disc: DiscreteDynamics,
    xbar: np.ndarray,
    ubar: np.ndarray,
    sbar: float,
    weights: Weights,
    set_x1: ProductSet,
    sets_xi: list,
    sets_u: list,
    set_s: Box,
) -> RawSubproblem:
    """Bundle blocks, cost vectors, sets and references into one subproblem.

    All inputs live in the scaled frame. The only linear cost is the fuel
    term on the terminal mass; the quadratic penalties are centered on the
    reference so their gradient vanishes there.
    """
    weights.validate()
    xbar = np.asarray(xbar, dtype=float)
    ubar = np.asarray(ubar, dtype=float)
    n, nx = xbar.shape
    nu = ubar.shape[1]
    q_x = np.zeros((n, nx))
    q_x[n - 1, 0] = -weights.w_m
    if len(sets_xi) != n or len(sets_u) != n:
        raise ValueError("per-node set lists must have one entry per node")
    return RawSubproblem(
        n=n,
        nx=nx,
        nu=nu,
        A=disc.A,
        B_minus=disc.B_minus,
        B_plus=disc.B_plus,
        S=disc.S,
        d=disc.d,
        q_x=q_x,
        q_xi=np.zeros((n, nx)),
        q_u=np.zeros((n, nu)),
        q_s=0.0,
        set_x1=set_x1,
        sets_xi=sets_xi,
        sets_u=sets_u,
        set_s=set_s,
        xbar=xbar,
        ubar=ubar,
        sbar=float(sbar),
        weights=weights,
    )
