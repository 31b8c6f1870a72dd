"""Hypersphere preconditioning and matrix-free spectral estimation.

The subproblem objective is block diagonal with a 2x2 coupling between the
state and its virtual copy, so its Cholesky factor is available in closed
form from the penalty weights; applying the inverse factor reduces the
quadratic term to a scalar multiple of the identity (condition number 1).
The constraint blocks are then row-normalized with the max norm, and the
extreme singular values of the resulting constraint operator are estimated
by (shifted) power iteration to pick the cost scaling.

Nothing here forms a global matrix or calls a factorization routine: the
constraint operator is only ever applied block by block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .sets import Box, ProductSet
from .subproblem import RawSubproblem

logger = logging.getLogger(__name__)


class DegenerateDynamicsError(ValueError):
    """A constraint row vanished entirely, so it cannot be normalized."""


@dataclass
class StateCholesky:
    """Closed-form Cholesky scalars of the state/virtual-state weight block."""

    l_x1: float
    l_x2: float
    l_xi: float
    l_x1_inv: float
    l_x2_inv: float
    l_xi_inv: float


def chol_state(w_tr: float, w_vse: float) -> StateCholesky:
    """Cholesky factor of [[w_tr + w_vse, -w_vse], [-w_vse, w_vse]].

    Returns the three nonzero entries of the upper-triangular factor and
    their inverse-factor counterparts. Requires strictly positive weights.
    """
    if w_tr <= 0.0 or w_vse <= 0.0:
        raise ValueError("trust-region and virtual-state weights must be positive")
    l_x1 = np.sqrt(w_tr + w_vse)
    l_x2 = -w_vse / l_x1
    l_xi = np.sqrt(w_tr * w_vse) / l_x1
    return StateCholesky(
        l_x1=l_x1,
        l_x2=l_x2,
        l_xi=l_xi,
        l_x1_inv=1.0 / l_x1,
        l_x2_inv=-l_x2 / (l_x1 * l_xi),
        l_xi_inv=1.0 / l_xi,
    )


@dataclass
class SpectralSettings:
    eps_abs: float = 1e-9
    eps_rel: float = 1e-6
    eps_buff: float = 0.05
    j_max: int = 500


@dataclass
class PowerResult:
    value: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)


def power_iteration(
    apply_h,
    apply_ht,
    seed: np.ndarray,
    eps_abs: float = 1e-9,
    eps_rel: float = 1e-6,
    eps_buff: float = 0.05,
    j_max: int = 500,
    keep_trace: bool = False,
) -> PowerResult:
    """Largest eigenvalue of H^T H (i.e. ||H||^2), buffered upward.

    ``apply_h``/``apply_ht`` apply the constraint operator and its adjoint
    to flat vectors; the operator itself is never materialized.
    """
    z = np.asarray(seed, dtype=float).copy()
    sigma = np.linalg.norm(z)
    if sigma == 0.0:
        raise ValueError("power iteration seed must be nonzero")
    trace: list = []
    sigma_star = sigma
    converged = False
    iterations = 0
    for j in range(1, j_max + 1):
        iterations = j
        w = apply_h(z) / sigma
        z = apply_ht(w)
        sigma_star = np.linalg.norm(z)
        if keep_trace:
            trace.append(sigma_star)
        if abs(sigma_star - sigma) <= eps_abs + eps_rel * max(sigma_star, sigma):
            converged = True
            break
        sigma = sigma_star
    if not converged:
        logger.info("power iteration hit the iteration cap (%d)", j_max)
    return PowerResult((1.0 + eps_buff) * sigma_star, iterations, converged, trace)


def shifted_power_iteration(
    apply_h,
    apply_ht,
    seed_w: np.ndarray,
    sigma_max: float,
    eps_abs: float = 1e-9,
    eps_rel: float = 1e-6,
    eps_buff: float = 0.05,
    j_max: int = 500,
    keep_trace: bool = False,
) -> PowerResult:
    """Smallest eigenvalue of H H^T, buffered downward.

    Runs power iteration on ``sigma_max I - H H^T`` (the shift makes the
    smallest eigenvalue dominant) and converts back; ``sigma_max`` should be
    the buffered output of :func:`power_iteration`.
    """
    w = np.asarray(seed_w, dtype=float).copy()
    sigma_t = np.linalg.norm(w)
    if sigma_t == 0.0:
        raise ValueError("shifted power iteration seed must be nonzero")
    trace: list = []
    sigma_star = sigma_t
    converged = False
    iterations = 0
    for j in range(1, j_max + 1):
        iterations = j
        z = apply_ht(w)
        w = (apply_h(z) - sigma_max * w) / sigma_t
        sigma_star = np.linalg.norm(w)
        if keep_trace:
            trace.append(sigma_star)
        if abs(sigma_star - sigma_t) <= eps_abs + eps_rel * max(sigma_star, sigma_t):
            converged = True
            break
        sigma_t = sigma_star
    if not converged:
        logger.info("shifted power iteration hit the iteration cap (%d)", j_max)
    value = max(0.0, (1.0 - eps_buff) * (sigma_max - sigma_star))
    return PowerResult(value, iterations, converged, trace)


def block_operator(am, ap_diag, em, ep_diag, bm, bp, sv):
    """Matrix-free application of the block-sparse constraint operator.

    The flat primal layout is ``[x_1..x_N | xi_1..xi_N | u_1..u_N | s]`` and
    the dual layout is one block per interval. Returns ``(apply_h, apply_ht,
    nz, nw)``.
    """
    k, nx, nu = bm.shape[0], am.shape[1], bm.shape[2]
    n = k + 1
    nz = 2 * n * nx + n * nu + 1
    nw = k * nx

    def split(z):
        x = z[: n * nx].reshape(n, nx)
        xi = z[n * nx : 2 * n * nx].reshape(n, nx)
        u = z[2 * n * nx : 2 * n * nx + n * nu].reshape(n, nu)
        s = z[-1]
        return x, xi, u, s

    def apply_h(z):
        x, xi, u, s = split(z)
        w = np.einsum("kij,kj->ki", am, x[:k])
        w += ap_diag * x[1:]
        w += np.einsum("kij,kj->ki", em, xi[:k])
        w += ep_diag * xi[1:]
        w += np.einsum("kij,kj->ki", bm, u[:k])
        w += np.einsum("kij,kj->ki", bp, u[1:])
        w += sv * s
        return w.ravel()

    def apply_ht(wflat):
        w = wflat.reshape(k, nx)
        x = np.zeros((n, nx))
        xi = np.zeros((n, nx))
        u = np.zeros((n, nu))
        x[:k] = np.einsum("kji,kj->ki", am, w)
        x[1:] += ap_diag * w
        xi[:k] = np.einsum("kji,kj->ki", em, w)
        xi[1:] += ep_diag * w
        u[:k] = np.einsum("kji,kj->ki", bm, w)
        u[1:] += np.einsum("kji,kj->ki", bp, w)
        s = float(np.sum(sv * w))
        return np.concatenate([x.ravel(), xi.ravel(), u.ravel(), [s]])

    return apply_h, apply_ht, nz, nw


def row_normalize(am, ap_diag, em, ep_diag, bm, bp, sv, dh) -> np.ndarray:
    """Scale every constraint row by its max norm, in place, across all blocks.

    Returns the row norms. Raises if a row is identically zero (degenerate
    dynamics: nothing couples the two nodes of that interval).
    """
    row_norm = np.abs(am).max(axis=2)
    row_norm = np.maximum(row_norm, np.abs(ap_diag))
    row_norm = np.maximum(row_norm, np.abs(em).max(axis=2))
    row_norm = np.maximum(row_norm, np.abs(ep_diag))
    row_norm = np.maximum(row_norm, np.abs(bm).max(axis=2))
    row_norm = np.maximum(row_norm, np.abs(bp).max(axis=2))
    row_norm = np.maximum(row_norm, np.abs(sv))
    if np.any(row_norm == 0.0):
        raise DegenerateDynamicsError("zero constraint row cannot be normalized")
    am /= row_norm[:, :, None]
    ap_diag /= row_norm
    em /= row_norm[:, :, None]
    ep_diag /= row_norm
    bm /= row_norm[:, :, None]
    bp /= row_norm[:, :, None]
    sv /= row_norm
    dh /= row_norm
    return row_norm


@dataclass
class SubproblemData:
    """Preconditioned, devectorized conic subproblem.

    Blocks and sets live in the hatted frame. Cost vectors are the
    inverse-transposed-factor transform of the raw linear cost; the scaling
    ``lam`` multiplies them inside the solver iteration. ``ap_diag`` and
    ``ep_diag`` hold the diagonals of the (row-normalized) identity coupling
    blocks for the downstream node of each interval.
    """

    n: int
    nx: int
    nu: int
    am: np.ndarray
    ap_diag: np.ndarray
    em: np.ndarray
    ep_diag: np.ndarray
    bm: np.ndarray
    bp: np.ndarray
    sv: np.ndarray
    dh: np.ndarray
    q_x: np.ndarray
    q_xi: np.ndarray
    q_u: np.ndarray
    q_s: float
    set_x1: ProductSet
    sets_xi: list
    sets_u: list
    set_s: Box
    ref_xhat1: np.ndarray
    ref_xihat: np.ndarray
    ref_uhat: np.ndarray
    ref_shat: float
    chol: StateCholesky
    l_u: float
    l_s: float
    l_u_inv: float
    l_s_inv: float
    lam: float
    sigma: float


def precondition(
    raw: RawSubproblem,
    settings: SpectralSettings | None = None,
    rng: np.random.Generator | None = None,
    lam_override: float | None = None,
) -> SubproblemData:
    """Transform a raw subproblem into its hypersphere-preconditioned form.

    Scales all blocks by the closed-form inverse Cholesky factors, row
    normalizes each constraint row with the max norm (scattering the scaling
    back into every block including the stitching offset), estimates the
    operator's extreme singular values matrix-free, and transforms the cost.
    """
    settings = settings or SpectralSettings()
    rng = rng or np.random.default_rng(0)
    raw.weights.validate()
    ch = chol_state(raw.weights.w_tr, raw.weights.w_vse)
    l_u = np.sqrt(raw.weights.w_tr)
    l_s = np.sqrt(raw.weights.w_tr_s)
    l_u_inv, l_s_inv = 1.0 / l_u, 1.0 / l_s

    k, nx = raw.d.shape
    am = ch.l_x1_inv * raw.A
    ap_diag = np.full((k, nx), -ch.l_x1_inv)
    em = ch.l_x2_inv * raw.A
    ep_diag = np.full((k, nx), -ch.l_x2_inv)
    bm = l_u_inv * raw.B_minus
    bp = l_u_inv * raw.B_plus
    sv = l_s_inv * raw.S
    dh = raw.d.copy()

    row_normalize(am, ap_diag, em, ep_diag, bm, bp, sv, dh)

    apply_h, apply_ht, nz, nw = block_operator(am, ap_diag, em, ep_diag, bm, bp, sv)
    seed_z = rng.standard_normal(nz)
    seed_z /= np.linalg.norm(seed_z)
    power = power_iteration(
        apply_h, apply_ht, seed_z, settings.eps_abs, settings.eps_rel, settings.eps_buff, settings.j_max
    )
    sigma = power.value
    if lam_override is not None:
        lam = float(lam_override)
    else:
        seed_w = rng.standard_normal(nw)
        seed_w /= np.linalg.norm(seed_w)
        shifted = shifted_power_iteration(
            apply_h,
            apply_ht,
            seed_w,
            sigma,
            settings.eps_abs,
            settings.eps_rel,
            settings.eps_buff,
            settings.j_max,
        )
        lam = float(np.sqrt(shifted.value / 2.0))

    return SubproblemData(
        n=raw.n,
        nx=raw.nx,
        nu=raw.nu,
        am=am,
        ap_diag=ap_diag,
        em=em,
        ep_diag=ep_diag,
        bm=bm,
        bp=bp,
        sv=sv,
        dh=dh,
        q_x=ch.l_x1_inv * raw.q_x,
        q_xi=ch.l_x2_inv * raw.q_x + ch.l_xi_inv * raw.q_xi,
        q_u=l_u_inv * raw.q_u,
        q_s=l_s_inv * raw.q_s,
        set_x1=raw.set_x1.scaled(ch.l_x1),
        sets_xi=[s.scaled(ch.l_xi) for s in raw.sets_xi],
        sets_u=[s.scaled(l_u) for s in raw.sets_u],
        set_s=raw.set_s.scaled(l_s),
        ref_xhat1=ch.l_x1 * raw.xbar[0],
        ref_xihat=ch.l_xi * raw.xbar,
        ref_uhat=l_u * raw.ubar,
        ref_shat=l_s * raw.sbar,
        chol=ch,
        l_u=l_u,
        l_s=l_s,
        l_u_inv=l_u_inv,
        l_s_inv=l_s_inv,
        lam=lam,
        sigma=sigma,
    )
