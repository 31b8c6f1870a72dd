"""Cross-checks between the devectorized solver and explicit dense forms.

This module can build the stacked dense equivalent of any preconditioned
subproblem (cost transform, equality matrix, product projection) so the
customized solver can be compared against the plain vectorized one,
iterate for iterate. It also generates randomized toy instances and hosts
the check suites used by the command-line ``verify`` entry point.

Dense matrices built here are strictly oracle-side; the solve path never
imports this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quat
from .dynamics import DiscreteDynamics, discretize_ltv, jacobians, single_shot
from .pipg import SolverSettings, SolverWorkspace, pipg_custom, pipg_generic
from .precondition import SpectralSettings, SubproblemData, precondition
from .sets import AffineSubspace, Ball, Box, FreeSet, ProductSet, Singleton, TwoHalfspaces
from .subproblem import RawSubproblem, Weights, assemble


def dense_cholesky(data: SubproblemData) -> tuple[np.ndarray, np.ndarray]:
    """Stacked dense Cholesky factor of the objective and its inverse."""
    n, nx, nu = data.n, data.nx, data.nu
    nz = 2 * n * nx + n * nu + 1
    ch = data.chol
    l_mat = np.zeros((nz, nz))
    l_inv = np.zeros((nz, nz))
    eye = np.eye(n * nx)
    l_mat[: n * nx, : n * nx] = ch.l_x1 * eye
    l_mat[: n * nx, n * nx : 2 * n * nx] = ch.l_x2 * eye
    l_mat[n * nx : 2 * n * nx, n * nx : 2 * n * nx] = ch.l_xi * eye
    l_inv[: n * nx, : n * nx] = ch.l_x1_inv * eye
    l_inv[: n * nx, n * nx : 2 * n * nx] = ch.l_x2_inv * eye
    l_inv[n * nx : 2 * n * nx, n * nx : 2 * n * nx] = ch.l_xi_inv * eye
    sl_u = slice(2 * n * nx, 2 * n * nx + n * nu)
    l_mat[sl_u, sl_u] = data.l_u * np.eye(n * nu)
    l_inv[sl_u, sl_u] = data.l_u_inv * np.eye(n * nu)
    l_mat[-1, -1] = data.l_s
    l_inv[-1, -1] = data.l_s_inv
    return l_mat, l_inv


def dense_equality(data: SubproblemData) -> tuple[np.ndarray, np.ndarray]:
    """Explicit stacked equality operator H and right-hand side h = -d."""
    n, nx, nu = data.n, data.nx, data.nu
    k = n - 1
    nz = 2 * n * nx + n * nu + 1
    h_mat = np.zeros((k * nx, nz))
    for i in range(k):
        rows = slice(i * nx, (i + 1) * nx)
        h_mat[rows, i * nx : (i + 1) * nx] = data.am[i]
        h_mat[rows, (i + 1) * nx : (i + 2) * nx] = np.diag(data.ap_diag[i])
        h_mat[rows, n * nx + i * nx : n * nx + (i + 1) * nx] = data.em[i]
        h_mat[rows, n * nx + (i + 1) * nx : n * nx + (i + 2) * nx] = np.diag(data.ep_diag[i])
        base_u = 2 * n * nx
        h_mat[rows, base_u + i * nu : base_u + (i + 1) * nu] = data.bm[i]
        h_mat[rows, base_u + (i + 1) * nu : base_u + (i + 2) * nu] = data.bp[i]
        h_mat[rows, -1] = data.sv[i]
    return h_mat, -data.dh.ravel()


def dense_cost(data: SubproblemData) -> np.ndarray:
    """Full cost vector for the vectorized solver (lam included)."""
    return data.lam * np.concatenate(
        [data.q_x.ravel(), data.q_xi.ravel(), data.q_u.ravel(), [data.q_s]]
    )


def product_projector(data: SubproblemData):
    """Projection onto the full deviation-frame set, from the set objects.

    Each entity is projected via its own set with the hatted reference
    folded back in, which keeps this path independent of the flat projection
    plan used inside the devectorized solver.
    """
    n, nx, nu = data.n, data.nx, data.nu

    def project(z):
        out = z.copy()
        x1 = out[:nx]
        out[:nx] = data.set_x1.project(x1 + data.ref_xhat1) - data.ref_xhat1
        for k in range(n):
            sl = slice(n * nx + k * nx, n * nx + (k + 1) * nx)
            ref = data.ref_xihat[k]
            out[sl] = data.sets_xi[k].project(out[sl] + ref) - ref
        for k in range(n):
            sl = slice(2 * n * nx + k * nu, 2 * n * nx + (k + 1) * nu)
            ref = data.ref_uhat[k]
            out[sl] = data.sets_u[k].project(out[sl] + ref) - ref
        out[-1] = data.set_s.project(np.array([out[-1] + data.ref_shat]))[0] - data.ref_shat
        return out

    return project


def vectorize_warm(data: SubproblemData, warm: SolverWorkspace) -> tuple[np.ndarray, np.ndarray]:
    """Transform a warm start into the stacked hatted frame."""
    ch = data.chol
    zx = ch.l_x1 * warm.dx + ch.l_x2 * warm.dxi
    zxi = ch.l_xi * warm.dxi
    zu = data.l_u * warm.du
    zs = data.l_s * warm.ds
    return np.concatenate([zx.ravel(), zxi.ravel(), zu.ravel(), [zs]]), warm.w.ravel()


def split_primal(data: SubproblemData, z: np.ndarray):
    n, nx, nu = data.n, data.nx, data.nu
    x = z[: n * nx].reshape(n, nx)
    xi = z[n * nx : 2 * n * nx].reshape(n, nx)
    u = z[2 * n * nx : 2 * n * nx + n * nu].reshape(n, nu)
    return x, xi, u, float(z[-1])


# --------------------------------------------------------------------------
# randomized toy instances
# --------------------------------------------------------------------------


def random_toy_raw(
    seed: int,
    n: int = 4,
    nx: int = 15,
    nu: int = 6,
    simple_sets: bool = False,
) -> tuple[RawSubproblem, SubproblemData]:
    """A small random instance, both raw and preconditioned.

    With ``simple_sets`` the projection sets are free except for the node
    pins, which makes the optimum recoverable from stationarity conditions.
    """
    rng = np.random.default_rng(seed)
    k = n - 1
    a = 0.5 * rng.standard_normal((k, nx, nx)) / np.sqrt(nx)
    a += np.eye(nx)
    disc = DiscreteDynamics(
        A=a,
        B_minus=0.5 * rng.standard_normal((k, nx, nu)) / np.sqrt(nu),
        B_plus=0.5 * rng.standard_normal((k, nx, nu)) / np.sqrt(nu),
        S=0.3 * rng.standard_normal((k, nx)),
        d=0.05 * rng.standard_normal((k, nx)),
        x_prop=np.zeros((k, nx)),
    )
    xbar = rng.standard_normal((n, nx))
    ubar = rng.standard_normal((n, nu))
    sbar = rng.uniform(0.5, 2.0)
    weights = Weights(
        w_m=rng.uniform(0.5, 2.0),
        w_tr=rng.uniform(0.1, 1.0),
        w_tr_s=rng.uniform(0.1, 1.0),
        w_vse=rng.uniform(5.0, 20.0),
    )
    set_x1 = ProductSet(nx, [(0, Singleton(xbar[0] + 0.1 * rng.standard_normal(nx)))])
    sets_xi: list = [ProductSet(nx, [(0, Singleton(xbar[0]))])]
    for _ in range(n - 2):
        if simple_sets:
            sets_xi.append(FreeSet(nx))
            continue
        comps = [
            (0, Box(rng.uniform(-3, -1, 3), rng.uniform(1, 3, 3))),
            (
                3,
                TwoHalfspaces(
                    rng.standard_normal(5),
                    rng.uniform(0.5, 2.0),
                    rng.standard_normal(5),
                    rng.uniform(0.5, 2.0),
                ),
            ),
            (8, Ball(0.2 * rng.standard_normal(4), rng.uniform(1.0, 3.0))),
        ]
        sets_xi.append(ProductSet(nx, comps))
    if simple_sets:
        sets_xi.append(FreeSet(nx))
        sets_u = [FreeSet(nu) for _ in range(n)]
        set_s = Box([-np.inf], [np.inf])
    else:
        graph = AffineSubspace.from_graph(rng.standard_normal((3, 2)))
        sets_xi.append(
            ProductSet(
                nx,
                [
                    (0, Box([rng.uniform(-2, 0)], [np.inf])),
                    (1, Singleton(rng.standard_normal(2))),
                    (3, graph),
                    (nx - 3, Singleton(rng.standard_normal(3))),
                ],
            )
        )
        sets_u = [
            Box(ubar[j] - rng.uniform(0.5, 2.0, nu), ubar[j] + rng.uniform(0.5, 2.0, nu))
            for j in range(n)
        ]
        set_s = Box([sbar - 1.5], [sbar + 1.5])
    raw = assemble(disc, xbar, ubar, sbar, weights, set_x1, sets_xi, sets_u, set_s)
    return raw, precondition(raw, SpectralSettings(), np.random.default_rng(seed + 1))


def random_toy_subproblem(seed: int, **kwargs) -> SubproblemData:
    """Preconditioned random toy instance (see :func:`random_toy_raw`)."""
    return random_toy_raw(seed, **kwargs)[1]


# --------------------------------------------------------------------------
# check suites (shared by pytest and the CLI verify command)
# --------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_oracle_equivalence(
    seed: int = 0,
    n_instances: int = 3,
    iterations: int = 250,
    tol: float = 1e-12,
    backend: str = "python",
    corrupt: bool = False,
) -> CheckResult:
    """Iterate-for-iterate agreement of the custom and vectorized solvers."""
    worst = 0.0
    settings = SolverSettings(eps_abs=0.0, eps_rel=0.0, j_check=10 * iterations, j_max=iterations)
    for i in range(n_instances):
        data = random_toy_subproblem(seed + 17 * i)
        if corrupt and i == 0:
            # fault injection: the devectorized solver sees a perturbed block,
            # so agreement with the vectorized reference must break down
            data_bad = random_toy_subproblem(seed + 17 * i)
            data_bad.am = data_bad.am + 1e-3
            custom = pipg_custom(data_bad, settings, backend=backend, trace=True)
        else:
            custom = pipg_custom(data, settings, backend=backend, trace=True)
        generic = pipg_generic(
            dense_cost(data),
            *dense_equality(data),
            product_projector(data),
            data.lam,
            data.sigma,
            settings,
            trace=True,
        )
        for (dx, dxi, du, ds, w), (z, wg) in zip(custom.trace, generic.trace):
            xg, xig, ug, sg = split_primal(data, z)
            diff = max(
                np.abs(dx - xg).max(),
                np.abs(dxi - xig).max(),
                np.abs(du - ug).max(),
                abs(ds - sg),
                np.abs(w - wg.reshape(w.shape)).max(),
            )
            worst = max(worst, diff)
    passed = worst <= tol
    return CheckResult(
        name=f"oracle equivalence ({backend})",
        passed=passed,
        detail=f"max iterate difference {worst:.3e} over {n_instances} instances"
        f" x {iterations} iterations (tol {tol:.0e})",
    )


def check_jacobians(params, seed: int = 0, n_samples: int = 100) -> CheckResult:
    """Analytic Jacobians against central finite differences."""
    from .dynamics import dilated_eom, pack_state

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_samples):
        q = quat.quat_normalize(rng.standard_normal(4))
        x = pack_state(
            rng.uniform(params.m_f, params.m_i),
            quat.dq_from_pose(q, rng.uniform(-2000, 2000, 3) + [0, 0, 2500]),
            rng.uniform(-0.1, 0.1, 3),
            rng.uniform(-60, 60, 3),
        )
        u = np.concatenate(
            [
                [rng.uniform(700, 2900), rng.uniform(0, 0.08), rng.uniform(0, 6.2)],
                rng.uniform(-40, 40, 3),
            ]
        )
        s = rng.uniform(20.0, 120.0)
        a, b, _ = jacobians(x, u, s, params)
        for arr, target, dim in ((a, "x", 15), (b, "u", 6)):
            for i in range(dim):
                h = 1e-6 * max(1.0, abs((x if target == "x" else u)[i]))
                vp = x.copy() if target == "x" else u.copy()
                vm = vp.copy()
                vp[i] += h
                vm[i] -= h
                if target == "x":
                    col = (dilated_eom(vp, u, s, params) - dilated_eom(vm, u, s, params)) / (2 * h)
                else:
                    col = (dilated_eom(x, vp, s, params) - dilated_eom(x, vm, s, params)) / (2 * h)
                tolcol = np.maximum(1e-6, 1e-4 * np.abs(col))
                worst = max(worst, float(np.max(np.abs(arr[:, i] - col) - tolcol)))
    passed = worst <= 0.0
    return CheckResult(
        name="jacobian finite differences",
        passed=passed,
        detail=f"worst tolerance margin {worst:.3e} over {n_samples} samples",
    )


def check_discretization(params, cons, seed: int = 0, n_substeps: int = 20) -> CheckResult:
    """Stitching identity on the vehicle plus closed-form LTI blocks."""
    from .dynamics import discretize, pack_state

    rng = np.random.default_rng(seed)
    q_i = cons.q_i
    x1 = pack_state(
        params.m_i,
        quat.dq_from_pose(q_i, cons.r_I_i),
        cons.omega_B_i,
        quat.rotate_to_body(q_i, cons.v_I_i),
    )
    n = 8
    u = np.tile([0.8 * params.m_i * params.g, 0.01, 0.2, 1.0, -0.5, 0.2], (n, 1))
    u += rng.uniform(-1, 1, u.shape) * [20.0, 1e-3, 1e-2, 0.3, 0.3, 0.3]
    s = 60.0
    x = single_shot(x1, u, s, params, n_substeps=n_substeps)
    disc = discretize(x, u, s, params, n_substeps=n_substeps)
    stitch = float(np.abs(x[1:] + disc.d - disc.x_prop).max())

    # double integrator, closed forms (nilpotent transition matrix)
    def di_fn(xv, uv):
        a = np.array([[0.0, 1.0], [0.0, 0.0]])
        b = np.array([[0.0], [1.0]])
        return xv @ a.T + uv @ b.T, np.broadcast_to(a, xv.shape[:-1] + (2, 2)), np.broadcast_to(
            b, xv.shape[:-1] + (2, 1)
        )

    n_di = 5
    xbar = rng.standard_normal((n_di, 2))
    ubar = rng.standard_normal((n_di, 1))
    sbar = 2.5
    delta = 1.0 / (n_di - 1)
    disc_di = discretize_ltv(di_fn, xbar, ubar, sbar, n_substeps=n_substeps)
    h_dil = sbar * delta
    a_cf = np.array([[1.0, h_dil], [0.0, 1.0]])
    bm_cf = np.array([sbar * h_dil * delta / 3.0, h_dil / 2.0])
    bp_cf = np.array([sbar * h_dil * delta / 6.0, h_dil / 2.0])
    worst_lti = 0.0
    for k in range(n_di - 1):
        worst_lti = max(worst_lti, float(np.abs(disc_di.A[k] - a_cf).max()))
        worst_lti = max(worst_lti, float(np.abs(disc_di.B_minus[k][:, 0] - bm_cf).max()))
        worst_lti = max(worst_lti, float(np.abs(disc_di.B_plus[k][:, 0] - bp_cf).max()))
        x_prop_cf = a_cf @ xbar[k] + bm_cf * ubar[k, 0] + bp_cf * ubar[k + 1, 0]
        worst_lti = max(worst_lti, float(np.abs(disc_di.x_prop[k] - x_prop_cf).max()))
    passed = stitch <= 1e-10 and worst_lti <= 1e-9
    return CheckResult(
        name="discretization exactness",
        passed=passed,
        detail=f"stitching residual {stitch:.3e} (tol 1e-10), LTI closed-form error "
        f"{worst_lti:.3e} (tol 1e-9)",
    )


def check_projections(seed: int = 0, n_samples: int = 2000) -> CheckResult:
    """Idempotence and nonexpansiveness over random sets and points."""
    rng = np.random.default_rng(seed)
    worst_idem = 0.0
    worst_exp = 0.0
    for _ in range(n_samples // 10):
        dim = int(rng.integers(2, 9))
        kinds = [
            Box(rng.uniform(-2, 0, dim), rng.uniform(0, 2, dim)),
            Ball(rng.standard_normal(dim), rng.uniform(0.1, 2.0)),
            TwoHalfspaces(
                rng.standard_normal(dim), rng.uniform(-1, 1), rng.standard_normal(dim), rng.uniform(-1, 1)
            ),
            Singleton(rng.standard_normal(dim)),
        ]
        for s in kinds:
            for _ in range(3):
                a = 3.0 * rng.standard_normal(dim)
                b = 3.0 * rng.standard_normal(dim)
                pa, pb = s.project(a), s.project(b)
                worst_idem = max(worst_idem, float(np.abs(s.project(pa) - pa).max()))
                worst_exp = max(
                    worst_exp,
                    float(np.linalg.norm(pa - pb) - np.linalg.norm(a - b)),
                )
    passed = worst_idem <= 1e-12 and worst_exp <= 1e-12
    return CheckResult(
        name="projection suite",
        passed=passed,
        detail=f"idempotence {worst_idem:.2e} (tol 1e-12), expansiveness excess {worst_exp:.2e}",
    )
