"""Extrapolated proportional-integral projected gradient (PIPG) solvers.

Two implementations of the same primal-dual iteration:

* :func:`pipg_generic`: a plain vectorized solver over a dense equality
  matrix and a product-set projection callable. It exists as a testing
  oracle and for small problems.
* :func:`pipg_custom`: the devectorized solver that walks the per-interval
  blocks of the trajectory subproblem directly, never forming a global
  matrix. Its inner loop runs either in the optional compiled kernel
  (``seco._pipg_kernel``) or in a batched-numpy fallback with identical
  semantics; the backend is selected at import time.

Both solvers iterate on the preconditioned (hatted) variables; primal
deviations are returned unscaled to the original frame, duals stay in the
transformed frame so they can warm start the next solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .precondition import SubproblemData
from .sets import AffineSubspace, Ball, Box, FreeSet, Halfspace, ProductSet, Singleton, TwoHalfspaces

logger = logging.getLogger(__name__)

try:
    from . import _pipg_kernel

    HAVE_COMPILED_KERNEL = True
except ImportError:  # pure-python fallback only
    _pipg_kernel = None
    HAVE_COMPILED_KERNEL = False


@dataclass
class SolverSettings:
    """Step, extrapolation and stopping parameters for the PIPG iteration."""

    omega: float = 1.0  # primal-dual step ratio
    rho: float = 1.6  # extrapolation weight, must lie in (0, 2)
    eps_abs: float = 1e-8
    eps_rel: float = 1e-6
    j_check: int = 10
    j_max: int = 20000

    def validate(self):
        if not 0.0 < self.rho < 2.0:
            raise ValueError("extrapolation weight rho must lie in (0, 2)")
        if self.omega <= 0.0:
            raise ValueError("primal-dual ratio omega must be positive")
        if self.j_check < 1 or self.j_max < 1:
            raise ValueError("iteration counts must be positive")


@dataclass
class SolverWorkspace:
    """Warm-start payload: original-frame primal deviations, hatted dual."""

    dx: np.ndarray
    dxi: np.ndarray
    du: np.ndarray
    ds: float
    w: np.ndarray

    @classmethod
    def zeros(cls, n: int, nx: int, nu: int) -> "SolverWorkspace":
        return cls(
            dx=np.zeros((n, nx)),
            dxi=np.zeros((n, nx)),
            du=np.zeros((n, nu)),
            ds=0.0,
            w=np.zeros((n - 1, nx)),
        )


@dataclass
class CustomResult:
    dx: np.ndarray
    dxi: np.ndarray
    du: np.ndarray
    ds: float
    w: np.ndarray
    iterations: int
    converged: bool
    backend: str
    trace: list = field(default_factory=list)


@dataclass
class GenericResult:
    z: np.ndarray
    w: np.ndarray
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)


def step_sizes(lam: float, sigma: float, omega: float = 1.0) -> tuple[float, float]:
    """Primal and dual step sizes from the cost scale and the operator norm."""
    if sigma <= 0.0:
        raise ValueError("operator norm estimate sigma must be positive")
    if lam < 0.0 or omega <= 0.0:
        raise ValueError("lam must be nonnegative and omega positive")
    alpha = 2.0 / (lam + np.sqrt(lam**2 + 4.0 * omega * sigma))
    return alpha, omega * alpha


def stopping(prev_blocks, new_blocks, eps_abs: float, eps_rel: float) -> bool:
    """Consecutive-iterate stopping rule on blockwise max norms.

    ``*_blocks`` are tuples ``(dx, dxi, du, ds, w)``; the test passes only
    when both the primal and the dual difference fall below the mixed
    absolute/relative threshold.
    """
    p_prev = prev_blocks[:4]
    p_new = new_blocks[:4]
    z_new = max(np.abs(np.atleast_1d(b)).max(initial=0.0) for b in p_new)
    z_prev = max(np.abs(np.atleast_1d(b)).max(initial=0.0) for b in p_prev)
    z_diff = max(
        np.abs(np.atleast_1d(a) - np.atleast_1d(b)).max(initial=0.0)
        for a, b in zip(p_new, p_prev)
    )
    r_new = np.abs(new_blocks[4]).max(initial=0.0)
    r_prev = np.abs(prev_blocks[4]).max(initial=0.0)
    r_diff = np.abs(new_blocks[4] - prev_blocks[4]).max(initial=0.0)
    return (
        z_diff <= eps_abs + eps_rel * max(z_new, z_prev)
        and r_diff <= eps_abs + eps_rel * max(r_new, r_prev)
    )


# --------------------------------------------------------------------------
# set encoding: fold hatted references into deviation-frame projection ops
# --------------------------------------------------------------------------


@dataclass
class EncodedSets:
    """Flat-index projection plan over the stacked deviation vector.

    Layout of the flat vector: ``[x_1..x_N | xi_1..xi_N | u_1..u_N | s]``.
    Singletons are boxes with equal bounds; free slices carry no op.
    """

    nz: int
    box_idx: np.ndarray
    box_lo: np.ndarray
    box_hi: np.ndarray
    ball_groups: list  # (idx (B, w), centers (B, w), radii (B,))
    hs1_groups: list  # (idx (H, w), normals, offsets, norm_sq)
    hs2_groups: list  # (idx, n1, o1, nsq1, n2, o2, nsq2)
    affine_ops: list  # (idx (w,), proj (w, w), off (w,))


def _fold_component(base: int, start: int, comp, ref: np.ndarray, ops: dict):
    """Record the deviation-frame op for one atomic set component."""
    stop = start + comp.dim
    idx = np.arange(base + start, base + stop, dtype=np.int64)
    r = ref[start:stop]
    if isinstance(comp, FreeSet):
        return
    if isinstance(comp, Box):
        ops["box"].append((idx, comp.lo - r, comp.hi - r))
    elif isinstance(comp, Singleton):
        val = comp.value - r
        ops["box"].append((idx, val, val))
    elif isinstance(comp, Ball):
        ops["ball"].append((idx, comp.center - r, comp.radius))
    elif isinstance(comp, TwoHalfspaces):
        ops["hs2"].append(
            (
                idx,
                comp.h1.normal,
                comp.h1.offset - comp.h1.normal @ r,
                comp.h1.norm_sq,
                comp.h2.normal,
                comp.h2.offset - comp.h2.normal @ r,
                comp.h2.norm_sq,
            )
        )
    elif isinstance(comp, Halfspace):
        ops["hs1"].append((idx, comp.normal, comp.offset - comp.normal @ r, comp.norm_sq))
    elif isinstance(comp, AffineSubspace):
        off = comp.proj_mat @ r + comp.proj_off - r
        ops["affine"].append((idx, comp.proj_mat, off))
    else:
        raise TypeError(f"cannot encode projection set {type(comp).__name__}")


def _fold_entity(base: int, entity_set, ref: np.ndarray, ops: dict):
    if entity_set is None or isinstance(entity_set, FreeSet):
        return
    if isinstance(entity_set, ProductSet):
        for start, _, comp in entity_set.components:
            _fold_component(base, start, comp, ref, ops)
    else:
        _fold_component(base, 0, entity_set, ref, ops)


def encode_sets(data: SubproblemData) -> EncodedSets:
    """Compile per-node sets plus references into a flat projection plan."""
    n, nx, nu = data.n, data.nx, data.nu
    nz = 2 * n * nx + n * nu + 1
    ops = {"box": [], "ball": [], "hs1": [], "hs2": [], "affine": []}

    _fold_entity(0, data.set_x1, data.ref_xhat1, ops)
    for k in range(n):
        _fold_entity(n * nx + k * nx, data.sets_xi[k], data.ref_xihat[k], ops)
    for k in range(n):
        _fold_entity(2 * n * nx + k * nu, data.sets_u[k], data.ref_uhat[k], ops)
    _fold_entity(nz - 1, data.set_s, np.array([data.ref_shat]), ops)

    if ops["box"]:
        box_idx = np.concatenate([b[0] for b in ops["box"]])
        box_lo = np.concatenate([np.atleast_1d(b[1]) for b in ops["box"]])
        box_hi = np.concatenate([np.atleast_1d(b[2]) for b in ops["box"]])
    else:
        box_idx = np.zeros(0, dtype=np.int64)
        box_lo = np.zeros(0)
        box_hi = np.zeros(0)

    def group_by_width(items, widths):
        groups = {}
        for item, w in zip(items, widths):
            groups.setdefault(w, []).append(item)
        return groups

    ball_groups = []
    for w, items in group_by_width(ops["ball"], [b[0].size for b in ops["ball"]]).items():
        ball_groups.append(
            (
                np.stack([i[0] for i in items]),
                np.stack([i[1] for i in items]),
                np.array([i[2] for i in items]),
            )
        )
    hs1_groups = []
    for w, items in group_by_width(ops["hs1"], [h[0].size for h in ops["hs1"]]).items():
        hs1_groups.append(
            (
                np.stack([i[0] for i in items]),
                np.stack([i[1] for i in items]),
                np.array([i[2] for i in items]),
                np.array([i[3] for i in items]),
            )
        )
    hs2_groups = []
    for w, items in group_by_width(ops["hs2"], [h[0].size for h in ops["hs2"]]).items():
        hs2_groups.append(
            (
                np.stack([i[0] for i in items]),
                np.stack([i[1] for i in items]),
                np.array([i[2] for i in items]),
                np.array([i[3] for i in items]),
                np.stack([i[4] for i in items]),
                np.array([i[5] for i in items]),
                np.array([i[6] for i in items]),
            )
        )
    return EncodedSets(
        nz=nz,
        box_idx=box_idx,
        box_lo=box_lo,
        box_hi=box_hi,
        ball_groups=ball_groups,
        hs1_groups=hs1_groups,
        hs2_groups=hs2_groups,
        affine_ops=ops["affine"],
    )


def apply_projection_plan(enc: EncodedSets, flat: np.ndarray) -> np.ndarray:
    """Apply every closed-form projection op to the flat deviation vector."""
    out = flat
    if enc.box_idx.size:
        out[enc.box_idx] = np.clip(out[enc.box_idx], enc.box_lo, enc.box_hi)
    for idx, centers, radii in enc.ball_groups:
        pts = out[idx]
        delta = pts - centers
        dist = np.linalg.norm(delta, axis=1)
        over = dist > radii
        factor = np.where(over, radii / np.where(dist > 0.0, dist, 1.0), 1.0)
        out[idx] = centers + delta * factor[:, None]
    for idx, normals, offsets, norm_sq in enc.hs1_groups:
        pts = out[idx]
        excess = np.einsum("hw,hw->h", normals, pts) - offsets
        step = np.maximum(excess, 0.0) / norm_sq
        out[idx] = pts - step[:, None] * normals
    for idx, n1, o1, g11, n2, o2, g22 in enc.hs2_groups:
        pts = out[idx]
        out[idx] = _project_two_halfspaces_batch(pts, n1, o1, g11, n2, o2, g22)
    for idx, proj, off in enc.affine_ops:
        out[idx] = proj @ out[idx] + off
    return out


def _project_two_halfspaces_batch(pts, n1, o1, g11, n2, o2, g22):
    """Vectorized active-set projection onto pairs of halfspaces.

    Candidate projections (either face, or the corner from the 2x2 Gram
    inverse) are only evaluated for rows that are actually infeasible.
    """
    v1 = np.einsum("hw,hw->h", n1, pts) - o1
    v2 = np.einsum("hw,hw->h", n2, pts) - o2
    bad = (v1 > 0.0) | (v2 > 0.0)
    if not bad.any():
        return pts
    out = pts.copy()
    pts, n1, o1, g11 = pts[bad], n1[bad], o1[bad], g11[bad]
    n2, o2, g22 = n2[bad], o2[bad], g22[bad]
    v1, v2 = v1[bad], v2[bad]
    g12 = np.einsum("hw,hw->h", n1, n2)
    det = g11 * g22 - g12 * g12

    s1 = np.maximum(v1, 0.0) / g11
    p1 = pts - s1[:, None] * n1
    ok1 = np.einsum("hw,hw->h", n2, p1) - o2 <= 1e-12 * (1.0 + np.abs(o2))
    s2 = np.maximum(v2, 0.0) / g22
    p2 = pts - s2[:, None] * n2
    ok2 = np.einsum("hw,hw->h", n1, p2) - o1 <= 1e-12 * (1.0 + np.abs(o1))

    safe_det = np.where(det > 1e-14 * g11 * g22, det, 1.0)
    lam1 = (g22 * v1 - g12 * v2) / safe_det
    lam2 = (g11 * v2 - g12 * v1) / safe_det
    ok3 = (det > 1e-14 * g11 * g22) & (lam1 >= 0.0) & (lam2 >= 0.0)
    step3 = lam1[:, None] * n1 + lam2[:, None] * n2
    p3 = pts - step3

    inf = np.inf
    d1 = np.where(ok1, s1 * s1 * g11, inf)
    d2 = np.where(ok2, s2 * s2 * g22, inf)
    d3 = np.where(ok3, np.einsum("hw,hw->h", step3, step3), inf)
    pick2 = d2 < d1
    best = np.where(pick2[:, None], p2, p1)
    dbest = np.where(pick2, d2, d1)
    best = np.where((d3 < dbest)[:, None], p3, best)
    # no candidate feasible (near-parallel normals): take the deeper face
    none_ok = ~(ok1 | ok2 | ok3)
    if np.any(none_ok):
        deeper = v1 / np.sqrt(g11) >= v2 / np.sqrt(g22)
        fallback = np.where(deeper[:, None], p1, p2)
        best = np.where(none_ok[:, None], fallback, best)
    out[bad] = best
    return out


# --------------------------------------------------------------------------
# batched-numpy custom kernel
# --------------------------------------------------------------------------


def _run_custom_numpy(data: SubproblemData, enc: EncodedSets, alpha, beta, lam, rho,
                      eps_abs, eps_rel, j_check, j_max, zx, zxi, zu, zs, eta, trace):
    n, nx, nu = data.n, data.nx, data.nu
    k = n - 1
    am, ap, em, ep = data.am, data.ap_diag, data.em, data.ep_diag
    bm, bp, sv, dh = data.bm, data.bp, data.sv, data.dh
    qx, qxi, qu, qs = data.q_x, data.q_xi, data.q_u, data.q_s
    am_t = np.ascontiguousarray(am.transpose(0, 2, 1))
    em_t = np.ascontiguousarray(em.transpose(0, 2, 1))
    bm_t = np.ascontiguousarray(bm.transpose(0, 2, 1))
    bp_t = np.ascontiguousarray(bp.transpose(0, 2, 1))

    dx_prev, dxi_prev, du_prev = zx.copy(), zxi.copy(), zu.copy()
    ds_prev, w_prev = zs, eta.copy()
    traces = []
    flat = np.empty(enc.nz)
    iterations = 0
    converged = False
    nxx = n * nx

    for j in range(1, j_max + 1):
        iterations = j
        eta_col = eta[:, :, None]
        gx = lam * (zx + qx)
        gx[:k] += (am_t @ eta_col)[:, :, 0]
        gx[1:] += ap * eta
        gxi = lam * (zxi + qxi)
        gxi[:k] += (em_t @ eta_col)[:, :, 0]
        gxi[1:] += ep * eta
        gu = lam * (zu + qu)
        gu[:k] += (bm_t @ eta_col)[:, :, 0]
        gu[1:] += (bp_t @ eta_col)[:, :, 0]
        gs = lam * (zs + qs) + float(np.sum(sv * eta))

        flat[:nxx] = (zx - alpha * gx).ravel()
        flat[nxx : 2 * nxx] = (zxi - alpha * gxi).ravel()
        flat[2 * nxx : 2 * nxx + n * nu] = (zu - alpha * gu).ravel()
        flat[-1] = zs - alpha * gs
        apply_projection_plan(enc, flat)
        dx = flat[:nxx].reshape(n, nx).copy()
        dxi = flat[nxx : 2 * nxx].reshape(n, nx).copy()
        du = flat[2 * nxx : 2 * nxx + n * nu].reshape(n, nu).copy()
        ds = float(flat[-1])

        rx = 2.0 * dx - zx
        rxi = 2.0 * dxi - zxi
        ru = 2.0 * du - zu
        rs = 2.0 * ds - zs
        w = eta + beta * (
            (am @ rx[:k, :, None])[:, :, 0]
            + ap * rx[1:]
            + (em @ rxi[:k, :, None])[:, :, 0]
            + ep * rxi[1:]
            + (bm @ ru[:k, :, None])[:, :, 0]
            + (bp @ ru[1:, :, None])[:, :, 0]
            + sv * rs
            + dh
        )

        zx = (1.0 - rho) * zx + rho * dx
        zxi = (1.0 - rho) * zxi + rho * dxi
        zu = (1.0 - rho) * zu + rho * du
        zs = (1.0 - rho) * zs + rho * ds
        eta = (1.0 - rho) * eta + rho * w

        if trace:
            traces.append((dx.copy(), dxi.copy(), du.copy(), ds, w.copy()))
        if j % j_check == 0 and stopping(
            (dx_prev, dxi_prev, du_prev, ds_prev, w_prev), (dx, dxi, du, ds, w), eps_abs, eps_rel
        ):
            converged = True
            dx_prev, dxi_prev, du_prev, ds_prev, w_prev = dx, dxi, du, ds, w
            break
        dx_prev, dxi_prev, du_prev, ds_prev, w_prev = dx, dxi, du, ds, w
    return dx_prev, dxi_prev, du_prev, ds_prev, w_prev, iterations, converged, traces


def pipg_custom(
    data: SubproblemData,
    settings: SolverSettings | None = None,
    warm: SolverWorkspace | None = None,
    backend: str = "auto",
    trace: bool = False,
) -> CustomResult:
    """Solve the preconditioned subproblem with the devectorized iteration.

    The warm start carries original-frame primal deviations and the hatted
    dual from a previous solve (zeros when absent). Non-convergence within
    ``j_max`` is reported via ``converged`` with the last iterates returned.
    """
    settings = settings or SolverSettings()
    settings.validate()
    n, nx, nu = data.n, data.nx, data.nu
    warm = warm or SolverWorkspace.zeros(n, nx, nu)
    alpha, beta = step_sizes(data.lam, data.sigma, settings.omega)
    enc = encode_sets(data)

    ch = data.chol
    zx = ch.l_x1 * warm.dx + ch.l_x2 * warm.dxi
    zxi = ch.l_xi * warm.dxi
    zu = data.l_u * warm.du
    zs = data.l_s * warm.ds
    eta = warm.w.copy()

    chosen = backend
    if backend == "auto":
        chosen = "compiled" if HAVE_COMPILED_KERNEL else "python"
    if chosen == "compiled":
        if not HAVE_COMPILED_KERNEL:
            raise RuntimeError("compiled kernel requested but not built")
        dx, dxi, du, ds, w, iterations, converged, traces = _run_custom_compiled(
            data, enc, alpha, beta, data.lam, settings.rho,
            settings.eps_abs, settings.eps_rel, settings.j_check, settings.j_max,
            zx, zxi, zu, zs, eta, trace,
        )
    elif chosen == "python":
        dx, dxi, du, ds, w, iterations, converged, traces = _run_custom_numpy(
            data, enc, alpha, beta, data.lam, settings.rho,
            settings.eps_abs, settings.eps_rel, settings.j_check, settings.j_max,
            zx, zxi, zu, zs, eta, trace,
        )
    else:
        raise ValueError(f"unknown backend {backend!r}")

    if not converged:
        logger.info("custom solver hit the iteration cap (%d)", settings.j_max)
    return CustomResult(
        dx=ch.l_x1_inv * dx + ch.l_x2_inv * dxi,
        dxi=ch.l_xi_inv * dxi,
        du=data.l_u_inv * du,
        ds=data.l_s_inv * ds,
        w=w,
        iterations=iterations,
        converged=converged,
        backend=chosen,
        trace=traces,
    )


def _run_custom_compiled(data, enc, alpha, beta, lam, rho, eps_abs, eps_rel,
                         j_check, j_max, zx, zxi, zu, zs, eta, trace):
    """Marshal arrays into the compiled kernel and unpack its outputs."""
    n, nx, nu = data.n, data.nx, data.nu
    kern = _pipg_kernel.KernelPlan(
        np.ascontiguousarray(data.am),
        np.ascontiguousarray(data.ap_diag),
        np.ascontiguousarray(data.em),
        np.ascontiguousarray(data.ep_diag),
        np.ascontiguousarray(data.bm),
        np.ascontiguousarray(data.bp),
        np.ascontiguousarray(data.sv),
        np.ascontiguousarray(data.dh),
        np.ascontiguousarray(data.q_x),
        np.ascontiguousarray(data.q_xi),
        np.ascontiguousarray(data.q_u),
        float(data.q_s),
        *_flatten_plan(enc),
    )
    out = kern.run(
        float(alpha), float(beta), float(lam), float(rho),
        float(eps_abs), float(eps_rel), int(j_check), int(j_max),
        np.ascontiguousarray(zx), np.ascontiguousarray(zxi),
        np.ascontiguousarray(zu), float(zs), np.ascontiguousarray(eta),
        bool(trace),
    )
    dx, dxi, du, ds, w, iterations, converged, raw_trace = out
    traces = [
        (t[0].reshape(n, nx), t[1].reshape(n, nx), t[2].reshape(n, nu), t[3], t[4].reshape(n - 1, nx))
        for t in raw_trace
    ]
    return dx.reshape(n, nx), dxi.reshape(n, nx), du.reshape(n, nu), ds, w.reshape(n - 1, nx), iterations, converged, traces


def _flatten_plan(enc: EncodedSets):
    """Serialize the projection plan into ragged arrays for the kernel."""

    def ragged(groups, parts):
        ptr = [0]
        flat = {name: [] for name in parts}
        count = 0
        for group in groups:
            rows = group[0].shape[0]
            width = group[0].shape[1]
            for r in range(rows):
                for name, col in zip(parts, group):
                    item = col[r]
                    flat[name].append(np.atleast_1d(item).astype(float))
                ptr.append(ptr[-1] + width)
                count += 1
        return ptr, flat, count

    ball_ptr, ball_flat, _ = ragged(enc.ball_groups, ["idx", "center", "radius"])
    hs1_ptr, hs1_flat, _ = ragged(enc.hs1_groups, ["idx", "n", "o", "nsq"])
    hs2_ptr, hs2_flat, _ = ragged(enc.hs2_groups, ["idx", "n1", "o1", "g11", "n2", "o2", "g22"])

    def cat(parts, dtype=float):
        return np.concatenate([p for p in parts]) if parts else np.zeros(0, dtype=dtype)

    aff_ptr = [0]
    aff_idx, aff_p, aff_c = [], [], []
    for idx, proj, off in enc.affine_ops:
        aff_idx.append(idx.astype(np.int64))
        aff_p.append(proj.ravel())
        aff_c.append(off)
        aff_ptr.append(aff_ptr[-1] + idx.size)

    return (
        enc.nz,
        np.ascontiguousarray(enc.box_idx),
        np.ascontiguousarray(enc.box_lo),
        np.ascontiguousarray(enc.box_hi),
        np.asarray(ball_ptr, dtype=np.int64),
        cat([a.astype(np.int64) for a in ball_flat["idx"]], np.int64),
        cat(ball_flat["center"]),
        np.asarray([r[0] for r in ball_flat["radius"]], dtype=float),
        np.asarray(hs1_ptr, dtype=np.int64),
        cat([a.astype(np.int64) for a in hs1_flat["idx"]], np.int64),
        cat(hs1_flat["n"]),
        np.asarray([o[0] for o in hs1_flat["o"]], dtype=float),
        np.asarray([o[0] for o in hs1_flat["nsq"]], dtype=float),
        np.asarray(hs2_ptr, dtype=np.int64),
        cat([a.astype(np.int64) for a in hs2_flat["idx"]], np.int64),
        cat(hs2_flat["n1"]),
        np.asarray([o[0] for o in hs2_flat["o1"]], dtype=float),
        np.asarray([o[0] for o in hs2_flat["g11"]], dtype=float),
        cat(hs2_flat["n2"]),
        np.asarray([o[0] for o in hs2_flat["o2"]], dtype=float),
        np.asarray([o[0] for o in hs2_flat["g22"]], dtype=float),
        np.asarray(aff_ptr, dtype=np.int64),
        cat(aff_idx, np.int64),
        cat(aff_p),
        cat(aff_c),
    )


# --------------------------------------------------------------------------
# generic vectorized solver (oracle)
# --------------------------------------------------------------------------


def pipg_generic(
    qhat: np.ndarray,
    h_mat: np.ndarray,
    h_vec: np.ndarray,
    project,
    lam: float,
    sigma: float,
    settings: SolverSettings | None = None,
    warm: tuple[np.ndarray, np.ndarray] | None = None,
    trace: bool = False,
) -> GenericResult:
    """Vectorized PIPG on ``min lam/2 ||z||^2 + qhat . z  s.t.  Hz = h, z in D``.

    ``project`` maps a stacked vector onto D. ``qhat`` carries the full cost
    scaling (it is ``lam`` times the transformed linear cost). Used as the
    reference implementation for the devectorized solver.
    """
    settings = settings or SolverSettings()
    settings.validate()
    alpha, beta = step_sizes(lam, sigma, settings.omega)
    rho = settings.rho
    nz = qhat.size
    if warm is None:
        warm = (np.zeros(nz), np.zeros(h_vec.size))
    zeta = warm[0].copy()
    eta = warm[1].copy()
    z_prev = zeta.copy()
    w_prev = eta.copy()
    traces = []
    iterations = 0
    converged = False
    for j in range(1, settings.j_max + 1):
        iterations = j
        z_new = project(zeta - alpha * (lam * zeta + qhat + h_mat.T @ eta))
        w_new = eta + beta * (h_mat @ (2.0 * z_new - zeta) - h_vec)
        zeta = (1.0 - rho) * zeta + rho * z_new
        eta = (1.0 - rho) * eta + rho * w_new
        if trace:
            traces.append((z_new.copy(), w_new.copy()))
        if j % settings.j_check == 0:
            z_diff = np.abs(z_new - z_prev).max(initial=0.0)
            z_mag = max(np.abs(z_new).max(initial=0.0), np.abs(z_prev).max(initial=0.0))
            w_diff = np.abs(w_new - w_prev).max(initial=0.0)
            w_mag = max(np.abs(w_new).max(initial=0.0), np.abs(w_prev).max(initial=0.0))
            if (
                z_diff <= settings.eps_abs + settings.eps_rel * z_mag
                and w_diff <= settings.eps_abs + settings.eps_rel * w_mag
            ):
                converged = True
                z_prev, w_prev = z_new, w_new
                break
        z_prev, w_prev = z_new, w_new
    return GenericResult(z=z_prev, w=w_prev, iterations=iterations, converged=converged, trace=traces)
