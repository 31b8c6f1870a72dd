# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loop of the devectorized PIPG solver.

Mirrors the batched-numpy fallback in ``seco.pipg`` operation for operation:
per-interval block matvecs, the flat-index projection plan, PI dual feedback,
extrapolation and the consecutive-iterate stopping rule. Built optionally;
the package falls back to the numpy kernel when this module is absent.
"""

from libc.math cimport fabs, sqrt, INFINITY

import numpy as np


cdef class KernelPlan:
    cdef double[:, :, ::1] am, em, bm, bp
    cdef double[:, ::1] ap, ep, sv, dh, qx, qxi, qu
    cdef double qs
    cdef Py_ssize_t n, k, nx, nu, nz
    # projection plan
    cdef long long[::1] box_idx
    cdef double[::1] box_lo, box_hi
    cdef long long[::1] ball_ptr, ball_idx
    cdef double[::1] ball_center, ball_radius
    cdef long long[::1] hs1_ptr, hs1_idx
    cdef double[::1] hs1_n, hs1_o, hs1_nsq
    cdef long long[::1] hs2_ptr, hs2_idx
    cdef double[::1] hs2_n1, hs2_o1, hs2_g11, hs2_n2, hs2_o2, hs2_g22
    cdef long long[::1] aff_ptr, aff_idx
    cdef double[::1] aff_p, aff_c
    cdef Py_ssize_t max_width

    def __init__(self, am, ap, em, ep, bm, bp, sv, dh, qx, qxi, qu, qs,
                 nz, box_idx, box_lo, box_hi,
                 ball_ptr, ball_idx, ball_center, ball_radius,
                 hs1_ptr, hs1_idx, hs1_n, hs1_o, hs1_nsq,
                 hs2_ptr, hs2_idx, hs2_n1, hs2_o1, hs2_g11, hs2_n2, hs2_o2, hs2_g22,
                 aff_ptr, aff_idx, aff_p, aff_c):
        self.am = am
        self.ap = ap
        self.em = em
        self.ep = ep
        self.bm = bm
        self.bp = bp
        self.sv = sv
        self.dh = dh
        self.qx = qx
        self.qxi = qxi
        self.qu = qu
        self.qs = qs
        self.k = am.shape[0]
        self.n = self.k + 1
        self.nx = am.shape[1]
        self.nu = bm.shape[2]
        self.nz = nz
        self.box_idx = box_idx
        self.box_lo = box_lo
        self.box_hi = box_hi
        self.ball_ptr = ball_ptr
        self.ball_idx = ball_idx
        self.ball_center = ball_center
        self.ball_radius = ball_radius
        self.hs1_ptr = hs1_ptr
        self.hs1_idx = hs1_idx
        self.hs1_n = hs1_n
        self.hs1_o = hs1_o
        self.hs1_nsq = hs1_nsq
        self.hs2_ptr = hs2_ptr
        self.hs2_idx = hs2_idx
        self.hs2_n1 = hs2_n1
        self.hs2_o1 = hs2_o1
        self.hs2_g11 = hs2_g11
        self.hs2_n2 = hs2_n2
        self.hs2_o2 = hs2_o2
        self.hs2_g22 = hs2_g22
        self.aff_ptr = aff_ptr
        self.aff_idx = aff_idx
        self.aff_p = aff_p
        self.aff_c = aff_c
        cdef Py_ssize_t width = 1, i
        for i in range(ball_ptr.shape[0] - 1):
            width = max(width, <Py_ssize_t> (self.ball_ptr[i + 1] - self.ball_ptr[i]))
        for i in range(hs2_ptr.shape[0] - 1):
            width = max(width, <Py_ssize_t> (self.hs2_ptr[i + 1] - self.hs2_ptr[i]))
        for i in range(aff_ptr.shape[0] - 1):
            width = max(width, <Py_ssize_t> (self.aff_ptr[i + 1] - self.aff_ptr[i]))
        self.max_width = width

    cdef void _project(self, double[::1] flat, double[::1] buf1, double[::1] buf2,
                       double[::1] buf3) noexcept:
        cdef Py_ssize_t i, r, w, base, j
        cdef double lo, hi, val, dist, fac, excess
        cdef double v1, v2, g11, g22, g12, det, lam1, lam2
        cdef double d1, d2, d3, best
        # boxes (and singletons)
        for i in range(self.box_idx.shape[0]):
            val = flat[self.box_idx[i]]
            lo = self.box_lo[i]
            hi = self.box_hi[i]
            if val < lo:
                val = lo
            elif val > hi:
                val = hi
            flat[self.box_idx[i]] = val
        # balls
        for r in range(self.ball_ptr.shape[0] - 1):
            base = self.ball_ptr[r]
            w = self.ball_ptr[r + 1] - base
            dist = 0.0
            for j in range(w):
                val = flat[self.ball_idx[base + j]] - self.ball_center[base + j]
                buf1[j] = val
                dist += val * val
            dist = sqrt(dist)
            if dist > self.ball_radius[r]:
                fac = self.ball_radius[r] / dist
                for j in range(w):
                    flat[self.ball_idx[base + j]] = self.ball_center[base + j] + buf1[j] * fac
        # single halfspaces
        for r in range(self.hs1_ptr.shape[0] - 1):
            base = self.hs1_ptr[r]
            w = self.hs1_ptr[r + 1] - base
            excess = -self.hs1_o[r]
            for j in range(w):
                excess += self.hs1_n[base + j] * flat[self.hs1_idx[base + j]]
            if excess > 0.0:
                fac = excess / self.hs1_nsq[r]
                for j in range(w):
                    flat[self.hs1_idx[base + j]] -= fac * self.hs1_n[base + j]
        # halfspace pairs: active-set enumeration
        for r in range(self.hs2_ptr.shape[0] - 1):
            base = self.hs2_ptr[r]
            w = self.hs2_ptr[r + 1] - base
            g11 = self.hs2_g11[r]
            g22 = self.hs2_g22[r]
            v1 = -self.hs2_o1[r]
            v2 = -self.hs2_o2[r]
            g12 = 0.0
            for j in range(w):
                val = flat[self.hs2_idx[base + j]]
                v1 += self.hs2_n1[base + j] * val
                v2 += self.hs2_n2[base + j] * val
                g12 += self.hs2_n1[base + j] * self.hs2_n2[base + j]
            if v1 <= 0.0 and v2 <= 0.0:
                continue
            # face 1 candidate
            fac = v1 / g11 if v1 > 0.0 else 0.0
            excess = -self.hs2_o2[r]
            for j in range(w):
                buf1[j] = flat[self.hs2_idx[base + j]] - fac * self.hs2_n1[base + j]
                excess += self.hs2_n2[base + j] * buf1[j]
            d1 = INFINITY
            if excess <= 1e-12 * (1.0 + fabs(self.hs2_o2[r])):
                d1 = fabs(fac) * sqrt(g11)
            # face 2 candidate
            fac = v2 / g22 if v2 > 0.0 else 0.0
            excess = -self.hs2_o1[r]
            for j in range(w):
                buf2[j] = flat[self.hs2_idx[base + j]] - fac * self.hs2_n2[base + j]
                excess += self.hs2_n1[base + j] * buf2[j]
            d2 = INFINITY
            if excess <= 1e-12 * (1.0 + fabs(self.hs2_o1[r])):
                d2 = fabs(fac) * sqrt(g22)
            # corner candidate
            det = g11 * g22 - g12 * g12
            d3 = INFINITY
            if det > 1e-14 * g11 * g22:
                lam1 = (g22 * v1 - g12 * v2) / det
                lam2 = (g11 * v2 - g12 * v1) / det
                if lam1 >= 0.0 and lam2 >= 0.0:
                    d3 = 0.0
                    for j in range(w):
                        val = lam1 * self.hs2_n1[base + j] + lam2 * self.hs2_n2[base + j]
                        buf3[j] = flat[self.hs2_idx[base + j]] - val
                        d3 += val * val
                    d3 = sqrt(d3)
            if d1 <= d2 and d1 <= d3:
                if d1 == INFINITY:
                    # no feasible candidate: deeper violated face
                    if v1 / sqrt(g11) >= v2 / sqrt(g22):
                        for j in range(w):
                            flat[self.hs2_idx[base + j]] = buf1[j]
                    else:
                        for j in range(w):
                            flat[self.hs2_idx[base + j]] = buf2[j]
                else:
                    for j in range(w):
                        flat[self.hs2_idx[base + j]] = buf1[j]
            elif d2 <= d3:
                for j in range(w):
                    flat[self.hs2_idx[base + j]] = buf2[j]
            else:
                for j in range(w):
                    flat[self.hs2_idx[base + j]] = buf3[j]
        # affine projectors live in _project_affine (needs running P offsets)

    def run(self, double alpha, double beta, double lam, double rho,
            double eps_abs, double eps_rel, int j_check, int j_max,
            double[:, ::1] zx, double[:, ::1] zxi, double[:, ::1] zu, double zs,
            double[:, ::1] eta, bint trace):
        cdef Py_ssize_t n = self.n, k = self.k, nx = self.nx, nu = self.nu, nz = self.nz
        cdef Py_ssize_t i, a, b, c, j, iterations = 0
        cdef double g, gs, acc, rs, ds, ds_prev, val
        cdef bint converged = False

        flat_np = np.zeros(nz)
        dx_np = np.zeros((n, nx))
        dxi_np = np.zeros((n, nx))
        du_np = np.zeros((n, nu))
        w_np = np.zeros((k, nx))
        dxp_np = np.asarray(zx).copy()
        dxip_np = np.asarray(zxi).copy()
        dup_np = np.asarray(zu).copy()
        wp_np = np.asarray(eta).copy()
        buf1_np = np.zeros(self.max_width)
        buf2_np = np.zeros(self.max_width)
        buf3_np = np.zeros(self.max_width)

        cdef double[::1] flat = flat_np
        cdef double[:, ::1] dx = dx_np, dxi = dxi_np, du = du_np, w = w_np
        cdef double[:, ::1] dx_prev = dxp_np, dxi_prev = dxip_np, du_prev = dup_np, w_prev = wp_np
        cdef double[::1] buf1 = buf1_np, buf2 = buf2_np, buf3 = buf3_np
        cdef Py_ssize_t u0 = 2 * n * nx
        cdef double z_new, z_old, z_diff, r_new, r_old, r_diff
        ds = zs
        ds_prev = zs
        traces = []

        for j in range(1, j_max + 1):
            iterations = j
            # ---- projected gradient candidates
            for i in range(n):
                for a in range(nx):
                    g = lam * (zx[i, a] + self.qx[i, a])
                    if i < k:
                        for b in range(nx):
                            g += self.am[i, b, a] * eta[i, b]
                    if i >= 1:
                        g += self.ap[i - 1, a] * eta[i - 1, a]
                    flat[i * nx + a] = zx[i, a] - alpha * g
                for a in range(nx):
                    g = lam * (zxi[i, a] + self.qxi[i, a])
                    if i < k:
                        for b in range(nx):
                            g += self.em[i, b, a] * eta[i, b]
                    if i >= 1:
                        g += self.ep[i - 1, a] * eta[i - 1, a]
                    flat[n * nx + i * nx + a] = zxi[i, a] - alpha * g
                for c in range(nu):
                    g = lam * (zu[i, c] + self.qu[i, c])
                    if i < k:
                        for b in range(nx):
                            g += self.bm[i, b, c] * eta[i, b]
                    if i >= 1:
                        for b in range(nx):
                            g += self.bp[i - 1, b, c] * eta[i - 1, b]
                    flat[u0 + i * nu + c] = zu[i, c] - alpha * g
            gs = lam * (zs + self.qs)
            for i in range(k):
                for b in range(nx):
                    gs += self.sv[i, b] * eta[i, b]
            flat[nz - 1] = zs - alpha * gs

            # ---- projections
            self._project(flat, buf1, buf2, buf3)
            self._project_affine(flat, buf1, buf2)

            for i in range(n):
                for a in range(nx):
                    dx[i, a] = flat[i * nx + a]
                    dxi[i, a] = flat[n * nx + i * nx + a]
                for c in range(nu):
                    du[i, c] = flat[u0 + i * nu + c]
            ds = flat[nz - 1]

            # ---- dual update with extrapolated argument
            rs = 2.0 * ds - zs
            for i in range(k):
                for b in range(nx):
                    acc = self.dh[i, b]
                    for a in range(nx):
                        acc += self.am[i, b, a] * (2.0 * dx[i, a] - zx[i, a])
                        acc += self.em[i, b, a] * (2.0 * dxi[i, a] - zxi[i, a])
                    acc += self.ap[i, b] * (2.0 * dx[i + 1, b] - zx[i + 1, b])
                    acc += self.ep[i, b] * (2.0 * dxi[i + 1, b] - zxi[i + 1, b])
                    for c in range(nu):
                        acc += self.bm[i, b, c] * (2.0 * du[i, c] - zu[i, c])
                        acc += self.bp[i, b, c] * (2.0 * du[i + 1, c] - zu[i + 1, c])
                    acc += self.sv[i, b] * rs
                    w[i, b] = eta[i, b] + beta * acc

            # ---- extrapolation
            for i in range(n):
                for a in range(nx):
                    zx[i, a] = (1.0 - rho) * zx[i, a] + rho * dx[i, a]
                    zxi[i, a] = (1.0 - rho) * zxi[i, a] + rho * dxi[i, a]
                for c in range(nu):
                    zu[i, c] = (1.0 - rho) * zu[i, c] + rho * du[i, c]
            zs = (1.0 - rho) * zs + rho * ds
            for i in range(k):
                for b in range(nx):
                    eta[i, b] = (1.0 - rho) * eta[i, b] + rho * w[i, b]

            if trace:
                traces.append(
                    (dx_np.ravel().copy(), dxi_np.ravel().copy(), du_np.ravel().copy(),
                     ds, w_np.ravel().copy())
                )

            # ---- stopping rule every j_check iterations
            if j % j_check == 0:
                z_new = fabs(ds)
                z_old = fabs(ds_prev)
                z_diff = fabs(ds - ds_prev)
                for i in range(n):
                    for a in range(nx):
                        if fabs(dx[i, a]) > z_new: z_new = fabs(dx[i, a])
                        if fabs(dxi[i, a]) > z_new: z_new = fabs(dxi[i, a])
                        if fabs(dx_prev[i, a]) > z_old: z_old = fabs(dx_prev[i, a])
                        if fabs(dxi_prev[i, a]) > z_old: z_old = fabs(dxi_prev[i, a])
                        if fabs(dx[i, a] - dx_prev[i, a]) > z_diff: z_diff = fabs(dx[i, a] - dx_prev[i, a])
                        if fabs(dxi[i, a] - dxi_prev[i, a]) > z_diff: z_diff = fabs(dxi[i, a] - dxi_prev[i, a])
                    for c in range(nu):
                        if fabs(du[i, c]) > z_new: z_new = fabs(du[i, c])
                        if fabs(du_prev[i, c]) > z_old: z_old = fabs(du_prev[i, c])
                        if fabs(du[i, c] - du_prev[i, c]) > z_diff: z_diff = fabs(du[i, c] - du_prev[i, c])
                r_new = 0.0
                r_old = 0.0
                r_diff = 0.0
                for i in range(k):
                    for b in range(nx):
                        if fabs(w[i, b]) > r_new: r_new = fabs(w[i, b])
                        if fabs(w_prev[i, b]) > r_old: r_old = fabs(w_prev[i, b])
                        if fabs(w[i, b] - w_prev[i, b]) > r_diff: r_diff = fabs(w[i, b] - w_prev[i, b])
                if (z_diff <= eps_abs + eps_rel * max(z_new, z_old)
                        and r_diff <= eps_abs + eps_rel * max(r_new, r_old)):
                    converged = True
                    break

            dx_prev[:, :] = dx
            dxi_prev[:, :] = dxi
            du_prev[:, :] = du
            ds_prev = ds
            w_prev[:, :] = w

        return (dx_np.copy(), dxi_np.copy(), du_np.copy(), ds, w_np.copy(),
                iterations, converged, traces)

    cdef void _project_affine(self, double[::1] flat, double[::1] buf1, double[::1] buf2) noexcept:
        cdef Py_ssize_t r, w, base, pbase, i, j
        cdef double val
        pbase = 0
        for r in range(self.aff_ptr.shape[0] - 1):
            base = self.aff_ptr[r]
            w = self.aff_ptr[r + 1] - base
            for j in range(w):
                buf1[j] = flat[self.aff_idx[base + j]]
            for i in range(w):
                val = self.aff_c[base + i]
                for j in range(w):
                    val += self.aff_p[pbase + i * w + j] * buf1[j]
                buf2[i] = val
            for i in range(w):
                flat[self.aff_idx[base + i]] = buf2[i]
            pbase += w * w
