"""Closed-form Euclidean projection sets.

Every path constraint in the guidance subproblem is expressed as membership
in one of these sets (or a Cartesian product of them over state/control
slices), so the solver only ever evaluates closed-form projections. The
``scaled`` method transports a set through a positive diagonal change of
variables ``y = f * x``, which is how both variable prescaling and the
hypersphere preconditioner act on the constraint geometry.

No general factorization or solve is used anywhere: the affine-subspace
projector is precomputed from hand-coded small eliminations at construction
time, and everything else is arithmetic.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Box",
    "Ball",
    "Halfspace",
    "TwoHalfspaces",
    "Singleton",
    "AffineSubspace",
    "ProductSet",
    "FreeSet",
]


def _as_vec(x, dim=None):
    out = np.atleast_1d(np.asarray(x, dtype=float))
    if dim is not None and out.shape != (dim,):
        raise ValueError(f"expected vector of length {dim}, got shape {out.shape}")
    return out


def _scale_vec(f, dim):
    f = np.atleast_1d(np.asarray(f, dtype=float))
    if f.size == 1:
        f = np.full(dim, f[0])
    if f.shape != (dim,):
        raise ValueError("scale factor shape mismatch")
    if np.any(f <= 0.0):
        raise ValueError("scale factors must be positive")
    return f


def _gauss_solve(a, b):
    """Solve a small dense system by Gaussian elimination with pivoting.

    Used only when constructing affine-subspace projectors (set-construction
    time, never inside solver iterations).
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = a.shape[0]
    if b.ndim == 1:
        b = b[:, None]
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[piv, col]) < 1e-14:
            raise ValueError("singular system in subspace construction")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        inv = 1.0 / a[col, col]
        for row in range(col + 1, n):
            fac = a[row, col] * inv
            a[row, col:] -= fac * a[col, col:]
            b[row] -= fac * b[col]
    x = np.zeros_like(b)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1 :] @ x[row + 1 :]) / a[row, row]
    return x[:, 0] if x.shape[1] == 1 else x


class FreeSet:
    """The whole space: projection is the identity."""

    def __init__(self, dim: int):
        self.dim = dim

    def project(self, p):
        return np.asarray(p, dtype=float).copy()

    def violation(self, p):
        return 0.0

    def scaled(self, f):
        return FreeSet(self.dim)


class Box:
    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape:
            raise ValueError("box bounds shape mismatch")
        if np.any(self.lo > self.hi + 1e-12 * np.maximum(1.0, np.abs(self.hi))):
            raise ValueError("empty box: lo > hi")
        self.dim = self.lo.size

    def project(self, p):
        return np.clip(np.asarray(p, dtype=float), self.lo, self.hi)

    def violation(self, p):
        p = np.asarray(p, dtype=float)
        return float(np.max(np.maximum(self.lo - p, p - self.hi), initial=0.0))

    def scaled(self, f):
        f = _scale_vec(f, self.dim)
        return Box(self.lo * f, self.hi * f)


class Ball:
    def __init__(self, center, radius):
        self.center = _as_vec(center)
        self.radius = float(radius)
        if self.radius < 0.0:
            raise ValueError("ball radius must be nonnegative")
        self.dim = self.center.size

    def project(self, p):
        p = np.asarray(p, dtype=float)
        delta = p - self.center
        dist = np.linalg.norm(delta)
        if dist <= self.radius:
            return p.copy()
        return self.center + delta * (self.radius / dist)

    def violation(self, p):
        return max(0.0, float(np.linalg.norm(np.asarray(p, float) - self.center) - self.radius))

    def scaled(self, f):
        f = _scale_vec(f, self.dim)
        if not np.allclose(f, f[0], rtol=1e-12, atol=0.0):
            raise ValueError("ball sets require a uniform scale factor")
        return Ball(self.center * f[0], self.radius * f[0])


class Halfspace:
    def __init__(self, normal, offset):
        self.normal = _as_vec(normal)
        self.offset = float(offset)
        self.norm_sq = float(self.normal @ self.normal)
        if self.norm_sq == 0.0:
            raise ValueError("halfspace normal must be nonzero")
        self.dim = self.normal.size

    def project(self, p):
        p = np.asarray(p, dtype=float)
        excess = self.normal @ p - self.offset
        if excess <= 0.0:
            return p.copy()
        return p - (excess / self.norm_sq) * self.normal

    def violation(self, p):
        return max(0.0, float(self.normal @ np.asarray(p, float) - self.offset)) / np.sqrt(self.norm_sq)

    def scaled(self, f):
        f = _scale_vec(f, self.dim)
        return Halfspace(self.normal / f, self.offset)


class TwoHalfspaces:
    """Intersection of two halfspaces with closed-form projection.

    The projection enumerates the candidate active sets: interior point,
    either single face, or the corner where both faces are active (2x2
    closed-form Gram inverse). Near-parallel normals collapse to the more
    restrictive single face.
    """

    def __init__(self, n1, o1, n2, o2):
        self.h1 = Halfspace(n1, o1)
        self.h2 = Halfspace(n2, o2)
        self.dim = self.h1.dim
        if self.h2.dim != self.dim:
            raise ValueError("halfspace dimensions differ")

    def project(self, p):
        p = np.asarray(p, dtype=float)
        n1, o1 = self.h1.normal, self.h1.offset
        n2, o2 = self.h2.normal, self.h2.offset
        v1 = n1 @ p - o1
        v2 = n2 @ p - o2
        if v1 <= 0.0 and v2 <= 0.0:
            return p.copy()
        g11 = self.h1.norm_sq
        g22 = self.h2.norm_sq
        g12 = float(n1 @ n2)
        det = g11 * g22 - g12 * g12
        candidates = []
        p1 = p - (max(v1, 0.0) / g11) * n1
        if n2 @ p1 - o2 <= 1e-12 * (1.0 + abs(o2)):
            candidates.append(p1)
        p2 = p - (max(v2, 0.0) / g22) * n2
        if n1 @ p2 - o1 <= 1e-12 * (1.0 + abs(o1)):
            candidates.append(p2)
        if det > 1e-14 * g11 * g22:
            lam1 = (g22 * v1 - g12 * v2) / det
            lam2 = (g11 * v2 - g12 * v1) / det
            if lam1 >= 0.0 and lam2 >= 0.0:
                candidates.append(p - lam1 * n1 - lam2 * n2)
        if not candidates:
            # near-parallel normals: fall back to the deeper violated face
            candidates.append(p1 if v1 / np.sqrt(g11) >= v2 / np.sqrt(g22) else p2)
        dists = [np.linalg.norm(p - c) for c in candidates]
        return candidates[int(np.argmin(dists))]

    def violation(self, p):
        return max(self.h1.violation(p), self.h2.violation(p))

    def scaled(self, f):
        f = _scale_vec(f, self.dim)
        return TwoHalfspaces(self.h1.normal / f, self.h1.offset, self.h2.normal / f, self.h2.offset)


class Singleton:
    def __init__(self, value):
        self.value = _as_vec(value)
        self.dim = self.value.size

    def project(self, p):
        return self.value.copy()

    def violation(self, p):
        return float(np.max(np.abs(np.asarray(p, float) - self.value), initial=0.0))

    def scaled(self, f):
        f = _scale_vec(f, self.dim)
        return Singleton(self.value * f)


class AffineSubspace:
    """The set {x : M x = b} with a precomputed affine projector.

    Projection is ``x -> P x + c`` where ``P = I - M^T (M M^T)^{-1} M`` and
    ``c = M^T (M M^T)^{-1} b``; both are fixed at construction. For graph
    subspaces ``x2 = G x1`` (see :meth:`from_graph`) the projector comes from
    the closed-form inverse of the small Gram matrix ``I + G^T G``.
    """

    def __init__(self, matrix, rhs, _proj=None):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.rhs = _as_vec(rhs)
        m, self.dim = self.matrix.shape
        if self.rhs.size != m:
            raise ValueError("rhs length must match row count")
        if _proj is not None:
            self.proj_mat, self.proj_off = _proj
        else:
            gram = self.matrix @ self.matrix.T
            k = _gauss_solve(gram, np.hstack([self.matrix, self.rhs[:, None]]))
            k_m = k[:, :-1]
            k_b = k[:, -1]
            self.proj_mat = np.eye(self.dim) - self.matrix.T @ k_m
            self.proj_off = self.matrix.T @ k_b

    @classmethod
    def from_graph(cls, g: np.ndarray) -> "AffineSubspace":
        """Subspace {(a, G a)} with the projector built in closed form."""
        g = np.atleast_2d(np.asarray(g, dtype=float))
        d2, d1 = g.shape
        gram = np.eye(d1) + g.T @ g
        if d1 == 1:
            w = np.array([[1.0 / gram[0, 0]]])
        elif d1 == 2:
            det = gram[0, 0] * gram[1, 1] - gram[0, 1] * gram[1, 0]
            w = np.array([[gram[1, 1], -gram[0, 1]], [-gram[1, 0], gram[0, 0]]]) / det
        else:
            w = _gauss_solve(gram, np.eye(d1))
        proj = np.zeros((d1 + d2, d1 + d2))
        proj[:d1, :d1] = w
        proj[:d1, d1:] = w @ g.T
        proj[d1:, :d1] = g @ w
        proj[d1:, d1:] = g @ w @ g.T
        matrix = np.hstack([-g, np.eye(d2)])
        out = cls.__new__(cls)
        out.matrix = matrix
        out.rhs = np.zeros(d2)
        out.dim = d1 + d2
        out.proj_mat = proj
        out.proj_off = np.zeros(d1 + d2)
        out._graph = (d1, g)
        return out

    def project(self, p):
        return self.proj_mat @ np.asarray(p, dtype=float) + self.proj_off

    def violation(self, p):
        return float(np.max(np.abs(self.matrix @ np.asarray(p, float) - self.rhs), initial=0.0))

    def scaled(self, f):
        f = _scale_vec(f, self.dim)
        graph = getattr(self, "_graph", None)
        if graph is not None:
            d1, g = graph
            f1, f2 = f[:d1], f[d1:]
            if np.allclose(f1, f1[0], rtol=1e-12, atol=0.0) and np.allclose(f2, f2[0], rtol=1e-12, atol=0.0):
                return AffineSubspace.from_graph((f2[0] / f1[0]) * g)
        return AffineSubspace(self.matrix / f, self.rhs)


class ProductSet:
    """Cartesian product of sets over contiguous slices of a vector.

    Coordinates not covered by any component are unconstrained. Components
    must not overlap.
    """

    def __init__(self, dim: int, components):
        self.dim = dim
        self.components = []
        covered = np.zeros(dim, dtype=bool)
        for start, comp_set in components:
            stop = start + comp_set.dim
            if stop > dim:
                raise ValueError("component exceeds product dimension")
            if covered[start:stop].any():
                raise ValueError("overlapping product components")
            covered[start:stop] = True
            self.components.append((start, stop, comp_set))

    def project(self, p):
        out = np.asarray(p, dtype=float).copy()
        for start, stop, comp_set in self.components:
            out[start:stop] = comp_set.project(out[start:stop])
        return out

    def violation(self, p):
        p = np.asarray(p, dtype=float)
        return max((c.violation(p[a:b]) for a, b, c in self.components), default=0.0)

    def scaled(self, f):
        f = _scale_vec(f, self.dim)
        return ProductSet(self.dim, [(a, c.scaled(f[a:b])) for a, b, c in self.components])
