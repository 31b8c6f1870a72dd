import numpy as np
import pytest

from seco.precondition import (
    DegenerateDynamicsError,
    SpectralSettings,
    block_operator,
    chol_state,
    power_iteration,
    precondition,
    shifted_power_iteration,
)
from seco.verification import dense_cholesky, dense_cost, dense_equality, random_toy_raw


def state_weight_matrix(w_tr, w_vse):
    return np.array([[w_tr + w_vse, -w_vse], [-w_vse, w_vse]])


def r_from_chol(ch):
    return np.array([[ch.l_x1, ch.l_x2], [0.0, ch.l_xi]])


def r_inv_from_chol(ch):
    return np.array([[ch.l_x1_inv, ch.l_x2_inv], [0.0, ch.l_xi_inv]])


def test_chol_state_example_values():
    ch = chol_state(1.0, 4.0)
    np.testing.assert_allclose(r_from_chol(ch), np.array([[5.0, -4.0], [0.0, 2.0]]) / np.sqrt(5.0))
    r = r_from_chol(ch)
    np.testing.assert_allclose(r.T @ r, [[5.0, -4.0], [-4.0, 4.0]], atol=1e-12)

    ch = chol_state(1.0, 1.0)
    np.testing.assert_allclose(r_from_chol(ch), np.array([[2.0, -1.0], [0.0, 1.0]]) / np.sqrt(2.0))
    r = r_from_chol(ch)
    np.testing.assert_allclose(r.T @ r, [[2.0, -1.0], [-1.0, 1.0]], atol=1e-12)


def test_chol_state_reconstructs_and_inverts_over_random_weights():
    rng = np.random.default_rng(60)
    for _ in range(1000):
        w_tr, w_vse = rng.uniform(1e-3, 1e3, 2)
        ch = chol_state(w_tr, w_vse)
        r = r_from_chol(ch)
        w = state_weight_matrix(w_tr, w_vse)
        scale = max(1.0, np.abs(w).max())
        assert np.abs(r.T @ r - w).max() <= 1e-12 * scale
        assert np.abs(r @ r_inv_from_chol(ch) - np.eye(2)).max() <= 1e-12
        # closed-form inverse entries in terms of the weight ratio
        ratio = np.sqrt(w_vse / w_tr)
        expected_inv = np.array([[1.0, ratio], [0.0, ratio + 1.0 / ratio]]) / np.sqrt(w_tr + w_vse)
        np.testing.assert_allclose(r_inv_from_chol(ch), expected_inv, rtol=1e-12)


def test_chol_state_rejects_nonpositive_weights():
    with pytest.raises(ValueError):
        chol_state(1.0, 0.0)
    with pytest.raises(ValueError):
        chol_state(-1.0, 1.0)


def dense_ops(h):
    return (lambda z: h @ z, lambda w: h.T @ w)


def test_power_iteration_diagonal():
    h = np.diag([1.0, 2.0, 3.0])
    apply_h, apply_ht = dense_ops(h)
    res = power_iteration(apply_h, apply_ht, np.array([1.0, 1.0, 1.0]), eps_buff=0.05, j_max=2000)
    assert res.converged
    assert res.value == pytest.approx(1.05 * 9.0, rel=1e-5)


def test_power_iteration_orthogonal():
    rng = np.random.default_rng(61)
    q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    apply_h, apply_ht = dense_ops(q)
    res = power_iteration(apply_h, apply_ht, rng.standard_normal(6), eps_buff=0.05)
    assert res.value == pytest.approx(1.05, rel=1e-6)


def test_power_iteration_matches_svd_oracle():
    rng = np.random.default_rng(62)
    for shape in [(50, 80), (120, 90), (200, 300)]:
        h = rng.standard_normal(shape)
        apply_h, apply_ht = dense_ops(h)
        res = power_iteration(
            apply_h, apply_ht, rng.standard_normal(shape[1]), eps_rel=1e-9, eps_buff=0.05, j_max=20000
        )
        true = np.linalg.svd(h, compute_uv=False)[0] ** 2
        assert res.value / 1.05 == pytest.approx(true, rel=1e-4)
        assert res.value >= true  # buffered upward


def test_shifted_power_iteration_diagonal():
    h = np.diag([1.0, 2.0, 3.0])
    apply_h, apply_ht = dense_ops(h)
    smax = power_iteration(apply_h, apply_ht, np.ones(3), eps_buff=0.05).value
    res = shifted_power_iteration(apply_h, apply_ht, np.array([1.0, 0.7, 0.3]), smax, eps_buff=0.05)
    # estimate of the smallest eigenvalue of H H^T, buffered downward
    assert res.value <= 1.0
    assert res.value == pytest.approx(0.95 * (smax - (smax - 1.0)), rel=0.1)


def test_shifted_power_iteration_known_spectrum():
    rng = np.random.default_rng(63)
    q, _ = np.linalg.qr(rng.standard_normal((2, 2)))
    h = q @ np.diag([1.0, 2.0])  # H H^T spectrum {1, 4}
    apply_h, apply_ht = dense_ops(h)
    smax = power_iteration(apply_h, apply_ht, rng.standard_normal(2), eps_rel=1e-10, eps_buff=0.05).value
    res = shifted_power_iteration(
        apply_h, apply_ht, rng.standard_normal(2), smax, eps_rel=1e-10, eps_buff=0.05, j_max=5000
    )
    assert res.value == pytest.approx(0.95 * (smax - (smax - 1.0)), rel=1e-3)
    assert res.value <= 1.0  # buffered downward, below the true minimum


def test_lambda_from_sigma_min():
    assert np.sqrt(2.0 / 2.0) == pytest.approx(1.0)


def test_block_operator_matches_dense():
    _, data = random_toy_raw(7)
    apply_h, apply_ht, nz, nw = block_operator(
        data.am, data.ap_diag, data.em, data.ep_diag, data.bm, data.bp, data.sv
    )
    h, _ = dense_equality(data)
    rng = np.random.default_rng(64)
    for _ in range(20):
        z = rng.standard_normal(nz)
        w = rng.standard_normal(nw)
        np.testing.assert_allclose(apply_h(z), h @ z, atol=1e-12)
        np.testing.assert_allclose(apply_ht(w), h.T @ w, atol=1e-12)


def test_customized_power_iteration_matches_vectorized_trace():
    _, data = random_toy_raw(8)
    apply_h, apply_ht, nz, nw = block_operator(
        data.am, data.ap_diag, data.em, data.ep_diag, data.bm, data.bp, data.sv
    )
    h, _ = dense_equality(data)
    dense_h_fn, dense_ht_fn = dense_ops(h)
    rng = np.random.default_rng(65)
    seed_z = rng.standard_normal(nz)
    res_blocks = power_iteration(apply_h, apply_ht, seed_z, keep_trace=True, j_max=300)
    res_dense = power_iteration(dense_h_fn, dense_ht_fn, seed_z, keep_trace=True, j_max=300)
    assert res_blocks.iterations == res_dense.iterations
    np.testing.assert_allclose(res_blocks.trace, res_dense.trace, atol=1e-12)

    seed_w = rng.standard_normal(nw)
    sh_blocks = shifted_power_iteration(
        apply_h, apply_ht, seed_w, res_blocks.value, keep_trace=True, j_max=300
    )
    sh_dense = shifted_power_iteration(
        dense_h_fn, dense_ht_fn, seed_w, res_dense.value, keep_trace=True, j_max=300
    )
    assert sh_blocks.iterations == sh_dense.iterations
    np.testing.assert_allclose(sh_blocks.trace, sh_dense.trace, atol=1e-12)


def dense_raw_equality(raw):
    n, nx, nu = raw.n, raw.nx, raw.nu
    k = n - 1
    nz = 2 * n * nx + n * nu + 1
    h = np.zeros((k * nx, nz))
    for i in range(k):
        rows = slice(i * nx, (i + 1) * nx)
        h[rows, i * nx : (i + 1) * nx] = raw.A[i]
        h[rows, (i + 1) * nx : (i + 2) * nx] = -np.eye(nx)
        base_u = 2 * n * nx
        h[rows, base_u + i * nu : base_u + (i + 1) * nu] = raw.B_minus[i]
        h[rows, base_u + (i + 1) * nu : base_u + (i + 2) * nu] = raw.B_plus[i]
        h[rows, -1] = raw.S[i]
    return h, -raw.d.ravel()


def dense_raw_objective(raw):
    n, nx, nu = raw.n, raw.nx, raw.nu
    w = raw.weights
    blocks = [
        (w.w_tr + w.w_vse) * np.eye(n * nx),
        w.w_vse * np.eye(n * nx),
        w.w_tr * np.eye(n * nu),
    ]
    nz = 2 * n * nx + n * nu + 1
    q_mat = np.zeros((nz, nz))
    q_mat[: n * nx, : n * nx] = blocks[0]
    q_mat[: n * nx, n * nx : 2 * n * nx] = -w.w_vse * np.eye(n * nx)
    q_mat[n * nx : 2 * n * nx, : n * nx] = -w.w_vse * np.eye(n * nx)
    q_mat[n * nx : 2 * n * nx, n * nx : 2 * n * nx] = blocks[1]
    q_mat[2 * n * nx : 2 * n * nx + n * nu, 2 * n * nx : 2 * n * nx + n * nu] = blocks[2]
    q_mat[-1, -1] = w.w_tr_s
    return q_mat


def test_customized_preconditioning_matches_dense_pipeline():
    """Blockwise transforms equal the dense factor-apply-and-normalize path."""
    raw, data = random_toy_raw(9)
    l_mat, l_inv = dense_cholesky(data)
    # the stacked factor reproduces the objective and its inverse is exact
    q_mat = dense_raw_objective(raw)
    np.testing.assert_allclose(l_mat.T @ l_mat, q_mat, atol=1e-10)
    np.testing.assert_allclose(l_mat @ l_inv, np.eye(l_mat.shape[0]), atol=1e-12)
    # preconditioned objective is exactly the identity (condition number 1)
    np.testing.assert_allclose(l_inv.T @ q_mat @ l_inv, np.eye(q_mat.shape[0]), atol=1e-12)

    h_raw, h_rhs_raw = dense_raw_equality(raw)
    h_hat_oracle = h_raw @ l_inv
    row_norms = np.abs(h_hat_oracle).max(axis=1)
    h_hat_oracle /= row_norms[:, None]
    rhs_oracle = h_rhs_raw / row_norms
    h_hat, h_rhs = dense_equality(data)
    np.testing.assert_allclose(h_hat, h_hat_oracle, atol=1e-10)
    np.testing.assert_allclose(h_rhs, rhs_oracle, atol=1e-10)

    # transformed cost: lam * L^{-T} q
    q_raw = np.concatenate([raw.q_x.ravel(), raw.q_xi.ravel(), raw.q_u.ravel(), [raw.q_s]])
    np.testing.assert_allclose(dense_cost(data), data.lam * l_inv.T @ q_raw, atol=1e-12)


def test_sigma_estimates_bracket_dense_spectrum():
    _, data = random_toy_raw(10)
    h_hat, _ = dense_equality(data)
    svals = np.linalg.svd(h_hat, compute_uv=False)
    assert data.sigma >= svals[0] ** 2  # buffered above the true norm
    assert data.sigma / 1.05 == pytest.approx(svals[0] ** 2, rel=1e-3)
    lam_upper = np.sqrt(svals[-1] ** 2 / 2.0)
    assert data.lam <= lam_upper + 1e-9  # buffered below


def test_row_normalization_preserves_solution_set():
    raw, data = random_toy_raw(11)
    h_hat, h_rhs = dense_equality(data)
    h_raw, rhs_raw = dense_raw_equality(raw)
    _, l_inv = dense_cholesky(data)
    rng = np.random.default_rng(66)
    z_hat = rng.standard_normal(h_hat.shape[1])
    res_hat = h_hat @ z_hat - h_rhs
    res_raw = h_raw @ (l_inv @ z_hat) - rhs_raw
    # residuals are row scalings of each other: zero sets coincide
    ratio = res_raw / res_hat
    np.testing.assert_allclose(ratio, ratio[0] * (ratio / ratio[0]), atol=1e-9)
    assert np.all(np.abs(ratio) > 0)


def test_zero_row_rejected():
    from seco.precondition import row_normalize

    # a zeroed dynamics row still normalizes thanks to the identity coupling
    raw, _ = random_toy_raw(12)
    raw.A[0, 3, :] = 0.0
    raw.B_minus[0, 3, :] = 0.0
    raw.B_plus[0, 3, :] = 0.0
    raw.S[0, 3] = 0.0
    assert precondition(raw, SpectralSettings(), np.random.default_rng(0)) is not None

    # fully zero rows are degenerate
    k, nx, nu = 1, 2, 1
    with pytest.raises(DegenerateDynamicsError):
        row_normalize(
            np.zeros((k, nx, nx)),
            np.zeros((k, nx)),
            np.zeros((k, nx, nx)),
            np.zeros((k, nx)),
            np.zeros((k, nx, nu)),
            np.zeros((k, nx, nu)),
            np.zeros((k, nx)),
            np.zeros((k, nx)),
        )


def test_scaled_set_projection_roundtrip():
    _, data = random_toy_raw(13)
    rng = np.random.default_rng(67)
    ch = data.chol
    for k in range(1, data.n):
        hat_set = data.sets_xi[k]
        p = rng.standard_normal(data.nx)
        # hatted projection, unscaled, equals projecting the unscaled point
        # for the box/ball/singleton components (uniform positive scaling)
        orig = hat_set.scaled(1.0 / ch.l_xi)
        np.testing.assert_allclose(
            hat_set.project(ch.l_xi * p) / ch.l_xi, orig.project(p), atol=1e-10
        )
