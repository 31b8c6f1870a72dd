import numpy as np
import pytest
import scipy.linalg

from seco import dynamics, quat
from seco.dynamics import (
    IDX_MASS,
    SL_DQ,
    SL_OMEGA,
    SL_VEL,
    DiscreteDynamics,
    SingularMassError,
    VehicleParams,
    dilated_eom,
    discretize,
    discretize_ltv,
    eom,
    foh,
    jacobians,
    pack_state,
    single_shot,
)

from conftest import random_control, random_flight_state


def hover_state_control(params):
    m = 1200.0
    dq = quat.dq_from_pose(quat.quat_identity(), [0.0, 0.0, 500.0])
    x = pack_state(m, dq, np.zeros(3), np.zeros(3))
    u = np.array([m * params.g, 0.0, 0.0, 0.0, 0.0, 0.0])
    return x, u


def test_mass_depletion_rate(lunar_params):
    x, u = hover_state_control(lunar_params)
    u = u.copy()
    u[0] = 3000.0
    mdot = eom(x, u, lunar_params)[IDX_MASS]
    assert abs(mdot - (-3000.0 / 2943.0)) < 1e-12


def test_hover_is_translational_and_rotational_equilibrium(lunar_params):
    x, u = hover_state_control(lunar_params)
    f = eom(x, u, lunar_params)
    np.testing.assert_allclose(f[SL_OMEGA], 0.0, atol=1e-12)
    np.testing.assert_allclose(f[SL_VEL], 0.0, atol=1e-12)
    assert f[IDX_MASS] < 0.0  # engine still burns fuel at hover


def test_eom_rejects_nonpositive_mass(lunar_params):
    x, u = hover_state_control(lunar_params)
    x = x.copy()
    x[IDX_MASS] = 0.0
    with pytest.raises(SingularMassError):
        eom(x, u, lunar_params)


def test_rotational_balance_against_dense_assembly(lunar_params):
    """Independent 6x6 assembly of the velocity dynamics via explicit block inverse."""
    rng = np.random.default_rng(20)
    p = lunar_params
    for _ in range(50):
        x = random_flight_state(rng, p)
        u = random_control(rng)
        m = x[IDX_MASS]
        omega = x[SL_OMEGA]
        v = x[SL_VEL]
        q = x[SL_DQ][:4]
        tvec = dynamics.thrust_vector(u[0], u[1], u[2])
        g_body = quat.rotate_to_body(q, p.g_inertial)
        # dense momentum balance: d/dt [m v; m J w] = cross terms + wrench
        j_full = m * p.inertia
        wrench = np.concatenate([tvec + m * g_body, np.cross(p.lever, tvec) + u[3:6]])
        cross = np.concatenate([-m * np.cross(omega, v), -np.cross(omega, j_full @ omega)])
        big = np.zeros((6, 6))
        big[:3, :3] = m * np.eye(3)
        big[3:, 3:] = j_full
        rates = np.linalg.solve(big, wrench + cross)  # oracle-side solve only
        f = eom(x, u, p)
        np.testing.assert_allclose(f[SL_VEL], rates[:3], rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(f[SL_OMEGA], rates[3:], rtol=1e-10, atol=1e-12)


def test_dilated_eom_scales_linearly(lunar_params):
    rng = np.random.default_rng(21)
    x = random_flight_state(rng, lunar_params)
    u = random_control(rng)
    f1 = dilated_eom(x, u, 1.0, lunar_params)
    np.testing.assert_allclose(f1, eom(x, u, lunar_params))
    np.testing.assert_allclose(dilated_eom(x, u, 2.0, lunar_params), 2.0 * f1)
    with pytest.raises(ValueError):
        dilated_eom(x, u, -1.0, lunar_params)


def finite_difference_jacobians(x, u, s, params):
    """Central-difference oracle for the dilated dynamics Jacobians."""
    nx, nu = x.size, u.size
    a = np.zeros((nx, nx))
    b = np.zeros((nx, nu))
    for i in range(nx):
        h = 1e-6 * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        a[:, i] = (dilated_eom(xp, u, s, params) - dilated_eom(xm, u, s, params)) / (2 * h)
    for i in range(nu):
        h = 1e-6 * max(1.0, abs(u[i]))
        up, um = u.copy(), u.copy()
        up[i] += h
        um[i] -= h
        b[:, i] = (dilated_eom(x, up, s, params) - dilated_eom(x, um, s, params)) / (2 * h)
    return a, b


def assert_within_mixed_tol(actual, expected, abs_floor=1e-6, rel=1e-4):
    tol = np.maximum(abs_floor, rel * np.abs(expected))
    assert np.all(np.abs(actual - expected) <= tol), (
        f"max violation {np.max(np.abs(actual - expected) - tol):.3e}"
    )


def test_jacobians_match_finite_differences(lunar_params):
    rng = np.random.default_rng(22)
    for _ in range(100):
        x = random_flight_state(rng, lunar_params)
        u = random_control(rng)
        s = rng.uniform(20.0, 150.0)
        a, b, s_col = jacobians(x, u, s, lunar_params)
        a_fd, b_fd = finite_difference_jacobians(x, u, s, lunar_params)
        assert_within_mixed_tol(a, a_fd)
        assert_within_mixed_tol(b, b_fd)
        # dilation column equals the undilated dynamics
        np.testing.assert_allclose(s_col, dilated_eom(x, u, s, lunar_params) / s, atol=1e-12)
        # mass depletion has no state dependence
        np.testing.assert_allclose(a[IDX_MASS, :], 0.0, atol=1e-15)


def test_jacobians_batched_match_loop(lunar_params):
    rng = np.random.default_rng(23)
    xs = np.stack([random_flight_state(rng, lunar_params) for _ in range(5)])
    us = np.stack([random_control(rng) for _ in range(5)])
    a_b, b_b, s_b = jacobians(xs, us, 30.0, lunar_params)
    for i in range(5):
        a, b, s_col = jacobians(xs[i], us[i], 30.0, lunar_params)
        np.testing.assert_allclose(a_b[i], a, atol=1e-14)
        np.testing.assert_allclose(b_b[i], b, atol=1e-14)
        np.testing.assert_allclose(s_b[i], s_col, atol=1e-14)


def test_foh_basics():
    u0 = np.array([1.0, 2.0, 3.0])
    u1 = np.array([3.0, 2.0, 1.0])
    np.testing.assert_allclose(foh(u0, u1, 0.5, 0.0, 1.0), [2.0, 2.0, 2.0])
    np.testing.assert_allclose(foh(u0, u1, 0.0, 0.0, 1.0), u0)
    np.testing.assert_allclose(foh(u0, u0, 0.3, 0.0, 1.0), u0)
    with pytest.raises(ValueError):
        foh(u0, u1, 1.5, 0.0, 1.0)


def double_integrator_fn(x, u):
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    b = np.array([[0.0], [1.0]])
    f = x @ a.T + u @ b.T
    batch = x.shape[:-1]
    return f, np.broadcast_to(a, batch + (2, 2)), np.broadcast_to(b, batch + (2, 1))


def expm_oracle_blocks(xbar, ubar, sbar, k):
    """Closed-form FOH discretization of the double integrator via expm."""
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    b = np.array([[0.0], [1.0]])
    n = xbar.shape[0]
    dtau = 1.0 / (n - 1)
    # LTI lift with a control ramp: states [x, u, udot]
    m = np.zeros((4, 4))
    m[:2, :2] = sbar * a
    m[:2, 2:3] = sbar * b
    m[2, 3] = 1.0
    e = scipy.linalg.expm(m * dtau)
    a_d = e[:2, :2]
    b_minus = e[:2, 2:3] - e[:2, 3:4] / dtau
    b_plus = e[:2, 3:4] / dtau
    # dilation column: augment the sensitivity alongside the reference flow
    m2 = np.zeros((6, 6))
    m2[:2, :2] = sbar * a
    m2[:2, 2:3] = sbar * b
    m2[2, 3] = 1.0
    m2[4:, 4:] = sbar * a
    m2[4:, :2] = a
    m2[4:, 2:3] = b
    e2 = scipy.linalg.expm(m2 * dtau)
    z0 = np.concatenate([xbar[k], [ubar[k, 0]], [(ubar[k + 1, 0] - ubar[k, 0]) / dtau], [0.0, 0.0]])
    zf = e2 @ z0
    s_d = zf[4:]
    x_prop = zf[:2]
    return a_d, b_minus, b_plus, s_d, x_prop


def test_double_integrator_matches_matrix_exponential():
    rng = np.random.default_rng(24)
    n = 5
    xbar = rng.standard_normal((n, 2))
    ubar = rng.standard_normal((n, 1))
    sbar = 3.7
    disc = discretize_ltv(double_integrator_fn, xbar, ubar, sbar, n_substeps=20)
    for k in range(n - 1):
        a_d, bm, bp, s_d, x_prop = expm_oracle_blocks(xbar, ubar, sbar, k)
        np.testing.assert_allclose(disc.A[k], a_d, atol=1e-9)
        np.testing.assert_allclose(disc.B_minus[k], bm, atol=1e-9)
        np.testing.assert_allclose(disc.B_plus[k], bp, atol=1e-9)
        np.testing.assert_allclose(disc.S[k], s_d, atol=1e-9)
        np.testing.assert_allclose(disc.d[k], x_prop - xbar[k + 1], atol=1e-9)


def test_zero_duration_limit():
    # at s = 0 with a constant reference: identity transition, no control or
    # stitching effect; the dilation column tends to f * (interval width)
    n = 4
    xbar = np.tile([1.0, -2.0], (n, 1))
    ubar = np.tile([0.5], (n, 1))
    disc = discretize_ltv(double_integrator_fn, xbar, ubar, 0.0, n_substeps=8)
    f0 = double_integrator_fn(xbar[0], ubar[0])[0]
    for k in range(n - 1):
        np.testing.assert_allclose(disc.A[k], np.eye(2), atol=1e-12)
        np.testing.assert_allclose(disc.B_minus[k], 0.0, atol=1e-12)
        np.testing.assert_allclose(disc.B_plus[k], 0.0, atol=1e-12)
        np.testing.assert_allclose(disc.d[k], 0.0, atol=1e-12)
        np.testing.assert_allclose(disc.S[k], f0 / (n - 1), atol=1e-12)


def reference_trajectory(params, rng, n=8):
    """A short powered-descent-like reference for discretization checks."""
    q = quat.quat_normalize([-0.15, 0.3, -1.0, 1.0])
    x1 = pack_state(
        params.m_i,
        quat.dq_from_pose(q, [3000.0, 600.0, 3000.0]),
        np.zeros(3),
        quat.rotate_to_body(q, [-60.0, 30.0, -30.0]),
    )
    u = np.tile([1800.0, 0.01, 0.3, 2.0, -1.0, 0.5], (n, 1))
    u += rng.uniform(-1.0, 1.0, u.shape) * np.array([50.0, 0.001, 0.01, 0.5, 0.5, 0.5])
    s = 60.0
    x = single_shot(x1, u, s, params, n_substeps=20)
    return x, u, s


def test_stitching_identity_reproduces_propagation(lunar_params):
    """Running the LTV recurrence with zero deviations lands on x_prop."""
    rng = np.random.default_rng(25)
    x, u, s = reference_trajectory(lunar_params, rng)
    disc = discretize(x, u, s, lunar_params, n_substeps=15)
    n = x.shape[0]
    for k in range(n - 1):
        x_next = x[k + 1] + disc.d[k]  # zero-deviation recurrence
        np.testing.assert_allclose(x_next, disc.x_prop[k], atol=1e-10)


def test_discretize_first_interval_matches_single_shot(lunar_params):
    rng = np.random.default_rng(26)
    x, u, s = reference_trajectory(lunar_params, rng, n=5)
    disc = discretize(x, u, s, lunar_params, n_substeps=20)
    prop = single_shot(x[0], u, s, lunar_params, n_substeps=20)
    np.testing.assert_allclose(disc.x_prop[0], prop[1], atol=1e-9)


def test_single_shot_hover_holds_position(lunar_params):
    p = lunar_params
    x0, _ = hover_state_control(p)
    n = 6
    s = 4.0
    # constant weight-canceling thrust; mass depletion makes this exact only
    # at t = 0, so the check allows centimeter-level drift
    u = np.zeros((n, 6))
    u[:, 0] = x0[IDX_MASS] * p.g
    out = single_shot(x0, u, s, p, n_substeps=30)
    pos = quat.extract_position(out[:, SL_DQ])
    np.testing.assert_allclose(pos, np.broadcast_to(pos[0], pos.shape), atol=0.1)


def test_single_shot_self_convergence(lunar_params):
    rng = np.random.default_rng(27)
    x, u, s = reference_trajectory(lunar_params, rng, n=6)
    coarse = single_shot(x[0], u, s, lunar_params, n_substeps=100)
    fine = single_shot(x[0], u, s, lunar_params, n_substeps=200)
    rel = np.abs(coarse[-1] - fine[-1]) / np.maximum(1.0, np.abs(fine[-1]))
    assert np.max(rel) < 1e-8


def test_single_shot_unit_norm_drift(lunar_params):
    rng = np.random.default_rng(28)
    x, u, s = reference_trajectory(lunar_params, rng, n=10)
    out = single_shot(x[0], u, s, lunar_params, n_substeps=10)
    norms = np.linalg.norm(out[:, SL_DQ][:, :4], axis=-1)
    assert np.max(np.abs(norms - 1.0)) < 1e-7


def test_discretize_requires_two_nodes(lunar_params):
    with pytest.raises(ValueError):
        discretize(np.zeros((1, 15)), np.zeros((1, 6)), 1.0, lunar_params)
