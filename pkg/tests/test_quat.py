import numpy as np
import pytest

from seco import quat


def random_unit_quat(rng):
    return quat.quat_normalize(rng.standard_normal(4))


def random_unit_dq(rng):
    q = random_unit_quat(rng)
    r = 100.0 * rng.standard_normal(3)
    return quat.dq_from_pose(q, r)


def oracle_left_op(a):
    """Dense left-multiplication matrix written out entry by entry."""
    x, y, z, w = a
    return np.array(
        [
            [w, -z, y, x],
            [z, w, -x, y],
            [-y, x, w, z],
            [-x, -y, -z, w],
        ]
    )


def oracle_right_op(b):
    x, y, z, w = b
    return np.array(
        [
            [w, z, -y, x],
            [-z, w, x, y],
            [y, -x, w, z],
            [-x, -y, -z, w],
        ]
    )


def oracle_dq_left_op(a):
    m = np.zeros((8, 8))
    m[:4, :4] = oracle_left_op(a[:4])
    m[4:, 4:] = oracle_left_op(a[:4])
    m[4:, :4] = oracle_left_op(a[4:])
    return m


def test_mul_identity():
    rng = np.random.default_rng(0)
    a = random_unit_quat(rng)
    np.testing.assert_allclose(quat.quat_mul(a, quat.quat_identity()), a, atol=1e-15)
    np.testing.assert_allclose(quat.quat_mul(quat.quat_identity(), a), a, atol=1e-15)


def test_mul_two_quarter_turns_about_z():
    s = np.sin(np.pi / 4)
    qz90 = np.array([0.0, 0.0, s, s])
    out = quat.quat_mul(qz90, qz90)
    np.testing.assert_allclose(out, [0.0, 0.0, 1.0, 0.0], atol=1e-15)


def test_mul_matches_both_operator_matrices():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        a = random_unit_quat(rng)
        b = random_unit_quat(rng)
        ab = quat.quat_mul(a, b)
        np.testing.assert_allclose(ab, oracle_left_op(a) @ b, atol=1e-12)
        np.testing.assert_allclose(ab, oracle_right_op(b) @ a, atol=1e-12)
        np.testing.assert_allclose(quat.quat_op_left(a), oracle_left_op(a), atol=1e-15)
        np.testing.assert_allclose(quat.quat_op_right(b), oracle_right_op(b), atol=1e-15)


def test_unit_closure_and_conj_reversal():
    rng = np.random.default_rng(2)
    for _ in range(200):
        a = random_unit_quat(rng)
        b = random_unit_quat(rng)
        ab = quat.quat_mul(a, b)
        assert abs(np.linalg.norm(ab) - 1.0) < 1e-10
        np.testing.assert_allclose(
            quat.quat_conj(ab),
            quat.quat_mul(quat.quat_conj(b), quat.quat_conj(a)),
            atol=1e-12,
        )


def test_conj_involution_and_cross():
    rng = np.random.default_rng(3)
    a = rng.standard_normal(4)
    b = rng.standard_normal(4)
    np.testing.assert_allclose(quat.quat_conj(quat.quat_conj(a)), a)
    assert quat.quat_cross(a, b)[3] == 0.0


def test_skew_cross_identity():
    np.testing.assert_allclose(quat.skew([1, 0, 0]) @ [0, 1, 0], [0, 0, 1])
    rng = np.random.default_rng(4)
    v = rng.standard_normal(3)
    u = rng.standard_normal(3)
    np.testing.assert_allclose(quat.skew(v) @ u, np.cross(v, u), atol=1e-14)


def test_dq_mul_identity_and_closure():
    rng = np.random.default_rng(5)
    a = random_unit_dq(rng)
    np.testing.assert_allclose(quat.dq_mul(a, quat.dq_identity()), a, atol=1e-12)
    b = random_unit_dq(rng)
    ab = quat.dq_mul(a, b)
    # unit dual quaternion invariants: unit real part, orthogonal dual part
    assert abs(np.linalg.norm(ab[:4]) - 1.0) < 1e-10
    assert abs(ab[:4] @ ab[4:]) < 1e-10


def test_dq_mul_matches_operator_matrix():
    rng = np.random.default_rng(6)
    for _ in range(500):
        a = rng.standard_normal(8)
        b = rng.standard_normal(8)
        np.testing.assert_allclose(quat.dq_mul(a, b), oracle_dq_left_op(a) @ b, atol=1e-12)
        np.testing.assert_allclose(quat.dq_op_left(a), oracle_dq_left_op(a), atol=1e-15)
        np.testing.assert_allclose(quat.dq_op_right(b) @ a, quat.dq_mul(a, b), atol=1e-12)


def test_dq_conj_reverses_products():
    rng = np.random.default_rng(7)
    a = random_unit_dq(rng)
    b = random_unit_dq(rng)
    np.testing.assert_allclose(
        quat.dq_conj(quat.dq_mul(a, b)),
        quat.dq_mul(quat.dq_conj(b), quat.dq_conj(a)),
        atol=1e-12,
    )


def test_dq_from_pose_simple():
    dq = quat.dq_from_pose(quat.quat_identity(), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(dq[4:], [0.5, 0.0, 0.0, 0.0], atol=1e-15)


def test_dq_from_pose_lunar_initial_condition():
    q = quat.quat_normalize([-0.15, 0.3, -1.0, 1.0])
    dq = quat.dq_from_pose(q, [3000.0, 600.0, 3000.0])
    assert abs(np.linalg.norm(dq[:4]) - 1.0) < 1e-12
    assert abs(dq[:4] @ dq[4:]) < 1e-10


def test_dq_from_pose_rejects_non_unit():
    with pytest.raises(ValueError):
        quat.dq_from_pose([0.0, 0.0, 0.0, 1.001], [0.0, 0.0, 0.0])


def test_position_roundtrip():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        q = random_unit_quat(rng)
        r = 5000.0 * rng.standard_normal(3)
        dq = quat.dq_from_pose(q, r)
        np.testing.assert_allclose(quat.extract_position(dq), r, atol=1e-10 * max(1.0, np.abs(r).max()))
        # norm of twice the dual part equals the position norm
        assert abs(2.0 * np.linalg.norm(dq[4:]) - np.linalg.norm(r)) < 1e-9


def test_extract_position_identity_attitude():
    dq = np.array([0.0, 0.0, 0.0, 1.0, 0.5, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(quat.extract_position(dq), [1.0, 0.0, 0.0], atol=1e-15)


def test_rotate_to_body_basics():
    v = np.array([3.0, -2.0, 7.0])
    np.testing.assert_allclose(quat.rotate_to_body(quat.quat_identity(), v), v, atol=1e-15)
    roll180 = np.array([1.0, 0.0, 0.0, 0.0])  # 180 deg about x
    g = 9.81
    np.testing.assert_allclose(quat.rotate_to_body(roll180, [0, 0, -g]), [0, 0, g], atol=1e-12)


def test_rotation_isometry_and_roundtrip():
    rng = np.random.default_rng(9)
    for _ in range(300):
        q = random_unit_quat(rng)
        v = rng.standard_normal(3) * 40.0
        vb = quat.rotate_to_body(q, v)
        assert abs(np.linalg.norm(vb) - np.linalg.norm(v)) < 1e-10
        np.testing.assert_allclose(quat.rotate_to_inertial(q, vb), v, atol=1e-10)


def test_dq_normalize_restores_invariants():
    rng = np.random.default_rng(10)
    dq = random_unit_dq(rng) + 1e-5 * rng.standard_normal(8)
    out = quat.dq_normalize(dq)
    assert abs(np.linalg.norm(out[:4]) - 1.0) < 1e-14
    assert abs(out[:4] @ out[4:]) < 1e-12


def test_lift_dual_velocity_zero_slots():
    out = quat.lift_dual_velocity([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    np.testing.assert_allclose(out, [1, 2, 3, 0, 4, 5, 6, 0])


def test_sclerp_endpoints_and_constant():
    rng = np.random.default_rng(11)
    a = random_unit_dq(rng)
    b = random_unit_dq(rng)
    np.testing.assert_allclose(quat.sclerp(a, b, 0.0), a, atol=1e-12)
    # endpoint may differ by overall sign (same pose)
    end = quat.sclerp(a, b, 1.0)
    assert min(np.abs(end - b).max(), np.abs(end + b).max()) < 1e-10
    for t in (0.0, 0.3, 1.0):
        np.testing.assert_allclose(quat.sclerp(a, a, t), a, atol=1e-12)


def test_sclerp_pure_translation_is_linear():
    r0 = np.array([10.0, -5.0, 2.0])
    r1 = np.array([-4.0, 8.0, 30.0])
    a = quat.dq_from_pose(quat.quat_identity(), r0)
    b = quat.dq_from_pose(quat.quat_identity(), r1)
    for t in np.linspace(0.0, 1.0, 7):
        p = quat.extract_position(quat.sclerp(a, b, t))
        np.testing.assert_allclose(p, (1 - t) * r0 + t * r1, atol=1e-10)


def test_sclerp_stays_unit_along_path():
    rng = np.random.default_rng(12)
    a = random_unit_dq(rng)
    b = random_unit_dq(rng)
    for t in np.linspace(0.0, 1.0, 11):
        dq = quat.sclerp(a, b, t)
        assert abs(np.linalg.norm(dq[:4]) - 1.0) < 1e-12
        assert abs(dq[:4] @ dq[4:]) < 1e-10
