import numpy as np
import pytest

from seco import quat
from seco.dynamics import VehicleParams, pack_state
from seco.subproblem import ConstraintParams


G0 = 9.81


@pytest.fixture
def lunar_params() -> VehicleParams:
    """Vehicle parameters for the bundled lunar benchmark scenario."""
    return VehicleParams(
        g=1.625,
        alpha_me=1.0 / (300.0 * G0),
        alpha_rcs=1.0 / (200.0 * G0),
        l_cm=1.0,
        inertia=np.diag([4.2, 4.2, 0.6]),
        m_i=1500.0,
        m_f=750.0,
    )


@pytest.fixture
def lunar_constraints() -> ConstraintParams:
    """Constraint bounds and boundary data for the lunar benchmark scenario."""
    return ConstraintParams(
        T_min=600.0,
        T_max=3000.0,
        Tdot_max=0.75 * (3000.0 - 600.0),
        delta_max=np.deg2rad(5.0),
        deltadot_max=np.deg2rad(5.0),
        phidot_max=np.deg2rad(5.0),
        tau_max=50.0,
        theta_max=np.deg2rad(90.0),
        theta_stc_max=np.deg2rad(20.0),
        omega_max=np.deg2rad(5.0),
        omega_stc_max=np.deg2rad(1.0),
        v_max=90.0,
        v_stc_max=30.0,
        h_min=100.0,
        rho_min=500.0,
        rho_max=1250.0,
        mu_stc_max=np.deg2rad(2.0),
        p_B=[0.5, 0.0, -np.sqrt(3.0) / 2.0],
        m_i=1500.0,
        m_f=750.0,
        r_I_i=[3000.0, 600.0, 3000.0],
        r_I_f=[0.0, 0.0, 100.0],
        v_I_i=[-60.0, 30.0, -30.0],
        v_z_I_f=-2.0,
        q_i=[-0.15, 0.3, -1.0, 1.0],
        q_f=[0.0, 0.0, -1.25, 1.0],
        omega_B_i=[0.0, 0.0, 0.0],
    )


def random_flight_state(rng, params: VehicleParams) -> np.ndarray:
    """A physically plausible random state for Jacobian/propagation checks."""
    m = rng.uniform(params.m_f, params.m_i)
    q = quat.quat_normalize(rng.standard_normal(4))
    r = rng.uniform(-3000.0, 3000.0, 3) + np.array([0.0, 0.0, 3500.0])
    dq = quat.dq_from_pose(q, r)
    omega = rng.uniform(-0.1, 0.1, 3)
    v = rng.uniform(-80.0, 80.0, 3)
    return pack_state(m, dq, omega, v)


def random_control(rng) -> np.ndarray:
    return np.array(
        [
            rng.uniform(600.0, 3000.0),
            rng.uniform(0.0, np.deg2rad(5.0)),
            rng.uniform(0.0, 2.0 * np.pi),
            *rng.uniform(-50.0, 50.0, 3),
        ]
    )
