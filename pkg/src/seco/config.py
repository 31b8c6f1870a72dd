"""Mission configuration: JSON schema, validation, unit conversion.

Config files carry angles in degrees and SI units elsewhere; keys are
suffixed with their unit. Attitude quaternions may be given unnormalized
(they are renormalized at load). Thrust-specific fuel consumption comes from
specific impulses and the reference gravity, matching how such data is
usually tabulated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import VehicleParams
from .engine import SecoConfig
from .pipg import SolverSettings
from .precondition import SpectralSettings
from .subproblem import ConstraintParams, Weights

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid or missing mission-configuration data."""


@dataclass
class Mission:
    params: VehicleParams
    cons: ConstraintParams
    config: SecoConfig
    source: dict


def _section(doc: dict, name: str) -> dict:
    if name not in doc or not isinstance(doc[name], dict):
        raise ConfigError(f"missing config section '{name}'")
    return doc[name]


def _get(section: dict, key: str, path: str, default=None):
    if key in section:
        return section[key]
    if default is not None:
        return default
    raise ConfigError(f"missing config key '{path}.{key}'")


def _num(section: dict, key: str, path: str, default=None) -> float:
    value = _get(section, key, path, default)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"config key '{path}.{key}' must be a number")
    return float(value)


def _vec(section: dict, key: str, path: str, length: int, default=None) -> np.ndarray:
    value = _get(section, key, path, default)
    arr = np.asarray(value, dtype=float)
    if arr.shape != (length,):
        raise ConfigError(f"config key '{path}.{key}' must be a list of {length} numbers")
    return arr


def load_mission(path: str | Path) -> Mission:
    """Parse and validate a mission configuration file."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version (expected {SCHEMA_VERSION})")

    veh = _section(doc, "vehicle")
    g0 = _num(veh, "g0_m_per_s2", "vehicle", 9.81)
    inertia = np.asarray(_get(veh, "inertia_shape_m2", "vehicle"), dtype=float)
    if inertia.shape == (3,):
        inertia = np.diag(inertia)
    if inertia.shape != (3, 3):
        raise ConfigError("vehicle.inertia_shape_m2 must be a 3-list or 3x3 matrix")
    try:
        params = VehicleParams(
            g=_num(veh, "gravity_m_per_s2", "vehicle"),
            alpha_me=1.0 / (_num(veh, "isp_main_engine_s", "vehicle") * g0),
            alpha_rcs=1.0 / (_num(veh, "isp_rcs_s", "vehicle") * g0),
            l_cm=_num(veh, "moment_arm_m", "vehicle"),
            inertia=inertia,
            m_i=_num(veh, "initial_mass_kg", "vehicle"),
            m_f=_num(veh, "final_mass_kg", "vehicle"),
        )
    except ValueError as exc:
        raise ConfigError(f"vehicle: {exc}") from exc

    con = _section(doc, "constraints")
    bnd = _section(doc, "boundary")
    deg = np.deg2rad
    try:
        cons = ConstraintParams(
            T_min=_num(con, "thrust_min_n", "constraints"),
            T_max=_num(con, "thrust_max_n", "constraints"),
            Tdot_max=_num(con, "thrust_rate_max_n_per_s", "constraints"),
            delta_max=deg(_num(con, "gimbal_max_deg", "constraints")),
            deltadot_max=deg(_num(con, "gimbal_rate_max_deg_per_s", "constraints")),
            phidot_max=deg(_num(con, "azimuth_rate_max_deg_per_s", "constraints")),
            tau_max=_num(con, "torque_max_nm", "constraints"),
            theta_max=deg(_num(con, "tilt_max_deg", "constraints")),
            theta_stc_max=deg(_num(con, "tilt_window_max_deg", "constraints")),
            omega_max=deg(_num(con, "rate_max_deg_per_s", "constraints")),
            omega_stc_max=deg(_num(con, "rate_window_max_deg_per_s", "constraints")),
            v_max=_num(con, "speed_max_m_per_s", "constraints"),
            v_stc_max=_num(con, "speed_window_max_m_per_s", "constraints"),
            h_min=_num(con, "altitude_min_m", "constraints"),
            rho_min=_num(con, "trigger_min_m", "constraints"),
            rho_max=_num(con, "trigger_max_m", "constraints"),
            mu_stc_max=deg(_num(con, "los_window_max_deg", "constraints")),
            p_B=_vec(con, "sensor_direction_body", "constraints", 3),
            m_i=params.m_i,
            m_f=params.m_f,
            r_I_i=_vec(bnd, "position_initial_m", "boundary", 3),
            r_I_f=_vec(bnd, "position_final_m", "boundary", 3),
            v_I_i=_vec(bnd, "velocity_initial_m_per_s", "boundary", 3),
            v_z_I_f=_num(bnd, "vertical_velocity_final_m_per_s", "boundary"),
            q_i=_vec(bnd, "attitude_initial", "boundary", 4),
            q_f=_vec(bnd, "attitude_final", "boundary", 4),
            omega_B_i=deg(_vec(bnd, "rate_initial_deg_per_s", "boundary", 3, [0.0, 0.0, 0.0])),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"constraints: {exc}") from exc

    sec = _section(doc, "seco")
    wts = sec.get("weights", {})
    weights = Weights(
        w_m=_num(wts, "fuel", "seco.weights", 1.0),
        w_tr=_num(wts, "trust_region", "seco.weights", 0.5),
        w_tr_s=_num(wts, "trust_region_tof", "seco.weights", 0.1),
        w_vse=_num(wts, "virtual_state", "seco.weights", 2.0e4),
    )
    sol = doc.get("solver", {})
    lam = sol.get("lambda", "auto")
    if lam == "auto":
        lam_override = None
    elif isinstance(lam, (int, float)) and not isinstance(lam, bool):
        lam_override = float(lam)
    else:
        raise ConfigError("solver.lambda must be 'auto' or a number")
    solver = SolverSettings(
        omega=_num(sol, "omega", "solver", 1.0),
        rho=_num(sol, "rho", "solver", 1.6),
        eps_abs=_num(sol, "eps_abs", "solver", 1e-8),
        eps_rel=_num(sol, "eps_rel", "solver", 1e-6),
        j_check=int(_num(sol, "check_every", "solver", 10)),
        j_max=int(_num(sol, "max_iterations", "solver", 20000)),
    )
    spec_sec = doc.get("spectral", {})
    spectral = SpectralSettings(
        eps_abs=_num(spec_sec, "eps_abs", "spectral", 1e-9),
        eps_rel=_num(spec_sec, "eps_rel", "spectral", 1e-6),
        eps_buff=_num(spec_sec, "buffer", "spectral", 0.05),
        j_max=int(_num(spec_sec, "max_iterations", "spectral", 500)),
    )
    tof_max = sec.get("tof_max_s")
    config = SecoConfig(
        n_nodes=int(_num(sec, "nodes", "seco")),
        weights=weights,
        max_iterations=int(_num(sec, "max_iterations", "seco", 5)),
        fixed_iterations=bool(sec.get("fixed_iterations", False)),
        pos_tol=_num(sec, "pos_tolerance_m", "seco", 10.0),
        vel_tol=_num(sec, "vel_tolerance_m_per_s", "seco", 0.25),
        tof_guess=_num(sec, "tof_guess_s", "seco"),
        n_substeps=int(_num(sec, "substeps", "seco", 20)),
        solver=solver,
        spectral=spectral,
        lam_override=lam_override,
        backend=str(sol.get("backend", "auto")),
        on_jmax=str(sol.get("on_cap", "continue")),
        s_min=_num(sec, "tof_min_s", "seco", 1e-3),
        s_max=float(tof_max) if tof_max is not None else float("inf"),
        seed=int(_num(doc, "seed", "", 0)),
    )
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(f"seco: {exc}") from exc
    return Mission(params=params, cons=cons, config=config, source=doc)
