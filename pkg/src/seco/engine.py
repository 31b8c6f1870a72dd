"""Sequential conic optimization loop for the powered-descent problem.

Each iteration linearizes and exactly discretizes the dynamics about the
reference trajectory, classifies every path constraint into a closed-form
projection set (with trigger values recomputed from the reference), applies
the hypersphere preconditioner, and solves the resulting subproblem with the
warm-started first-order solver. The reference is updated with the full step
and convergence is declared from the open-loop propagation errors at the
terminal node.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .dynamics import (
    NU,
    NX,
    SL_DQ,
    SL_VEL,
    PropagationError,
    VehicleParams,
    discretize,
    pack_state,
    single_shot,
)
from .pipg import SolverSettings, SolverWorkspace, pipg_custom
from .precondition import SpectralSettings, precondition
from .sets import Box, ProductSet, Singleton
from .subproblem import (
    ConstraintParams,
    InfeasibleReferenceError,
    Weights,
    assemble,
    boundary_sets,
    combined_control_sets,
    combined_state_sets,
    trigger,
)

logger = logging.getLogger(__name__)


class SolverAbortError(RuntimeError):
    """The subproblem solver hit its iteration cap with abort-on-cap set."""


@dataclass
class SecoConfig:
    """Outer-loop settings: horizon size, weights, tolerances, solver knobs."""

    n_nodes: int = 15
    weights: Weights = field(default_factory=Weights)
    max_iterations: int = 5
    fixed_iterations: bool = False  # skip the early convergence exit
    pos_tol: float = 10.0
    vel_tol: float = 0.25
    tof_guess: float = 100.0
    n_substeps: int = 20
    solver: SolverSettings = field(default_factory=SolverSettings)
    spectral: SpectralSettings = field(default_factory=SpectralSettings)
    lam_override: float | None = None
    backend: str = "auto"
    on_jmax: str = "continue"  # or "abort"
    s_min: float = 1e-3
    s_max: float = float("inf")
    seed: int = 0

    def validate(self):
        if self.n_nodes < 2:
            raise ValueError("need at least two temporal nodes")
        if self.tof_guess <= 0.0:
            raise ValueError("time-of-flight guess must be positive")
        if self.max_iterations < 1 or self.n_substeps < 1:
            raise ValueError("iteration and substep counts must be positive")
        if self.on_jmax not in ("continue", "abort"):
            raise ValueError("on_jmax must be 'continue' or 'abort'")
        self.weights.validate()
        self.solver.validate()


@dataclass
class Trajectory:
    """Node states, controls, dilation factor and the virtual-state copy."""

    x: np.ndarray  # (N, 15)
    u: np.ndarray  # (N, 6)
    s: float
    xi: np.ndarray  # (N, 15)

    def copy(self) -> "Trajectory":
        return Trajectory(self.x.copy(), self.u.copy(), self.s, self.xi.copy())


@dataclass
class IterationStats:
    pipg_iterations: int
    pipg_converged: bool
    dyn_residual: float
    trust_radius: float
    virtual_gap: float
    pos_err: float
    vel_err: float
    t_discretize: float
    t_parse: float
    t_solve: float


@dataclass
class SecoReport:
    iterations: list
    converged: bool
    pos_err: float
    vel_err: float
    backend: str
    failure: str | None = None
    final_dual: np.ndarray | None = None  # warm-start payload for a re-solve

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)

    def stage_totals(self) -> dict:
        return {
            "discretize": sum(i.t_discretize for i in self.iterations),
            "parse": sum(i.t_parse for i in self.iterations),
            "solve": sum(i.t_solve for i in self.iterations),
        }


@dataclass
class Ranges:
    """Per-group affine scaling ranges mapping values to order-one numbers."""

    state_lo: np.ndarray
    state_hi: np.ndarray
    control_lo: np.ndarray
    control_hi: np.ndarray
    s_lo: float
    s_hi: float

    def validate(self):
        widths = np.concatenate(
            [
                self.state_hi - self.state_lo,
                self.control_hi - self.control_lo,
                [self.s_hi - self.s_lo],
            ]
        )
        if np.any(widths <= 0.0):
            raise ValueError("scaling ranges must have positive width")


def default_ranges(cons: ConstraintParams, tof_guess: float) -> Ranges:
    """Zero-based scaling ranges derived from boundary data and bounds."""
    r_scale = max(np.linalg.norm(cons.r_I_i), 1.0)
    state_hi = np.ones(NX)
    state_hi[0] = cons.m_i
    state_hi[1:5] = 1.0  # attitude quaternion components are order one
    state_hi[5:9] = 0.5 * r_scale  # dual part carries half the position
    state_hi[9:12] = cons.omega_max
    state_hi[12:15] = cons.v_max
    control_hi = np.array(
        [cons.T_max, cons.delta_max, 2.0 * np.pi, cons.tau_max, cons.tau_max, cons.tau_max]
    )
    return Ranges(
        state_lo=np.zeros(NX),
        state_hi=state_hi,
        control_lo=np.zeros(NU),
        control_hi=control_hi,
        s_lo=0.0,
        s_hi=tof_guess,
    )


def prescale(traj: Trajectory, ranges: Ranges) -> Trajectory:
    """Map a trajectory into the scaled frame using the affine range maps."""
    ranges.validate()
    sw = ranges.state_hi - ranges.state_lo
    cw = ranges.control_hi - ranges.control_lo
    return Trajectory(
        x=(traj.x - ranges.state_lo) / sw,
        u=(traj.u - ranges.control_lo) / cw,
        s=(traj.s - ranges.s_lo) / (ranges.s_hi - ranges.s_lo),
        xi=(traj.xi - ranges.state_lo) / sw,
    )


def unscale(traj: Trajectory, ranges: Ranges) -> Trajectory:
    """Inverse of :func:`prescale`."""
    ranges.validate()
    sw = ranges.state_hi - ranges.state_lo
    cw = ranges.control_hi - ranges.control_lo
    return Trajectory(
        x=traj.x * sw + ranges.state_lo,
        u=traj.u * cw + ranges.control_lo,
        s=traj.s * (ranges.s_hi - ranges.s_lo) + ranges.s_lo,
        xi=traj.xi * sw + ranges.state_lo,
    )


def initial_guess(params: VehicleParams, cons: ConstraintParams, config: SecoConfig) -> Trajectory:
    """Screw-interpolated pose guess with weight-canceling saturated thrust.

    Mass and inertial velocity interpolate linearly between their boundary
    values; gimbal angles, body rates and torques start at zero.
    """
    n = config.n_nodes
    taus = np.linspace(0.0, 1.0, n)
    dq_i = quat.dq_from_pose(cons.q_i, cons.r_I_i)
    dq_f = quat.dq_from_pose(cons.q_f, cons.r_I_f)
    x = np.zeros((n, NX))
    u = np.zeros((n, NU))
    v_f = np.array([0.0, 0.0, cons.v_z_I_f])
    for k, t in enumerate(taus):
        dq = quat.sclerp(dq_i, dq_f, t)
        m = (1.0 - t) * cons.m_i + t * cons.m_f
        v_inertial = (1.0 - t) * cons.v_I_i + t * v_f
        v_body = quat.rotate_to_body(dq[:4], v_inertial)
        x[k] = pack_state(m, dq, np.zeros(3), v_body)
        u[k, 0] = np.clip(m * params.g, cons.T_min, cons.T_max)
    return Trajectory(x=x, u=u, s=float(config.tof_guess), xi=x.copy())


def position_norms(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(quat.extract_position(x[:, SL_DQ]), axis=-1)


def trigger_values(x: np.ndarray, cons: ConstraintParams) -> np.ndarray:
    norms = position_norms(x)
    return np.array([trigger(nk, cons.rho_min, cons.rho_max) for nk in norms])


def convergence_check(
    traj: Trajectory,
    params: VehicleParams,
    cons: ConstraintParams,
    config: SecoConfig,
) -> tuple[float, float, bool]:
    """Open-loop propagation errors of the solution at the terminal node."""
    prop = single_shot(traj.x[0], traj.u, traj.s, params, config.n_substeps)
    terminal = prop[-1]
    pos = quat.extract_position(terminal[SL_DQ])
    pos_err = float(np.linalg.norm(pos - cons.r_I_f))
    v_inertial = quat.rotate_to_inertial(terminal[SL_DQ][:4], terminal[SL_VEL])
    vel_err = float(np.linalg.norm(v_inertial - [0.0, 0.0, cons.v_z_I_f]))
    passed = pos_err <= config.pos_tol and vel_err <= config.vel_tol
    return pos_err, vel_err, passed


def build_subproblem(
    traj: Trajectory,
    params: VehicleParams,
    cons: ConstraintParams,
    config: SecoConfig,
    ranges: Ranges,
    rng: np.random.Generator,
):
    """One SCP iteration's subproblem about the given reference.

    Discretizes, scales blocks into the ranges frame, classifies constraints
    from the reference trigger values, and preconditions. Returns the raw
    (scaled) subproblem, its preconditioned form and the discretization time.
    """
    n = config.n_nodes
    sx = ranges.state_hi - ranges.state_lo
    su = ranges.control_hi - ranges.control_lo
    ss = ranges.s_hi - ranges.s_lo

    t0 = time.perf_counter()
    disc = discretize(traj.x, traj.u, traj.s, params, config.n_substeps)
    t_disc = time.perf_counter() - t0
    disc.A = disc.A / sx[None, :, None] * sx[None, None, :]
    disc.B_minus = disc.B_minus / sx[None, :, None] * su[None, None, :]
    disc.B_plus = disc.B_plus / sx[None, :, None] * su[None, None, :]
    disc.S = disc.S / sx[None, :] * ss
    disc.d = disc.d / sx[None, :]

    psibar = trigger_values(traj.x, cons)
    sets_xi_phys = combined_state_sets(psibar, traj.x[:, SL_DQ], cons)
    sets_u_phys = combined_control_sets(traj.u, traj.s, cons)
    node1_set, node_n_set = boundary_sets(cons)

    xbar_s = traj.x / sx
    ubar_s = traj.u / su
    sets_xi = [None] * n
    sets_xi[0] = ProductSet(NX, [(0, Singleton(xbar_s[0]))])
    sets_xi[n - 1] = node_n_set.scaled(1.0 / sx)
    for k in range(1, n - 1):
        sets_xi[k] = sets_xi_phys[k].scaled(1.0 / sx)
    sets_u = [s.scaled(1.0 / su) for s in sets_u_phys]
    set_s = Box([config.s_min], [config.s_max]).scaled(np.array([1.0 / ss]))

    raw = assemble(
        disc, xbar_s, ubar_s, traj.s / ss, config.weights,
        node1_set.scaled(1.0 / sx), sets_xi, sets_u, set_s,
    )
    return raw, precondition(raw, config.spectral, rng, config.lam_override), t_disc


def _scaled_residual(raw, dx, dxi, du, ds) -> float:
    """Max-norm dynamics residual of the solved deviations (scaled frame)."""
    k = raw.n - 1
    res = (
        np.einsum("kij,kj->ki", raw.A, dx[:k])
        - dx[1:]
        + np.einsum("kij,kj->ki", raw.B_minus, du[:k])
        + np.einsum("kij,kj->ki", raw.B_plus, du[1:])
        + raw.S * ds
        + raw.d
    )
    return float(np.abs(res).max())


def solve(
    params: VehicleParams,
    cons: ConstraintParams,
    config: SecoConfig,
    guess: Trajectory | None = None,
    warm_dual: np.ndarray | None = None,
) -> tuple[Trajectory, SecoReport]:
    """Run the full linearize/discretize/precondition/solve loop.

    Returns the final trajectory and per-iteration telemetry. Failures that
    leave a usable partial result (infeasible reference window, solver cap
    with abort configured, propagation blowup) are recorded in the report
    instead of raising.
    """
    config.validate()
    n = config.n_nodes
    ranges = default_ranges(cons, config.tof_guess)
    sx = ranges.state_hi - ranges.state_lo
    su = ranges.control_hi - ranges.control_lo
    ss = ranges.s_hi - ranges.s_lo

    traj = (guess or initial_guess(params, cons, config)).copy()
    rng = np.random.default_rng(config.seed)

    workspace = SolverWorkspace.zeros(n, NX, NU)
    if warm_dual is not None:
        workspace.w = warm_dual.copy()
    stats: list[IterationStats] = []
    report = SecoReport(iterations=stats, converged=False, pos_err=np.inf, vel_err=np.inf, backend="")

    for it in range(config.max_iterations):
        t0 = time.perf_counter()
        try:
            raw, data, t_disc = build_subproblem(traj, params, cons, config, ranges, rng)
        except PropagationError as exc:
            report.failure = f"propagation: {exc}"
            logger.error("reference propagation failed: %s", exc)
            break
        except InfeasibleReferenceError as exc:
            report.failure = f"infeasible_reference: {exc}"
            logger.error("%s", exc)
            break
        t2 = time.perf_counter()
        t1 = t0 + t_disc  # discretize/parse split inside the builder

        workspace.dx[:] = 0.0
        workspace.dxi[:] = 0.0
        workspace.du[:] = 0.0
        workspace.ds = 0.0
        result = pipg_custom(data, config.solver, warm=workspace, backend=config.backend)
        t3 = time.perf_counter()
        if not result.converged and config.on_jmax == "abort":
            report.failure = "solver_abort: subproblem hit the iteration cap"
            logger.error("subproblem solver hit the cap; aborting per configuration")
            break
        workspace.w = result.w

        dyn_residual = _scaled_residual(raw, result.dx, result.dxi, result.du, result.ds)
        trust_radius = float(
            max(
                np.abs(result.dx).max(initial=0.0),
                np.abs(result.du).max(initial=0.0),
                abs(result.ds),
            )
        )
        virtual_gap = float(np.abs(result.dx - result.dxi).max(initial=0.0))

        traj.x = traj.x + result.dx * sx
        traj.xi = traj.x + (result.dxi - result.dx) * sx
        traj.u = traj.u + result.du * su
        traj.s = float(traj.s + result.ds * ss)
        # keep the pose manifold tight across iterations
        reals = traj.x[:, SL_DQ][:, :4]
        drift = np.abs(np.linalg.norm(reals, axis=-1) - 1.0)
        if np.any(drift > 1e-9):
            traj.x[:, SL_DQ] = quat.dq_normalize(traj.x[:, SL_DQ])

        # the open-loop check is the convergence gate in early-exit mode; with
        # a fixed budget only the final trajectory needs it
        last = it == config.max_iterations - 1
        pos_err = vel_err = float("nan")
        if not config.fixed_iterations or last:
            try:
                pos_err, vel_err, passed = convergence_check(traj, params, cons, config)
            except PropagationError as exc:
                report.failure = f"propagation: {exc}"
                logger.error("open-loop check failed to propagate: %s", exc)
                break
            report.pos_err, report.vel_err = pos_err, vel_err
        stats.append(
            IterationStats(
                pipg_iterations=result.iterations,
                pipg_converged=result.converged,
                dyn_residual=dyn_residual,
                trust_radius=trust_radius,
                virtual_gap=virtual_gap,
                pos_err=pos_err,
                vel_err=vel_err,
                t_discretize=t1 - t0,
                t_parse=t2 - t1,
                t_solve=t3 - t2,
            )
        )
        report.backend = result.backend
        logger.info(
            "iteration %d: %d solver iterations, open-loop errors %.3f m / %.4f m/s",
            it + 1, result.iterations, pos_err, vel_err,
        )
        if not config.fixed_iterations and passed:
            report.converged = True
            break
    if not report.converged and report.failure is None and stats:
        report.converged = report.pos_err <= config.pos_tol and report.vel_err <= config.vel_tol
    report.final_dual = workspace.w.copy()
    return traj, report
