"""Command-line front end: solve, benchmark and verify subcommands.

Exit codes: 0 success/converged, 2 configuration error, 3 infeasible
reference window, 4 solver non-convergence or propagation failure,
5 verification failure. ``SECO_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import quat
from .config import ConfigError, Mission, load_mission
from .dynamics import SL_DQ, SL_OMEGA, SL_VEL
from .engine import SecoReport, Trajectory, solve
from .pipg import HAVE_COMPILED_KERNEL
from .subproblem import trigger
from .verification import (
    check_discretization,
    check_jacobians,
    check_oracle_equivalence,
    check_projections,
)

logger = logging.getLogger("seco")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NO_CONVERGENCE = 4
EXIT_VERIFY_FAILED = 5


def _fmt(x: float) -> str:
    """Shortest round-trip decimal form: deterministic and bit-exact."""
    return repr(float(x))


def trajectory_rows(traj: Trajectory, mission: Mission) -> list[list]:
    """Per-node records with plot-ready constraint columns (angles in deg)."""
    cons = mission.cons
    n = traj.x.shape[0]
    taus = np.linspace(0.0, 1.0, n)
    rows = []
    for k in range(n):
        x = traj.x[k]
        u = traj.u[k]
        dq = x[SL_DQ]
        q = dq[:4]
        r = quat.extract_position(dq)
        norm_r = float(np.linalg.norm(r))
        tilt = 2.0 * np.arcsin(min(1.0, float(np.linalg.norm(q[:2]))))
        p_inertial = quat.rotate_to_inertial(q, cons.p_B)
        los = float(np.arccos(np.clip(-(r @ p_inertial) / norm_r, -1.0, 1.0)))
        rows.append(
            [
                k + 1,
                taus[k],
                traj.s * taus[k],
                x[0],
                *r,
                *q,
                *np.rad2deg(x[SL_OMEGA]),
                *x[SL_VEL],
                u[0],
                np.rad2deg(u[1]),
                np.rad2deg(u[2]),
                *u[3:6],
                trigger(norm_r, cons.rho_min, cons.rho_max),
                np.rad2deg(los),
                np.rad2deg(tilt),
            ]
        )
    return rows


TRAJECTORY_HEADER = [
    "node",
    "tau",
    "t_s",
    "mass_kg",
    "rx_m",
    "ry_m",
    "rz_m",
    "qx",
    "qy",
    "qz",
    "qw",
    "wx_deg_per_s",
    "wy_deg_per_s",
    "wz_deg_per_s",
    "vx_body_m_per_s",
    "vy_body_m_per_s",
    "vz_body_m_per_s",
    "thrust_n",
    "gimbal_deg",
    "azimuth_deg",
    "torque_x_nm",
    "torque_y_nm",
    "torque_z_nm",
    "trigger",
    "los_deg",
    "tilt_deg",
]


def write_trajectory_csv(path: Path, traj: Trajectory, mission: Mission) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        for row in trajectory_rows(traj, mission):
            writer.writerow([row[0]] + [_fmt(v) for v in row[1:]])


def _json_safe(x: float):
    return None if not np.isfinite(x) else x


def write_report_json(path: Path, traj: Trajectory, report: SecoReport) -> None:
    doc = {
        "converged": report.converged,
        "failure": report.failure,
        "iterations": report.n_iterations,
        "terminal_position_error_m": report.pos_err,
        "terminal_velocity_error_m_per_s": report.vel_err,
        "time_of_flight_s": traj.s,
        "final_mass_kg": float(traj.x[-1, 0]),
        "backend": report.backend,
        "stage_times_s": report.stage_totals(),
        "per_iteration": [
            {
                "pipg_iterations": s.pipg_iterations,
                "pipg_converged": s.pipg_converged,
                "dynamics_residual": s.dyn_residual,
                "trust_radius": s.trust_radius,
                "virtual_state_gap": s.virtual_gap,
                "open_loop_position_error_m": _json_safe(s.pos_err),
                "open_loop_velocity_error_m_per_s": _json_safe(s.vel_err),
                "t_discretize_s": s.t_discretize,
                "t_parse_s": s.t_parse,
                "t_solve_s": s.t_solve,
            }
            for s in report.iterations
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _failure_exit_code(report: SecoReport) -> int:
    if report.failure and report.failure.startswith("infeasible_reference"):
        return EXIT_INFEASIBLE
    if report.failure or not report.converged:
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_solve(args) -> int:
    try:
        mission = load_mission(args.config)
        if args.nodes is not None:
            mission.config.n_nodes = args.nodes
        if args.seed is not None:
            mission.config.seed = args.seed
        mission.config.validate()
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    traj, report = solve(mission.params, mission.cons, mission.config)
    write_trajectory_csv(out_dir / "trajectory.csv", traj, mission)
    write_report_json(out_dir / "report.json", traj, report)
    status = "converged" if report.converged else f"failed ({report.failure or 'tolerances not met'})"
    print(
        f"{status}: {report.n_iterations} iterations, terminal errors "
        f"{report.pos_err:.3f} m / {report.vel_err:.4f} m/s, "
        f"time of flight {traj.s:.2f} s, final mass {traj.x[-1, 0]:.1f} kg"
    )
    print(f"wrote {out_dir / 'trajectory.csv'} and {out_dir / 'report.json'}")
    return _failure_exit_code(report)


def _bench_one(mission: Mission, n_nodes: int, reps: int, warm: bool, backend: str):
    runs = []
    failures = 0
    resolved = backend
    mission.config.n_nodes = n_nodes
    if backend:
        mission.config.backend = backend
    guess = None
    dual = None
    for _ in range(reps):
        t0 = time.perf_counter()
        traj, report = solve(mission.params, mission.cons, mission.config, guess=guess, warm_dual=dual)
        total = time.perf_counter() - t0
        resolved = report.backend or resolved
        if not report.converged:
            failures += 1
            continue
        stages = report.stage_totals()
        runs.append(
            {
                "total_s": total,
                "discretize_s": stages["discretize"],
                "parse_s": stages["parse"],
                "solve_s": stages["solve"],
                "scp_iterations": report.n_iterations,
                "pipg_iterations": sum(s.pipg_iterations for s in report.iterations),
            }
        )
        if warm:
            guess = traj.copy()
            dual = report.final_dual
    return runs, failures, resolved


BENCH_FIELDS = ["total_s", "discretize_s", "parse_s", "solve_s", "scp_iterations", "pipg_iterations"]


def cmd_bench(args) -> int:
    try:
        mission = load_mission(args.config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.reps < 1:
        print("repetitions must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    sweep = [int(n) for n in args.sweep.split(",")] if args.sweep else [mission.config.n_nodes]
    backends = ["compiled", "python"] if args.backend == "both" else [args.backend]
    if "compiled" in backends and not HAVE_COMPILED_KERNEL:
        print("compiled kernel not available; benchmarking python backend only")
        backends = ["python"]

    rows = []
    any_success = False
    for backend in backends:
        for n_nodes in sweep:
            runs, failures, resolved = _bench_one(mission, n_nodes, args.reps, args.warm, backend)
            row = {"backend": resolved, "nodes": n_nodes, "runs": len(runs), "failures": failures}
            for field in BENCH_FIELDS:
                values = np.array([r[field] for r in runs]) if runs else np.zeros(0)
                row[f"{field}_mean"] = float(values.mean()) if values.size else float("nan")
                row[f"{field}_std"] = float(values.std(ddof=0)) if values.size else float("nan")
                row[f"{field}_min"] = float(values.min()) if values.size else float("nan")
                row[f"{field}_max"] = float(values.max()) if values.size else float("nan")
            rows.append(row)
            any_success = any_success or bool(runs)
            print(
                f"backend={resolved} N={n_nodes}: {len(runs)}/{args.reps} converged, "
                f"total {row['total_s_mean'] * 1e3:8.1f} ms "
                f"(discretize {row['discretize_s_mean'] * 1e3:7.1f}, "
                f"parse {row['parse_s_mean'] * 1e3:7.1f}, "
                f"solve {row['solve_s_mean'] * 1e3:7.1f}), "
                f"std {row['total_s_std'] * 1e3:6.1f} ms"
            )
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        header = ["backend", "nodes", "runs", "failures"] + [
            f"{f}_{stat}" for f in BENCH_FIELDS for stat in ("mean", "std", "min", "max")
        ]
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    print(f"wrote {out_path}")
    return EXIT_OK if any_success else EXIT_NO_CONVERGENCE


def cmd_verify(args) -> int:
    try:
        mission = load_mission(args.config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    quick = args.quick
    checks = []
    backends = ["python"] + (["compiled"] if HAVE_COMPILED_KERNEL else [])
    for backend in backends:
        checks.append(
            check_oracle_equivalence(
                seed=mission.config.seed,
                n_instances=1 if quick else 3,
                iterations=120 if quick else 250,
                backend=backend,
                corrupt=args.inject_fault,
            )
        )
    checks.append(
        check_jacobians(mission.params, seed=mission.config.seed, n_samples=10 if quick else 100)
    )
    checks.append(
        check_discretization(mission.params, mission.cons, seed=mission.config.seed,
                             n_substeps=mission.config.n_substeps)
    )
    checks.append(check_projections(seed=mission.config.seed, n_samples=400 if quick else 2000))

    width = max(len(c.name) for c in checks)
    failed = False
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"[{status}] {c.name:<{width}}  {c.detail}")
        failed = failed or not c.passed
    return EXIT_VERIFY_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seco",
        description="Sequential conic optimization engine for 6-DoF powered-descent guidance",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a mission and write trajectory/report files")
    p_solve.add_argument("config", help="mission configuration JSON")
    p_solve.add_argument("--nodes", type=int, default=None, help="override the temporal node count")
    p_solve.add_argument("--out", default="out", help="output directory (default: out)")
    p_solve.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    p_solve.set_defaults(func=cmd_solve)

    p_bench = sub.add_parser("bench", help="repeat full solves and report stage timing statistics")
    p_bench.add_argument("config", help="mission configuration JSON")
    p_bench.add_argument("--reps", type=int, required=True, help="repetitions per case")
    p_bench.add_argument("--sweep", default=None, help="comma-separated node counts, e.g. 10,15,20,25")
    p_bench.add_argument("--warm", action="store_true", help="warm start each repetition from the last")
    p_bench.add_argument(
        "--backend",
        default="auto",
        choices=["auto", "python", "compiled", "both"],
        help="solver kernel to benchmark ('both' compares the two)",
    )
    p_bench.add_argument("--out", default="bench.csv", help="output CSV path")
    p_bench.set_defaults(func=cmd_bench)

    p_verify = sub.add_parser("verify", help="run the self-check suite (oracles and identities)")
    p_verify.add_argument("config", help="mission configuration JSON")
    p_verify.add_argument("--quick", action="store_true", help="reduced sample counts")
    p_verify.add_argument(
        "--inject-fault", action="store_true", help="corrupt a dynamics block (negative test)"
    )
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("SECO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
