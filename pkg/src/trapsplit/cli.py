"""Command-line front end: design -> map -> propagate -> report.

Commands
--------
design     write the ideal (delta, lambda) schedule as CSV
map        match trap controls (V0, omega) to a schedule CSV
propagate  drive the mapped trap, report fidelities/populations/snapshots
scan       parameter scans: final-time, bias-perturbation, interaction
ffsplit    single fast-forward run: potential table and fidelity quad

All commands take --config/--out; outputs are deterministic CSVs with
12-significant-digit values, and each run writes the resolved configuration
next to its outputs.  Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import ffsplit, lattice1d, mapping, protocols, tdse
from .config import ConfigError, ExperimentConfig
from .constants import HBAR
from .lattice1d import EigensolverError, TwoLevelBreakdownError
from .mapping import MappedTrajectory, MappingError, SimplexMaxIterError
from .protocols import ProtocolSingularError
from .tdse import BoxTooSmallError, ConvergenceError, StepSizeError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

NUMERICAL_ERRORS = (
    MappingError,
    SimplexMaxIterError,
    EigensolverError,
    TwoLevelBreakdownError,
    ProtocolSingularError,
    ConvergenceError,
    StepSizeError,
    BoxTooSmallError,
    ffsplit.AmplitudeSupportError,
    ArithmeticError,
)

FMT = "{:.11e}"


def _write_rows(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(
                ",".join(FMT.format(v) if isinstance(v, float) else str(v) for v in row)
                + "\n"
            )


def _prepare(args):
    cfg = ExperimentConfig.from_file(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.ini").write_text(cfg.resolved_text())
    if args.verbose:
        print(f"resolved config -> {out / 'resolved_config.ini'}")
    return cfg, out


def _build_protocol(cfg: ExperimentConfig):
    p = cfg["protocol"]
    omega0 = cfg.omega0()
    t_final = p["t_final_ms"] * 1e-3
    if p["kind"] == "invariant":
        angles = protocols.design_invariant_angles(
            omega0, p["lambda_f_per_s"], p["lambda_dot0_per_s2"], t_final
        )
        return protocols.protocol_from_angles(angles)
    if p["kind"] == "faquad":
        return protocols.faquad_schedule(omega0, p["lambda_f_per_s"], t_final)
    return protocols.LinearReferenceProtocol(omega0, p["lambda_f_per_s"], t_final)


def cmd_design(args) -> int:
    cfg, out = _prepare(args)
    protocol = _build_protocol(cfg)
    path = out / "protocol.csv"
    protocol.to_csv(path, n=cfg["protocol"]["n_samples"])
    print(f"wrote {path}")
    return EXIT_OK


def _map_trajectory(cfg: ExperimentConfig, target) -> MappedTrajectory:
    grid = cfg.grid()
    omega0 = float(target.eval(0.0)[0])
    return mapping.map_protocol(
        target,
        cfg.trap(),
        initial_guess=(0.0, omega0),
        n_slices=cfg["mapping"]["n_slices"],
        grid=grid,
        residual_max=cfg["mapping"]["residual_max"],
        v0_max=cfg["mapping"]["v0_max_hbar_omega0"] * HBAR * omega0,
        delta_floor_fraction=cfg["mapping"]["delta_floor_fraction"],
    )


def cmd_map(args) -> int:
    cfg, out = _prepare(args)
    target = protocols.read_protocol_csv(args.protocol_csv)
    traj = _map_trajectory(cfg, target)
    path = out / "trajectory.csv"
    traj.to_csv(path, comments=[f"trap_hash={cfg.trap_hash()}"])
    print(f"wrote {path} (max residual {traj.residuals.max():.3e})")
    return EXIT_OK


def _check_hash(cfg: ExperimentConfig, comments: list[str]) -> None:
    tags = [c.split("=", 1)[1] for c in comments if c.startswith("trap_hash=")]
    if not tags or tags[0] != cfg.trap_hash():
        raise ConfigError(
            "trajectory file trap_hash does not match the [trap]/[grid] "
            "sections of this config"
        )


def _propagation_runs(cfg: ExperimentConfig, traj: MappedTrajectory):
    """(label, potential_of_t, params_of_t) for the shortcut and, optionally,
    the linear-lattice-ramp reference ending at the same final height."""
    fixed = cfg.trap()
    runs = [
        (
            "shortcut",
            tdse.trajectory_potential(traj, fixed),
            tdse.trajectory_params(traj, fixed),
        )
    ]
    if cfg["tdse"]["compare_linear"]:
        ramp = protocols.linear_ramp(float(traj.v0_series[-1]), traj.t_final)
        omega0 = float(traj.omega_series[0])
        runs.append(
            (
                "linear",
                tdse.ramp_potential(ramp, omega0, fixed),
                tdse.ramp_params(ramp, omega0, fixed),
            )
        )
    return runs


def cmd_propagate(args) -> int:
    cfg, out = _prepare(args)
    traj, comments = MappedTrajectory.from_csv(args.trajectory_csv)
    _check_hash(cfg, comments)
    grid = cfg.grid()
    dt = cfg["tdse"]["dt_us"] * 1e-6
    g1n = cfg["tdse"]["g1n_j_m"]
    t_eval = traj.t_final - cfg["tdse"]["stop_early_ms"] * 1e-3
    target_params = tdse.trajectory_params(traj, cfg.trap())(t_eval)
    levels = {"ground": 0, "excited": 1}
    rows = []
    for label, pot, par in _propagation_runs(cfg, traj):
        for state in cfg["scan"]["start_states"]:
            level = levels[state]
            fid, psi = tdse.demux_run(
                pot, par, grid, level, t_eval, dt=dt, g1n=g1n,
                target_params=target_params,
            )
            psi.to_csv(out / f"snapshot_{label}_{state}.csv")
            trace = tdse.population_trace(
                pot,
                par,
                grid,
                level,
                t_eval,
                n_records=cfg["tdse"]["population_records"],
                dt=dt,
                g1n=g1n,
            )
            trace.to_csv(out / f"populations_{label}_{state}.csv")
            rows.append((label, state, t_eval, fid, psi.position_expectation()))
            if args.verbose:
                print(f"{label}/{state}: fidelity {fid:.6f}")
    _write_rows(out / "fidelity.csv", "protocol,start_state,t_eval,fidelity,x_mean", rows)
    print(f"wrote {out / 'fidelity.csv'}")
    return EXIT_OK


def _tf_scan_job(payload):
    values, tf_s, state = payload
    cfg = ExperimentConfig(values)
    cfg.values["protocol"]["t_final_ms"] = tf_s * 1e3
    target = _build_protocol(cfg)
    traj = _map_trajectory(cfg, target)
    grid = cfg.grid()
    dt = cfg["tdse"]["dt_us"] * 1e-6
    t_eval = tf_s - cfg["tdse"]["stop_early_ms"] * 1e-3
    target_params = tdse.trajectory_params(traj, cfg.trap())(t_eval)
    level = {"ground": 0, "excited": 1}[state]
    out = [tf_s, state]
    for _, pot, par in _propagation_runs(cfg, traj):
        fid, _ = tdse.demux_run(
            pot, par, grid, level, t_eval, dt=dt, target_params=target_params
        )
        out.append(fid)
    return tuple(out)


def _lambda_scan_job(payload):
    values, lam_hw = payload
    cfg = ExperimentConfig(values)
    design, grid, dt = _ffsplit_setup(cfg)
    table = ffsplit.potential_table(
        design, grid, n_slices=cfg["ffsplit"]["n_time_slices"]
    )
    lam = lam_hw * HBAR * design.omega
    quad = ffsplit.fidelity_quad(design, lam, grid=grid, dt=dt, table=table)
    model = ffsplit.moving_two_mode(
        design, lam, grid=grid, n_basis=cfg["ffsplit"]["n_basis_slices"], table=table
    )
    return (
        lam_hw,
        quad.f_s,
        quad.f_d,
        quad.f_d0,
        quad.f_i,
        model.f_s,
        model.f_d,
        model.f_d0,
    )


def _g1n_scan_job(payload):
    values, g1n_hat = payload
    cfg = ExperimentConfig(values)
    f = cfg["ffsplit"]
    lam_hw = f["lambda_hbar_omega"]
    omega = f["omega_rad_s"]
    fs = ffsplit.structural_fidelity_interacting(
        g1n_hat,
        lam_hw,
        omega,
        f["x_f_um"] * 1e-6,
        f["t_final_ms"] * 1e-3,
        grid=cfg.grid(),
        mass=cfg["trap"]["mass_kg"],
    )
    lam = lam_hw * HBAR * omega
    imb = ffsplit.appendix_a_imbalance(lam, omega, g1n_hat)
    return (g1n_hat, fs, imb.delta_n_over_n)


def _run_jobs(job, payloads, workers: int):
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, payloads))
    return [job(p) for p in payloads]


def cmd_scan(args) -> int:
    cfg, out = _prepare(args)
    kind = cfg["scan"]["kind"]
    if kind == "tf":
        tfs = [t * 1e-3 for t in cfg["scan"]["tf_list_ms"]]
        payloads = [
            (cfg.values, tf, state)
            for tf in tfs
            for state in cfg["scan"]["start_states"]
        ]
        header = "t_f,start_state,F_shortcut"
        if cfg["tdse"]["compare_linear"]:
            header += ",F_linear"
        rows = _run_jobs(_tf_scan_job, payloads, args.workers)
        path = out / "scan_tf.csv"
    elif kind == "lambda":
        payloads = [(cfg.values, l) for l in cfg["scan"]["lambda_list_hbar_omega"]]
        header = "lambda_over_hbar_omega,F_S,F_D,F_D0,F_I,model_F_S,model_F_D,model_F_D0"
        rows = _run_jobs(_lambda_scan_job, payloads, args.workers)
        path = out / "scan_lambda.csv"
    else:
        payloads = [(cfg.values, g) for g in cfg["scan"]["g1n_hat_list"]]
        header = "g1n_hat,F_S,delta_n_over_n"
        rows = _run_jobs(_g1n_scan_job, payloads, args.workers)
        path = out / "scan_g1n.csv"
    _write_rows(path, header, rows)
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


def _ffsplit_setup(cfg: ExperimentConfig):
    f = cfg["ffsplit"]
    grid = cfg.grid()
    omega = f["omega_rad_s"]
    mass = cfg["trap"]["mass_kg"]
    if f["design"] == "two_bump":
        design = ffsplit.TwoBumpDesign(
            omega, f["x_f_um"] * 1e-6, f["t_final_ms"] * 1e-3, mass
        )
    else:
        a0 = math.sqrt(HBAR / (mass * omega))
        g1n = f["g1n_hat"] * HBAR * omega * a0
        design = ffsplit.GpeInterpolatedDesign(
            omega, f["x_f_um"] * 1e-6, f["t_final_ms"] * 1e-3, g1n, grid, mass
        )
    return design, grid, f["dt_us"] * 1e-6


def cmd_ffsplit(args) -> int:
    cfg, out = _prepare(args)
    design, grid, dt = _ffsplit_setup(cfg)
    f = cfg["ffsplit"]
    g1n = 0.0
    if f["design"] == "interpolated_gpe":
        g1n = f["g1n_hat"] * HBAR * design.omega * design.a0
    table = ffsplit.potential_table(design, grid, g1n, n_slices=f["n_time_slices"])
    # potential on a coarse time sampling, one column per time
    n_cols = 21
    idx = np.linspace(0, len(table.times) - 1, n_cols).astype(int)
    header = "x," + ",".join(f"v_t{table.times[i]:.4f}" for i in idx)
    rows = [
        tuple([grid.x[j]] + [float(table.values[i][j]) for i in idx])
        for j in range(grid.n_points)
    ]
    _write_rows(out / "ff_potential.csv", header, rows)

    lam = f["lambda_hbar_omega"] * HBAR * design.omega
    quad = ffsplit.fidelity_quad(design, lam, g1n=g1n, grid=grid, dt=dt, table=table)
    model = ffsplit.moving_two_mode(
        design, lam, grid=grid, n_basis=f["n_basis_slices"], table=table
    )
    _write_rows(
        out / "ff_fidelity.csv",
        "lambda_over_hbar_omega,F_S,F_D,F_D0,F_I,model_F_S,model_F_D,model_F_D0",
        [
            (
                f["lambda_hbar_omega"],
                quad.f_s,
                quad.f_d,
                quad.f_d0,
                quad.f_i,
                model.f_s,
                model.f_d,
                model.f_d0,
            )
        ],
    )
    print(f"wrote {out / 'ff_fidelity.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trapsplit",
        description="design, map and verify fast trap-splitting protocols",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="INI configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, default=1, help="scan worker count")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("design", help="write the ideal schedule CSV")
    add_common(p)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("map", help="map a schedule CSV onto trap controls")
    add_common(p)
    p.add_argument("protocol_csv", help="schedule CSV from the design command")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("propagate", help="propagate a mapped trajectory")
    add_common(p)
    p.add_argument("trajectory_csv", help="trajectory CSV from the map command")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("scan", help="run the configured parameter scan")
    add_common(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("ffsplit", help="fast-forward potential and fidelities")
    add_common(p)
    p.set_defaults(func=cmd_ffsplit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
