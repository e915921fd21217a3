"""Command-line entry point: simulate, sweep, solve-loop and field-check.

Exit codes: 0 success, 1 validation failure, 2 solver failure, 3 integration failure.
"""
from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import ConfigError, dump_config, load_config
from .contrast import Axis, contrast_sweep, contrast_threshold, CONTRAST_TARGET
from .fields import (
    default_grid,
    field_at,
    force_at,
    maxwell_residuals,
    potential_energy,
    reference_potential,
)
from .integrator import (
    IntegrationError,
    IntegratorSettings,
    evaluate_traces,
    integrate_arm,
    loglog_slope,
    mass_scaling_sweep,
    numeric_peak,
)
from .loopsolver import ClosureError, ClosureProblem, solve_full_closure
from .model import validate_config
from .output import RunManifest, write_csv
from .trajectory import NoStallError, run_protocol
from .wavepacket import chain_through_protocol

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_INTEGRATION = 0, 1, 2, 3
EV = 1.602176634e-19
TRAJ_COLUMNS = ["t", "x_plus", "x_minus", "v_plus", "v_minus", "separation", "velocity_difference"]


def _manifest(args, loaded) -> RunManifest:
    return RunManifest(args.command, str(args.config), str(args.out), loaded.sha256)


def _load_valid(args, require_complete=True):
    loaded = load_config(args.config)
    report = validate_config(loaded.experiment, require_complete=require_complete)
    if not report.ok:
        print(f"invalid configuration {args.config}:\n{report.render()}", file=sys.stderr)
        return loaded, False
    return loaded, True


def cmd_simulate(args) -> int:
    loaded, ok = _load_valid(args)
    if not ok:
        return EXIT_VALIDATION
    cfg = loaded.experiment
    out = Path(args.out)
    man = _manifest(args, loaded)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = run_protocol(cfg, dt=args.dt)
    columns = list(TRAJ_COLUMNS)
    rows = list(zip(res.t, res.x_plus, res.x_minus, res.v_plus, res.v_minus,
                    res.separation, res.velocity_difference))
    summary = []
    if cfg.stages:
        summary.append(("analytic", "peak_separation", res.peak_separation))
        summary.append(("analytic", "peak_time", res.peak_time))
        for sp, sm in zip(res.plus, res.minus):
            ep, em = sp.end_state, sm.end_state
            summary += [("analytic", f"stage{sp.stage_index}_end_t", ep.t),
                        ("analytic", f"stage{sp.stage_index}_separation", em.x - ep.x),
                        ("analytic", f"stage{sp.stage_index}_velocity_difference", em.v - ep.v)]

    if args.mode in ("numeric", "both") and cfg.stages:
        settings = IntegratorSettings(max_steps=args.max_steps)
        plus = integrate_arm(cfg, +1, settings)
        minus = integrate_arm(cfg, -1, settings)
        xp, xm = evaluate_traces(plus, res.t), evaluate_traces(minus, res.t)
        tp, peak = numeric_peak(plus, minus)
        summary += [("numeric", "peak_separation", peak), ("numeric", "peak_time", tp)]
        for tr_p, tr_m in zip(plus, minus):
            summary += [("numeric", f"stage{tr_p.stage_index}_separation", tr_m.final.x - tr_p.final.x),
                        ("numeric", f"stage{tr_p.stage_index}_energy_drift",
                         max(tr_p.energy_drift, tr_m.energy_drift))]
        sep_num = xm - xp
        if args.mode == "numeric":
            vp = np.gradient(xp, res.t)
            vm = np.gradient(xm, res.t)
            rows = list(zip(res.t, xp, xm, vp, vm, sep_num, vm - vp))
        else:
            columns += ["separation_numeric", "separation_diff"]
            rows = [r + (s, s - r[5]) for r, s in zip(rows, sep_num)]
    elif args.mode in ("numeric", "both"):
        columns += ["separation_numeric", "separation_diff"] if args.mode == "both" else []

    write_csv(out / "trajectory.csv", man, columns, rows)

    packet_rows = []
    if cfg.stages:
        for arm in (+1, -1):
            ch = chain_through_protocol(cfg, arm, dt=args.dt)
            packet_rows += [(arm, *r) for r in zip(ch.t, ch.sigma_x, ch.x_c, ch.a, ch.b, ch.c)]
    write_csv(out / "packet.csv", man, ["arm", "t", "sigma_x", "x_c", "a", "b", "c"], packet_rows)
    write_csv(out / "summary.csv", man, ["source", "quantity", "value"], summary)
    if summary:
        peak = dict(((s, q), v) for s, q, v in summary)
        print(f"analytic peak separation {peak[('analytic', 'peak_separation')] * 1e6:.4f} um "
              f"at t = {peak[('analytic', 'peak_time')]:.4f} s")
        if ("numeric", "peak_separation") in peak:
            print(f"numeric peak separation {peak[('numeric', 'peak_separation')] * 1e6:.4f} um")
    return EXIT_OK


def cmd_sweep(args) -> int:
    loaded, ok = _load_valid(args)
    if not ok:
        return EXIT_VALIDATION
    cfg = loaded.experiment
    man = _manifest(args, loaded)
    out = Path(args.out)
    lo, hi = args.range
    if not (0 < lo <= hi) or args.points < 1:
        print("range must satisfy 0 < lo <= hi and points >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    values = np.geomspace(lo, hi, args.points) if args.points > 1 else np.array([lo])

    if args.axis == "mass":
        rows, good_m, good_s = [], [], []
        try:
            sw = mass_scaling_sweep(cfg, values, workers=args.workers)
            points = [(m, n, a, "") for m, n, a in zip(sw.masses, sw.sizes, sw.analytic_sizes)]
        except (IntegrationError, ValueError):
            # retry one mass at a time so a single failure does not sink the sweep
            points = []
            for m in values:
                try:
                    sw = mass_scaling_sweep(cfg, [m])
                    points.append((m, sw.sizes[0], sw.analytic_sizes[0], ""))
                except (IntegrationError, ValueError) as exc:
                    points.append((m, math.nan, math.nan, str(exc)))
        for m, n, a, err in points:
            rows.append((m, n, a, err))
            if not err:
                good_m.append(m)
                good_s.append(n)
        write_csv(out / "sweep_mass.csv", man,
                  ["mass", "peak_separation_numeric", "peak_separation_analytic", "error"], rows)
        slope = loglog_slope(good_m, good_s) if len(good_m) > 1 else math.nan
        write_csv(out / "sweep_summary.csv", man, ["quantity", "value"], [("loglog_slope", slope)])
        print(f"log-log slope {slope:.5f}")
        return EXIT_OK

    axis = Axis.parse(args.axis)
    results = contrast_sweep(cfg, axis, values, relative=True, strict=args.strict, workers=args.workers)
    cols = ["perturbation_value", "delta_x", "delta_b", "sigma_x_final", "contrast"]
    if args.strict:
        cols.append("strict_contrast")
    cols.append("error")
    rows = []
    for r in results:
        row = [r.perturbation.value, r.deviations.delta_x, r.deviations.delta_b, r.sigma_x_final, r.contrast]
        if args.strict:
            row.append(r.strict_contrast)
        row.append(r.error or "")
        rows.append(row)
    write_csv(out / f"sweep_{axis.value}.csv", man, cols, rows)
    thr = contrast_threshold(cfg, axis, lo, hi) if len(values) > 1 else math.nan
    write_csv(out / "sweep_summary.csv", man, ["quantity", "value"],
              [(f"threshold_C_{CONTRAST_TARGET}", thr)])
    print(f"C = {CONTRAST_TARGET} crossing: {thr:.4g}")
    return EXIT_OK


def _complete_name(path: Path) -> str:
    stem = path.stem
    stem = stem.replace("-partial", "-complete") if "-partial" in stem else stem + "-complete"
    return stem + ".cfg"


def cmd_solve_loop(args) -> int:
    loaded, ok = _load_valid(args, require_complete=False)
    if not ok:
        return EXIT_VALIDATION
    cfg = loaded.experiment
    proto = dict(loaded.protocol)
    for key in ("dynamics", "stage4_mode", "t3_resolution", "stall_separation"):
        val = getattr(args, key)
        if val is not None:
            proto[key] = val
    targets = {}
    if "stall_separation" in proto:
        targets["stall_separation"] = float(proto["stall_separation"])
    problem = ClosureProblem(cfg, targets=targets, T3_resolution=proto.get("t3_resolution"),
                             stage4_mode=proto.get("stage4_mode", "time"),
                             dynamics=proto.get("dynamics", "exact"))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            solved, report = solve_full_closure(problem)
    except (ClosureError, NoStallError, ValueError) as exc:
        print(f"solve-loop failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    out = Path(args.out)
    man = _manifest(args, loaded)
    if report.solved:
        out.mkdir(parents=True, exist_ok=True)
        target = out / _complete_name(Path(args.config))
        header = "\n".join(man.header_lines()) + "\n"
        target.write_text(header + dump_config(solved, proto))
        print(f"wrote {target}")
    else:
        print("configuration already complete: verification only")
    tol = report.tolerances
    rows = [(k, v, "", "") for k, v in sorted(report.solved.items())]
    for name, vals, t in (("final_x", report.final_x, tol["final_x"]),
                          ("final_v", report.final_v, tol["final_v"])):
        for arm, v in zip(("plus", "minus"), vals):
            rows.append((f"{name}_{arm}", v, t, abs(v) < t))
    rows.append(("stall_separation", report.stall_separation,
                 tol["stall_separation"] if report.stall_target else "",
                 report.stall_residual < tol["stall_separation"] if report.stall_target else ""))
    write_csv(out / "residuals.csv", man, ["quantity", "value", "tolerance", "pass"], rows)
    return EXIT_OK if report.closed else EXIT_SOLVER


def cmd_field_check(args) -> int:
    loaded = load_config(args.config)
    fm = loaded.field_model
    if fm is None:
        print("configuration has no [field] section", file=sys.stderr)
        return EXIT_VALIDATION
    if not fm.kind.is_2d:
        print("field-check needs a 2D field kind", file=sys.stderr)
        return EXIT_VALIDATION
    c = loaded.experiment.constants
    m = loaded.experiment.particle.mass
    X, Y = default_grid(args.half_width, args.grid)
    div, curl = maxwell_residuals(fm, (X, Y))
    U0 = reference_potential(fm, c, m)
    rows = []
    Bx, By = field_at(fm, X, Y)
    U = potential_energy(fm, c, m, 0, X, Y)
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            f = force_at(fm, c, m, 0, float(X[i, j]), float(Y[i, j]))
            rows.append((X[i, j], Y[i, j], Bx[i, j], By[i, j], f.force[0], f.force[1], U[i, j], U[i, j] - U0))
    man = _manifest(args, loaded)
    out = Path(args.out)
    write_csv(out / "field.csv", man, ["x", "y", "Bx", "By", "Fx", "Fy", "U", "dU"], rows)
    flagged = div != 0 or curl != 0
    write_csv(out / "field_summary.csv", man, ["quantity", "value"],
              [("max_abs_div", div), ("max_abs_curl", curl), ("U0_J", U0), ("U0_eV", U0 / EV),
               ("maxwell_violation", flagged)])
    print(f"max|div B| = {div:.3e}, max|curl B| = {curl:.3e}, U0 = {U0 / EV:.2f} eV")
    if flagged:
        print("field violates Maxwell's equations", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sgihp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", type=Path)
        sp.add_argument("--out", type=Path, default=Path("out"))

    s = sub.add_parser("simulate", help="trajectories and packet widths")
    common(s)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--analytic", dest="mode", action="store_const", const="analytic")
    g.add_argument("--numeric", dest="mode", action="store_const", const="numeric")
    g.add_argument("--both", dest="mode", action="store_const", const="both")
    s.set_defaults(mode="analytic", func=cmd_simulate)
    s.add_argument("--dt", type=float, default=1e-5)
    s.add_argument("--max-steps", dest="max_steps", type=int, default=IntegratorSettings.max_steps,
                   help="step budget per stage for the numeric integration")

    s = sub.add_parser("sweep", help="mass scaling or contrast curves")
    common(s)
    s.add_argument("--axis", required=True, choices=["mass", "eta-linear", "eta-nonlinear", "init-pos"])
    s.add_argument("--range", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    s.add_argument("--points", type=int, default=61)
    s.add_argument("--strict", action="store_true", help="also report the exact two-packet overlap")
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("solve-loop", help="fill in the tuned stage parameters")
    common(s)
    s.add_argument("--dynamics", choices=["analytic", "exact"], default=None)
    s.add_argument("--stage4-mode", dest="stage4_mode", choices=["time", "separation"], default=None)
    s.add_argument("--t3-resolution", dest="t3_resolution", type=float, default=None)
    s.add_argument("--stall-separation", dest="stall_separation", type=float, default=None)
    s.set_defaults(func=cmd_solve_loop)

    s = sub.add_parser("field-check", help="field map, forces and Maxwell residuals")
    common(s)
    s.add_argument("--grid", type=int, default=101)
    s.add_argument("--half-width", dest="half_width", type=float, default=25e-6)
    s.set_defaults(func=cmd_field_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except (ClosureError, NoStallError) as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
