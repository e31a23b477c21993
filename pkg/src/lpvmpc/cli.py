"""Command-line front end.

Commands::

    lpvmpc run            simulate one scenario
    lpvmpc study          feasibility study, standard vs trust-region LPV MPC
    lpvmpc compare        trust-region LPV MPC vs NMPC-SQP timing and tracking
    lpvmpc dump-defaults  print the default configuration
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from .config import dump_defaults, load_config
from .controllers import KINDS
from .errors import LpvMpcError
from .sim import (feasibility_study, run_closed_loop, study_superset_holds, timing_report,
                  write_log_csv, write_plot_data_csv, write_study_csv, write_summary_csv,
                  write_timing_csv)
from .vehicle import IACC, IDELTA

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
COMPARE_SCHEMA = "lpvmpc-compare-v1"


def _load(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(controller=getattr(args, "controller", None), seed=args.seed,
                              horizon=args.horizon, trust=args.trust)


def _out_dir(args):
    os.makedirs(args.out_dir, exist_ok=True)
    return args.out_dir


def cmd_run(args):
    cfg = _load(args)
    scn = cfg.scenario()
    lg = run_closed_loop(scn)
    out = _out_dir(args)
    write_log_csv(os.path.join(out, "trajectory.csv"), lg)
    write_summary_csv(os.path.join(out, "summary.csv"), [lg])
    write_plot_data_csv(os.path.join(out, "plot_data.csv"), [lg], scn)
    s = lg.summary()
    print(f"{s['controller']} N={s['horizon']}: {s['steps']} steps, "
          f"{s['infeasible_steps']} infeasible, RMS XY error {s['rms_xy_error']:.4f} m, "
          f"avg solve {s['avg_solve_time']:.4f} s")
    if lg.aborted:
        print(f"run aborted: {lg.abort_reason}", file=sys.stderr)
        return EXIT_ERROR
    if lg.infeasible_steps:
        print(f"infeasible steps: {lg.infeasible_steps}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_study(args):
    cfg = _load(args)
    rows = feasibility_study(cfg.study_scenarios())
    write_study_csv(os.path.join(_out_dir(args), "study.csv"), rows)
    print(f"{'scenario':<10} {'N':>3} {'radius':>7} {'standard':>9} {'trust':>6}")
    for r in rows:
        radius = r.scenario.obstacles[0].rx if r.scenario.obstacles else float("nan")
        print(f"{r.scenario.name:<10} {r.scenario.controller.horizon:>3} {radius:>7.3f} "
              f"{str(r.standard_feasible):>9} {str(r.trust_feasible):>6}")
    n_std = sum(r.standard_feasible for r in rows)
    n_tr = sum(r.trust_feasible for r in rows)
    superset = study_superset_holds(rows)
    print(f"feasible: standard {n_std}/{len(rows)}, trust-region {n_tr}/{len(rows)}; "
          f"superset property {'holds' if superset else 'violated'}")
    return EXIT_OK if superset and n_tr == len(rows) else EXIT_INFEASIBLE


def cmd_compare(args):
    cfg = _load(args)
    logs = [run_closed_loop(cfg.scenario(kind, name=kind)) for kind in ("lpv_trust", "nmpc_sqp")]
    out = _out_dir(args)
    write_timing_csv(os.path.join(out, "compare_timing.csv"), timing_report(logs))
    write_summary_csv(os.path.join(out, "compare_summary.csv"), logs)
    n = min(len(lg.records) for lg in logs)
    t_s = logs[0].scenario.t_s
    with open(os.path.join(out, "compare_inputs.csv"), "w", newline="") as fh:
        fh.write(f"# {COMPARE_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["k", "t", *(f"{c}_{lg.kind}" for lg in logs for c in ("delta", "a_lon"))])
        for k in range(n):
            w.writerow([k, f"{k * t_s:.4f}", *(f"{lg.inputs[k, j]:.9g}" for lg in logs
                                               for j in (IDELTA, IACC))])
    for lg in logs:
        t = lg.solve_times
        print(f"{lg.kind:<10} avg {t.mean():.4f} s  max {t.max():.4f} s  min {t.min():.4f} s  "
              f"RMS XY {lg.rms_tracking_error:.4f} m  infeasible {lg.infeasible_steps}")
    ratio = logs[1].solve_times.mean() / max(logs[0].solve_times.mean(), np.finfo(float).tiny)
    print(f"NMPC-SQP / LPV average solve time ratio: {ratio:.1f}")
    return EXIT_INFEASIBLE if any(lg.infeasible_steps for lg in logs) else EXIT_OK


def cmd_dump_defaults(args):
    sys.stdout.write(dump_defaults())
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file (defaults when omitted)")
    common.add_argument("--out-dir", default="out", help="directory for CSV output")
    common.add_argument("--seed", type=int, help="override track and study seeds")
    common.add_argument("--horizon", type=int, help="override the prediction horizon")
    common.add_argument("--trust", choices=("on", "off"),
                        help="trust-region (on) or standard (off) LPV MPC")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lpvmpc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="simulate one scenario")
    p.add_argument("--controller", choices=KINDS)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("study", parents=[common], help="feasibility study")
    p.set_defaults(func=cmd_study)
    p = sub.add_parser("compare", parents=[common], help="LPV MPC vs NMPC-SQP")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("dump-defaults", help="print the default configuration")
    p.set_defaults(func=cmd_dump_defaults, config=None, seed=None, horizon=None, trust=None,
                   verbose=False)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (LpvMpcError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
