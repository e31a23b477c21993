"""Solve time of LPV MPC against NMPC-SQP.

The LPV controller solves one QP per step. The NMPC baseline relinearizes
the model and solves a QP for every SQP iteration, so it is expected to be
several times slower on the same problem. Times are wall-clock seconds on
this machine, grouped by controller and scenario class.
"""
from lpvmpc import run_closed_loop, timing_report
from lpvmpc.sim import comparison_scenarios

logs = []
for kind in ("lpv_trust", "nmpc_sqp"):
    for scn in comparison_scenarios(kind, horizon=8, tracking_steps=200, obstacle_steps=200):
        logs.append(run_closed_loop(scn))

print(f"{'controller':<10} {'class':<9} {'avg':>8} {'max':>8} {'min':>8}")
for row in timing_report(logs):
    print(f"{row['controller']:<10} {row['class']:<9} {row['avg']:>8.4f} {row['max']:>8.4f} "
          f"{row['min']:>8.4f}")

lpv = [lg.solve_times.mean() for lg in logs if lg.kind == "lpv_trust"]
nmpc = [lg.solve_times.mean() for lg in logs if lg.kind == "nmpc_sqp"]
for lg, a, b in zip(logs, lpv, nmpc):
    print(f"{lg.scenario.name:<11} NMPC / LPV = {b / a:.1f}")
