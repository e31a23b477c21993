"""Closed-loop simulation, the feasibility study and timing tables."""
from __future__ import annotations

import csv
import hashlib
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .constraints import EllipseObstacle, RoadBoundary
from .controllers import PRESETS, ControllerConfig, StepDiagnostics, make_controller, preset_config
from .errors import DomainError
from .reference import build_reference_window, circular_track, window_array
from .vehicle import IX, IY, NU, NX, rk4_step

log = logging.getLogger(__name__)

LOG_SCHEMA = "lpvmpc-trajectory-v1"
SUMMARY_SCHEMA = "lpvmpc-summary-v1"
STUDY_SCHEMA = "lpvmpc-study-v1"
TIMING_SCHEMA = "lpvmpc-timing-v1"


@dataclass
class Scenario:
    """Circular-road driving scenario.

    The reference runs along the road center line at ``speed``, starting at
    polar angle ``start_angle`` and travelling counter-clockwise when
    ``direction`` is +1.
    """

    name: str = "tracking"
    road: RoadBoundary = field(default_factory=lambda: RoadBoundary((100.0, 50.0), 50.0, -1.0, 4.0))
    speed: float = 10.0
    start_angle: float = np.pi
    direction: int = 1
    obstacles: list = field(default_factory=list)
    initial_state: np.ndarray = None
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    duration: int = 400
    perturbation: float = 0.0
    seed: int = 0
    plant_substeps: int = 5

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError("duration must be >= 1 step")
        if self.plant_substeps < 1:
            raise ValueError("plant_substeps must be >= 1")
        for obs in self.obstacles:
            if self.road.margin(obs.cx, obs.cy) < 0:
                raise ValueError(f"obstacle center ({obs.cx}, {obs.cy}) lies off the road")

    @property
    def t_s(self):
        return self.controller.params.t_s

    def waypoints(self):
        n = self.duration + self.controller.horizon + 2
        return circular_track(self.road.center, self.road.radius, self.speed, n, self.t_s,
                              self.start_angle, self.direction)

    def start_state(self):
        if self.initial_state is not None:
            return np.asarray(self.initial_state, dtype=float)
        ref = window_array(build_reference_window(self.waypoints(), 0, 1, self.t_s))[0]
        return ref.copy()


@dataclass
class StepRecord:
    k: int
    t: float
    state: np.ndarray
    input: np.ndarray
    reference: np.ndarray
    plan_hash: str
    diag: StepDiagnostics
    obstacle_margin: float
    road_margin: float
    step_time: float = 0.0


@dataclass
class TrajectoryLog:
    scenario: Scenario
    records: list = field(default_factory=list)
    aborted: bool = False
    abort_reason: str = ""

    @property
    def kind(self):
        return self.scenario.controller.kind

    @property
    def states(self):
        return np.array([r.state for r in self.records]).reshape(-1, NX)

    @property
    def inputs(self):
        return np.array([r.input for r in self.records]).reshape(-1, NU)

    @property
    def solve_times(self):
        return np.array([r.diag.solve_time for r in self.records])

    @property
    def step_times(self):
        return np.array([r.step_time for r in self.records])

    @property
    def infeasible_steps(self):
        return int(sum(1 for r in self.records if not r.diag.feasible))

    @property
    def feasible(self):
        return not self.aborted and self.infeasible_steps == 0

    @property
    def min_obstacle_margin(self):
        margins = [r.obstacle_margin for r in self.records]
        return float(min(margins)) if margins else np.inf

    @property
    def min_road_margin(self):
        margins = [r.road_margin for r in self.records]
        return float(min(margins)) if margins else np.inf

    @property
    def rms_tracking_error(self):
        if not self.records:
            return np.nan
        err = np.array([r.state[[IX, IY]] - r.reference[[IX, IY]] for r in self.records])
        return float(np.sqrt(np.mean(np.sum(err**2, axis=1))))

    def summary(self):
        times = self.solve_times
        return {
            "scenario": self.scenario.name,
            "controller": self.kind,
            "horizon": self.scenario.controller.horizon,
            "steps": len(self.records),
            "aborted": self.aborted,
            "infeasible_steps": self.infeasible_steps,
            "rms_xy_error": self.rms_tracking_error,
            "min_obstacle_margin": self.min_obstacle_margin,
            "min_road_margin": self.min_road_margin,
            "avg_solve_time": float(times.mean()) if times.size else np.nan,
            "max_solve_time": float(times.max()) if times.size else np.nan,
            "min_solve_time": float(times.min()) if times.size else np.nan,
            "avg_step_time": float(self.step_times.mean()) if times.size else np.nan,
            "qp_max_iter": self.scenario.controller.solver.max_iter,
            "qp_infeasible_streak": self.scenario.controller.solver.infeasible_streak,
        }


def _plan_hash(plan):
    h = hashlib.sha1()
    h.update(np.ascontiguousarray(plan.states).tobytes())
    h.update(np.ascontiguousarray(plan.inputs).tobytes())
    return h.hexdigest()[:12]


def obstacle_margin(obstacles, x, y):
    """Smallest ellipse level ``G(X, Y)`` over all obstacles (``inf`` without obstacles)."""
    if not obstacles:
        return np.inf
    return float(min(obs.level(x, y) for obs in obstacles))


def run_closed_loop(scn: Scenario, controller=None) -> TrajectoryLog:
    """Simulate ``scn.duration`` steps of controller plus RK4 plant.

    The plant integrates each sampling interval with ``scn.plant_substeps``
    RK4 substeps; a single step misses the fast lateral mode at low speed.
    """
    ctrl = controller or make_controller(scn.controller)
    plant = scn.controller.params.perturbed(scn.perturbation) if scn.perturbation else scn.controller.params
    n = scn.controller.horizon
    t_s = scn.t_s
    wps = scn.waypoints()
    z = scn.start_state()
    u_prev = np.zeros(NU)
    out = TrajectoryLog(scn)
    for k in range(scn.duration):
        refs = window_array(build_reference_window(wps, k, n, t_s))
        t0 = time.perf_counter()
        u, plan, diag = ctrl.step(z, u_prev, refs, scn.obstacles, scn.road)
        step_time = time.perf_counter() - t0
        out.records.append(StepRecord(
            k, k * t_s, z.copy(), u.copy(), refs[0].copy(), _plan_hash(plan), diag,
            obstacle_margin(scn.obstacles, z[IX], z[IY]),
            float(scn.road.margin(z[IX], z[IY])), step_time,
        ))
        try:
            for _ in range(scn.plant_substeps):
                z = rk4_step(z, u, plant, t_s / scn.plant_substeps)
        except DomainError as exc:
            out.aborted = True
            out.abort_reason = str(exc)
            log.warning("scenario %s aborted at step %d: %s", scn.name, k, exc)
            break
        u_prev = u
    return out


def generate_study_scenarios(count=10, seed=42, radii=(0.7, 1.4), horizons=(8, 15),
                             base: Scenario = None, lateral_offset=0.5, preset="scenario1",
                             arc_range=(20.0, 40.0)):
    """Seeded stand-in suite of obstacle scenarios on a circular road.

    Each scenario places one circular obstacle near the reference path with a
    random radius, horizon, lateral offset and arc position ``arc_range``
    metres ahead of the start. The obstacle is passed on the wide side of
    the road. Controller settings come from ``base`` when it is given and
    from the ``preset`` weights otherwise.
    """
    rng = np.random.default_rng(seed)
    base_given = base is not None
    base = base or Scenario(duration=140)
    road = base.road
    out = []
    for j in range(count):
        radius = float(rng.uniform(*radii))
        horizon = int(rng.choice(horizons))
        arc = float(rng.uniform(*arc_range))
        offset = float(rng.uniform(-lateral_offset, lateral_offset))
        theta = base.start_angle + base.direction * arc / road.radius
        rad = road.radius + offset
        cx = float(road.center[0] + rad * np.cos(theta))
        cy = float(road.center[1] + rad * np.sin(theta))
        side = "right" if base.direction > 0 else "left"
        if road.r2 < -road.r1:
            side = "left" if side == "right" else "right"
        obs = EllipseObstacle(cx, cy, radius, radius, side)
        cfg = replace(base.controller, horizon=horizon) if base_given else \
            preset_config(preset, "lpv_trust", horizon=horizon)
        out.append(replace(base, name=f"study-{j:02d}", obstacles=[obs], controller=cfg,
                           seed=seed + j))
    return out


def comparison_scenarios(kind="lpv_trust", horizon=8, tracking_steps=400, obstacle_steps=200):
    """Reference-tracking and obstacle-avoidance scenarios for both weight presets.

    The obstacle is a 1 m circle on the reference path 30 m ahead of the
    start, passed on the wide side of the road.
    """
    out = []
    for preset in ("scenario1", "scenario2"):
        r1, r2 = PRESETS[preset]["road"]
        road = RoadBoundary((100.0, 50.0), 50.0, r1, r2)
        cfg = preset_config(preset, kind, horizon=horizon)
        base = Scenario(name=f"tracking-{preset[-1]}", road=road, controller=cfg,
                        duration=tracking_steps)
        out.append(base)
        theta = base.start_angle + base.direction * 30.0 / road.radius
        obs = EllipseObstacle(road.center[0] + road.radius * np.cos(theta),
                              road.center[1] + road.radius * np.sin(theta), 1.0, 1.0, "right")
        out.append(replace(base, name=f"obstacle-{preset[-1]}", obstacles=[obs],
                           duration=obstacle_steps))
    return out


@dataclass
class StudyRow:
    scenario: Scenario
    standard: TrajectoryLog
    trust: TrajectoryLog

    @property
    def standard_feasible(self):
        return self.standard.feasible

    @property
    def trust_feasible(self):
        return self.trust.feasible


def feasibility_study(scenarios):
    """Run every scenario with the standard and the trust-region LPV MPC."""
    rows = []
    for scn in scenarios:
        logs = {}
        for kind in ("lpv_standard", "lpv_trust"):
            cfg = replace(scn.controller, kind=kind, trust=replace(scn.controller.trust,
                                                                  enabled=kind == "lpv_trust"))
            logs[kind] = run_closed_loop(replace(scn, controller=cfg))
            log.info("%s %s: infeasible steps %d", scn.name, kind, logs[kind].infeasible_steps)
        rows.append(StudyRow(scn, logs["lpv_standard"], logs["lpv_trust"]))
    return rows


def study_superset_holds(rows):
    """Every scenario the standard controller completes is also completed with the trust region."""
    return all(r.trust_feasible for r in rows if r.standard_feasible)


def timing_report(logs, classify=None):
    """Average, maximum and minimum solve time per (controller, scenario class).

    ``classify(log)`` maps a log to a class label; by default logs with
    obstacles are 'obstacle' and the rest 'tracking'. Groups without logs
    are omitted.
    """
    if not logs:
        raise ValueError("timing_report needs at least one log")
    classify = classify or (lambda lg: "obstacle" if lg.scenario.obstacles else "tracking")
    groups = {}
    for lg in logs:
        times = lg.solve_times
        if times.size == 0:
            continue
        groups.setdefault((lg.kind, classify(lg)), []).append(times)
    table = []
    for (kind, cls), chunks in sorted(groups.items()):
        t = np.concatenate(chunks)
        table.append({"controller": kind, "class": cls, "avg": round(float(t.mean()), 4),
                      "max": round(float(t.max()), 4), "min": round(float(t.min()), 4),
                      "samples": int(t.size)})
    return table


# -- CSV output -------------------------------------------------------------

LOG_COLUMNS = ["k", "t", "X", "Y", "v_lon", "v_lat", "psi", "omega", "delta", "a_lon",
               "X_ref", "Y_ref", "status", "objective", "slack_v", "slack_nu", "slack_psi",
               "slack_delta", "solve_time", "obstacle_active", "scheduling_error",
               "committed_violation", "obstacle_margin", "road_margin", "step_time", "plan_hash"]


def write_log_csv(path, lg: TrajectoryLog, include_timing=True):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {LOG_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for r in lg.records:
            d = r.diag
            w.writerow([r.k, f"{r.t:.4f}", *(f"{v:.9g}" for v in r.state),
                        *(f"{v:.9g}" for v in r.input), f"{r.reference[IX]:.9g}",
                        f"{r.reference[IY]:.9g}", d.status, f"{d.objective:.9g}",
                        *(f"{v:.6g}" for v in d.slack),
                        f"{d.solve_time:.6f}" if include_timing else "",
                        int(d.obstacle_active), f"{d.scheduling_error:.6g}", f"{d.committed_violation:.6g}",
                        f"{r.obstacle_margin:.9g}", f"{r.road_margin:.9g}",
                        f"{r.step_time:.6f}" if include_timing else "", r.plan_hash])


def write_summary_csv(path, logs, include_timing=True):
    rows = [lg.summary() for lg in logs]
    cols = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        fh.write(f"# {SUMMARY_SCHEMA}\n")
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            if not include_timing:
                row = {k: ("" if "time" in k else v) for k, v in row.items()}
            w.writerow(row)


def write_plot_data_csv(path, logs, scn: Scenario):
    """Point series for plotting: driven paths, road edges and obstacle outlines."""
    with open(path, "w", newline="") as fh:
        fh.write("# lpvmpc-plot-v1\n")
        w = csv.writer(fh)
        w.writerow(["series", "index", "x", "y"])
        wps = scn.waypoints()[: scn.duration]
        for i, (x, y) in enumerate(wps):
            w.writerow(["reference", i, f"{x:.6f}", f"{y:.6f}"])
        inner, outer = scn.road.edges()
        for name, pts in (("road_inner", inner), ("road_outer", outer)):
            for i, (x, y) in enumerate(pts):
                w.writerow([name, i, f"{x:.6f}", f"{y:.6f}"])
        for j, obs in enumerate(scn.obstacles):
            for i, (x, y) in enumerate(obs.outline()):
                w.writerow([f"obstacle_{j}", i, f"{x:.6f}", f"{y:.6f}"])
        for lg in logs:
            for i, s in enumerate(lg.states):
                w.writerow([f"path_{lg.kind}", i, f"{s[IX]:.6f}", f"{s[IY]:.6f}"])


def write_study_csv(path, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {STUDY_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["scenario", "horizon", "obstacle_radius", "standard_feasible",
                    "trust_feasible", "standard_infeasible_steps", "trust_infeasible_steps",
                    "trust_min_obstacle_margin"])
        for r in rows:
            obs = r.scenario.obstacles[0] if r.scenario.obstacles else None
            w.writerow([r.scenario.name, r.scenario.controller.horizon,
                        f"{obs.rx:.4f}" if obs else "", int(r.standard_feasible),
                        int(r.trust_feasible), r.standard.infeasible_steps,
                        r.trust.infeasible_steps, f"{r.trust.min_obstacle_margin:.6g}"])


def write_timing_csv(path, table):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {TIMING_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["controller", "class", "stat", "seconds"])
        for row in table:
            for stat in ("avg", "max", "min"):
                w.writerow([row["controller"], row["class"], stat, f"{row[stat]:.4f}"])
