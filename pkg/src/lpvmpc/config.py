"""Scenario configuration files.

A configuration is a YAML mapping with the sections ``vehicle``, ``track``,
``obstacles``, ``controller``, ``trust``, ``solver`` and ``study``. Every key
is optional and falls back to :data:`DEFAULTS`; unknown keys are errors.
All quantities are SI (m, s, rad, kg, N/rad).
"""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from . import qp as qpmod
from .constraints import BoxLimits, EllipseObstacle, RoadBoundary, TrustRegionConfig
from .controllers import KINDS, PRESETS, ControllerConfig, preset_config
from .errors import ConfigError
from .sim import Scenario, generate_study_scenarios
from .vehicle import VehicleParams

log = logging.getLogger(__name__)

DEFAULTS = {
    "vehicle": {"c_alpha_f": 156e3, "c_alpha_r": 193e3, "l_f": 1.04, "l_r": 1.4,
                "i_z": 2937.0, "m": 1919.0, "t_s": 0.05},
    # r1/r2 of null take the road offsets of the controller preset
    "track": {"center": [100.0, 50.0], "radius": 50.0, "r1": None, "r2": None,
              "speed": 10.0, "start_angle": math.pi, "direction": 1, "duration": 400,
              "perturbation": 0.0, "seed": 0, "initial_state": None},
    "obstacles": [],
    # q/r/p of null take the preset weights for the chosen kind; p defaults to q
    "controller": {"kind": "lpv_trust", "preset": "scenario1", "horizon": 8, "q": None,
                   "r": None, "p": None, "obstacle_margin": 0.3, "sqp_max_iter": 20,
                   "sqp_tol": 1e-4},
    "trust": {"e_z_max": [0.5, 0.3, 0.1], "e_u_max": 0.05, "e_p": [1e3, 1e3, 1e3, 1e3]},
    "solver": {"rho": 0.1, "sigma": 1e-6, "alpha": 1.6, "eps_abs": 1e-6, "eps_rel": 1e-6,
               "eps_pinf": 1e-5, "max_iter": 4000, "check_every": 5, "adapt_every": 25,
               "infeasible_streak": 50, "scaling_iters": 10, "polish": True},
    "study": {"count": 10, "seed": 42, "radii": [0.7, 1.4], "horizons": [8, 15],
              "duration": 140, "arc_range": [20.0, 40.0], "lateral_offset": 0.5},
}

OBSTACLE_KEYS = {"cx": None, "cy": None, "rx": None, "ry": None, "side": "left"}

# keys that must be strictly positive
_POSITIVE = {
    ("vehicle", k) for k in DEFAULTS["vehicle"]
} | {("track", "radius"), ("track", "speed"), ("track", "duration"), ("controller", "horizon"),
     ("controller", "sqp_max_iter"), ("controller", "sqp_tol"), ("solver", "rho"),
     ("solver", "max_iter"), ("solver", "eps_abs"), ("solver", "eps_rel"),
     ("study", "count"), ("study", "duration")}

_FREE_LENGTH = {("study", "horizons")}

STUDY_RADII = (0.7, 1.4)


def _fmt(path):
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def _to_python(node, path, lines):
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for knode, vnode in node.value:
            key = knode.value
            if key in out:
                raise ConfigError("duplicate key", _fmt(path + (key,)), knode.start_mark.line + 1)
            out[key] = _to_python(vnode, path + (key,), lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_python(v, path + (i,), lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


@dataclass
class RunConfig:
    """Validated settings with defaults filled in."""

    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    lines: dict = field(default_factory=dict)

    def line(self, *path):
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return None

    # -- builders ------------------------------------------------------------

    def vehicle(self) -> VehicleParams:
        return VehicleParams(**self.data["vehicle"])

    def road(self) -> RoadBoundary:
        t = self.data["track"]
        preset_road = PRESETS[self.data["controller"]["preset"]]["road"]
        r1 = preset_road[0] if t["r1"] is None else t["r1"]
        r2 = preset_road[1] if t["r2"] is None else t["r2"]
        try:
            return RoadBoundary(tuple(t["center"]), t["radius"], r1, r2)
        except ValueError as exc:
            raise ConfigError(str(exc), "track", self.line("track")) from exc

    def obstacles(self):
        out = []
        for i, o in enumerate(self.data["obstacles"]):
            try:
                out.append(EllipseObstacle(o["cx"], o["cy"], o["rx"], o["ry"], o["side"]))
            except ValueError as exc:
                raise ConfigError(str(exc), f"obstacles[{i}]", self.line("obstacles", i)) from exc
        return out

    def controller(self, kind=None) -> ControllerConfig:
        c = self.data["controller"]
        kind = kind or c["kind"]
        params = self.vehicle()
        tr = self.data["trust"]
        trust = TrustRegionConfig(np.array(tr["e_z_max"], float), float(tr["e_u_max"]),
                                  np.diag(np.array(tr["e_p"], float)), kind == "lpv_trust")
        over = dict(horizon=c["horizon"], trust=trust, params=params,
                    limits=BoxLimits.for_sampling_time(params.t_s),
                    solver=qpmod.AdmmSettings(**self.data["solver"]),
                    obstacle_margin=c["obstacle_margin"], sqp_max_iter=c["sqp_max_iter"],
                    sqp_tol=c["sqp_tol"])
        for key in ("q", "r", "p"):
            if c[key] is not None:
                over[key] = np.array(c[key], dtype=float)
        try:
            return preset_config(c["preset"], kind, **over)
        except ValueError as exc:
            raise ConfigError(str(exc), "controller", self.line("controller")) from exc

    def scenario(self, kind=None, name="run") -> Scenario:
        t = self.data["track"]
        init = None if t["initial_state"] is None else np.array(t["initial_state"], float)
        try:
            return Scenario(name=name, road=self.road(), speed=t["speed"],
                            start_angle=t["start_angle"], direction=t["direction"],
                            obstacles=self.obstacles(), initial_state=init,
                            controller=self.controller(kind), duration=t["duration"],
                            perturbation=t["perturbation"], seed=t["seed"])
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), "track", self.line("track")) from exc

    def study_scenarios(self):
        s = self.data["study"]
        lo, hi = s["radii"]
        if lo < STUDY_RADII[0] or hi > STUDY_RADII[1]:
            log.warning("study radii [%g, %g] fall outside the reference range [%g, %g]",
                        lo, hi, *STUDY_RADII)
        base = replace(self.scenario(), duration=s["duration"], obstacles=[])
        return generate_study_scenarios(s["count"], s["seed"], (lo, hi), tuple(s["horizons"]),
                                        base, s["lateral_offset"], self.data["controller"]["preset"],
                                        tuple(s["arc_range"]))

    # -- overrides -----------------------------------------------------------

    def with_overrides(self, controller=None, seed=None, horizon=None, trust=None):
        """Copy with command-line overrides applied.

        ``trust`` is 'on' or 'off' and switches an LPV controller between the
        trust-region and the standard variant.
        """
        out = RunConfig(copy.deepcopy(self.data), dict(self.lines))
        c = out.data["controller"]
        if controller is not None:
            if controller not in KINDS:
                raise ConfigError(f"unknown controller kind {controller!r}", "controller.kind")
            c["kind"] = controller
        if horizon is not None:
            if horizon < 1:
                raise ConfigError("horizon must be >= 1", "controller.horizon")
            c["horizon"] = int(horizon)
        if seed is not None:
            out.data["track"]["seed"] = int(seed)
            out.data["study"]["seed"] = int(seed)
        if trust is not None:
            if c["kind"] == "nmpc_sqp":
                log.warning("--trust has no effect on nmpc_sqp")
            else:
                c["kind"] = "lpv_trust" if trust == "on" else "lpv_standard"
        return out


def _check_value(path, value, default, lines):
    line = lines.get(path)
    where = _fmt(path)
    if default is None or path in _FREE_LENGTH:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", where, line)
    elif isinstance(default, (int, float)):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", where, line)
        if isinstance(default, int) and not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", where, line)
        if not math.isfinite(value):
            raise ConfigError("value must be finite", where, line)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", where, line)
    elif isinstance(default, list):
        if not isinstance(value, list) or len(value) != len(default):
            raise ConfigError(f"expected a list of {len(default)} numbers", where, line)
        for i, v in enumerate(value):
            _check_value(path + (i,), v, default[i], lines)
    return value


def _check_numeric_list(path, value, lines, length=None):
    where, line = _fmt(path), lines.get(path)
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("expected numbers", where, line) from None
    if length is not None and arr.shape not in ((length,), (length, length)):
        raise ConfigError(f"expected {length} diagonal entries or a {length}x{length} matrix",
                          where, line)
    if not np.all(np.isfinite(arr)):
        raise ConfigError("values must be finite", where, line)
    return value


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text."""
    lines = {}
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed configuration: {getattr(exc, 'problem', exc)}", "",
                          mark.line + 1 if mark else None) from None
    raw = {} if node is None else _to_python(node, (), lines)
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping", "", 1)
    data = copy.deepcopy(DEFAULTS)
    for section, body in raw.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section (expected one of {sorted(DEFAULTS)})", section,
                              lines.get((section,)))
        if section == "obstacles":
            data["obstacles"] = _parse_obstacles(body, lines)
            continue
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError("section must be a mapping", section, lines.get((section,)))
        for key, value in body.items():
            path = (section, key)
            if key not in DEFAULTS[section]:
                raise ConfigError("unknown key", _fmt(path), lines.get(path))
            if value is None:
                data[section][key] = DEFAULTS[section][key]
                continue
            data[section][key] = _check_value(path, value, DEFAULTS[section][key], lines)
            if path in _POSITIVE and not value > 0:
                raise ConfigError(f"must be > 0, got {value}", _fmt(path), lines.get(path))
    _cross_checks(data, lines)
    return RunConfig(data, lines)


def _parse_obstacles(body, lines):
    if body is None:
        return []
    if not isinstance(body, list):
        raise ConfigError("expected a list of obstacles", "obstacles", lines.get(("obstacles",)))
    out = []
    for i, item in enumerate(body):
        base = ("obstacles", i)
        if not isinstance(item, dict):
            raise ConfigError("obstacle must be a mapping", _fmt(base), lines.get(base))
        ob = dict(OBSTACLE_KEYS)
        for key, value in item.items():
            path = base + (key,)
            if key not in OBSTACLE_KEYS:
                raise ConfigError("unknown key", _fmt(path), lines.get(path))
            if key == "side":
                if value not in ("left", "right"):
                    raise ConfigError(f"side must be 'left' or 'right', got {value!r}",
                                      _fmt(path), lines.get(path))
            else:
                _check_value(path, value, 0.0, lines)
                if key in ("rx", "ry") and not value > 0:
                    raise ConfigError(f"must be > 0, got {value}", _fmt(path), lines.get(path))
            ob[key] = value
        missing = [k for k, v in ob.items() if v is None]
        if missing:
            raise ConfigError(f"missing keys {missing}", _fmt(base), lines.get(base))
        out.append(ob)
    return out


def _cross_checks(data, lines):
    c = data["controller"]
    if c["kind"] not in KINDS:
        raise ConfigError(f"unknown controller kind {c['kind']!r}; expected one of {KINDS}",
                          "controller.kind", lines.get(("controller", "kind")))
    if c["preset"] not in PRESETS:
        raise ConfigError(f"unknown preset {c['preset']!r}; expected one of {sorted(PRESETS)}",
                          "controller.preset", lines.get(("controller", "preset")))
    for key, n in (("q", 6), ("r", 2), ("p", 6)):
        if c[key] is not None:
            _check_numeric_list(("controller", key), c[key], lines, n)
    t = data["track"]
    if t["direction"] not in (1, -1):
        raise ConfigError("direction must be 1 or -1", "track.direction",
                          lines.get(("track", "direction")))
    if t["initial_state"] is not None:
        _check_numeric_list(("track", "initial_state"), t["initial_state"], lines, 6)
        if len(np.shape(t["initial_state"])) != 1:
            raise ConfigError("expected 6 numbers", "track.initial_state",
                              lines.get(("track", "initial_state")))
    tr = data["trust"]
    if any(v < 0 for v in tr["e_z_max"]) or tr["e_u_max"] < 0:
        raise ConfigError("trust-region bounds must be >= 0", "trust", lines.get(("trust",)))
    if any(v < 0 for v in tr["e_p"]):
        raise ConfigError("slack weights must be >= 0", "trust.e_p", lines.get(("trust", "e_p")))
    s = data["study"]
    lo, hi = s["radii"]
    if not 0 < lo <= hi:
        raise ConfigError("need 0 < radii[0] <= radii[1]", "study.radii",
                          lines.get(("study", "radii")))
    a0, a1 = s["arc_range"]
    if not 0 <= a0 <= a1:
        raise ConfigError("need 0 <= arc_range[0] <= arc_range[1]", "study.arc_range",
                          lines.get(("study", "arc_range")))
    if not isinstance(s["horizons"], list) or not s["horizons"] or any(
            isinstance(h, bool) or not isinstance(h, int) or h < 1 for h in s["horizons"]):
        raise ConfigError("horizons must be a nonempty list of positive integers",
                          "study.horizons", lines.get(("study", "horizons")))


def load_config(path=None) -> RunConfig:
    """Read a configuration file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    with open(path) as fh:
        return parse_config(fh.read())


def dump_defaults() -> str:
    """Default configuration as YAML text."""
    header = "# lpvmpc configuration; every key is optional. SI units throughout.\n"
    return header + yaml.safe_dump(DEFAULTS, sort_keys=False, default_flow_style=None, width=100)
