"""Reference trajectories built from XY waypoints.

Only the global positions of the reference are given; heading, yaw rate and
body-frame speeds are reconstructed from consecutive waypoints.
"""
from __future__ import annotations

import csv
from typing import NamedTuple

import numpy as np

from .errors import DegenerateWaypoint, EmptyTrajectory

_MIN_DISPLACEMENT = 1e-12


class Waypoint(NamedTuple):
    x_ref: float
    y_ref: float


class ReferenceState(NamedTuple):
    x: float
    y: float
    v_lon: float
    v_lat: float
    psi: float
    omega: float


def wrap_angle(a):
    """Map angles to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def _displacement(prev, cur):
    dx = float(cur[0]) - float(prev[0])
    dy = float(cur[1]) - float(prev[1])
    if np.hypot(dx, dy) < _MIN_DISPLACEMENT:
        raise DegenerateWaypoint(f"waypoints {tuple(prev)} and {tuple(cur)} coincide")
    return dx, dy


def heading_ref(prev, cur) -> float:
    """Four-quadrant heading of the displacement ``cur - prev``."""
    dx, dy = _displacement(prev, cur)
    return float(np.arctan2(dy, dx))


def yaw_rate_ref(psi_cur, psi_prev, t_s) -> float:
    return float(wrap_angle(psi_cur - psi_prev)) / t_s


def body_frame_speeds(prev, cur, psi_ref, t_s):
    """Displacement rotated into the reference body frame, divided by ``t_s``."""
    dx, dy = _displacement(prev, cur)
    c, s = np.cos(psi_ref), np.sin(psi_ref)
    x_b = c * dx + s * dy
    y_b = -s * dx + c * dy
    return x_b / t_s, y_b / t_s


def build_reference_window(waypoints, k, n, t_s):
    """Full reference states for steps ``k, ..., k + n``.

    Headings are unwrapped along the window so consecutive entries never
    differ by more than pi. Past the last waypoint the final reference is
    repeated with zero yaw rate.

    Returns
    -------
    list of ReferenceState, length ``n + 1``
    """
    wp = np.asarray(waypoints, dtype=float)
    if wp.size == 0:
        raise EmptyTrajectory("no waypoints given")
    wp = wp.reshape(-1, 2)
    last = len(wp) - 1

    def full_state(j):
        # heading of step j uses segment (j-1, j); the first waypoint borrows (0, 1)
        j = min(j, last)
        if last == 0:
            return ReferenceState(wp[0, 0], wp[0, 1], 0.0, 0.0, 0.0, 0.0)
        a, b = (j - 1, j) if j > 0 else (0, 1)
        psi = heading_ref(wp[a], wp[b])
        v, nu = body_frame_speeds(wp[a], wp[b], psi, t_s)
        if j > 1:
            psi_prev = heading_ref(wp[j - 2], wp[j - 1])
            om = yaw_rate_ref(psi, psi_prev, t_s)
        elif last >= 2:
            om = yaw_rate_ref(heading_ref(wp[1], wp[2]), psi, t_s)
        else:
            om = 0.0
        return ReferenceState(wp[j, 0], wp[j, 1], v, nu, psi, om)

    window = []
    psi_prev = None
    for i in range(n + 1):
        j = k + i
        ref = full_state(j)
        if j > last:
            ref = ref._replace(omega=0.0)
        if psi_prev is not None:
            ref = ref._replace(psi=psi_prev + float(wrap_angle(ref.psi - psi_prev)))
        psi_prev = ref.psi
        window.append(ref)
    return window


def window_array(window) -> np.ndarray:
    """Stack a reference window into an ``(len, 6)`` array."""
    return np.array([tuple(r) for r in window], dtype=float)


def circular_track(center, radius, speed, n_points, t_s, start_angle=0.0,
                   direction=1):
    """Waypoints on a circle, consecutive points ``speed * t_s`` apart in arc length.

    ``direction`` is +1 for counter-clockwise travel and -1 for clockwise.
    """
    if radius <= 0 or speed <= 0:
        raise ValueError("radius and speed must be positive")
    dtheta = direction * speed * t_s / radius
    theta = start_angle + dtheta * np.arange(n_points)
    cx, cy = center
    return np.column_stack([cx + radius * np.cos(theta), cy + radius * np.sin(theta)])


def load_waypoints_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"x", "y"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header 'x,y'")
        rows = [(float(r["x"]), float(r["y"])) for r in reader]
    return np.array(rows, dtype=float).reshape(-1, 2)


def save_waypoints_csv(path, waypoints):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"])
        for x, y in np.asarray(waypoints, dtype=float).reshape(-1, 2):
            writer.writerow([repr(float(x)), repr(float(y))])
