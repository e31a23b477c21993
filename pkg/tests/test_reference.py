import numpy as np
import pytest

from lpvmpc.errors import DegenerateWaypoint, EmptyTrajectory
from lpvmpc.reference import (body_frame_speeds, build_reference_window, circular_track,
                              heading_ref, load_waypoints_csv, save_waypoints_csv, window_array,
                              wrap_angle, yaw_rate_ref)

T_S = 0.05


@pytest.mark.parametrize("cur, psi", [((1, 0), 0.0), ((0, 1), np.pi / 2), ((-1, 0), np.pi)])
def test_heading(cur, psi):
    assert heading_ref((0, 0), cur) == pytest.approx(psi)


def test_heading_degenerate():
    with pytest.raises(DegenerateWaypoint):
        heading_ref((1, 1), (1, 1))


def test_yaw_rate():
    assert yaw_rate_ref(0.1, 0.1, T_S) == 0
    assert yaw_rate_ref(0.2, 0.1, T_S) == pytest.approx(2.0)
    # shortest angle through +-pi
    assert yaw_rate_ref(-np.pi + 0.01, np.pi - 0.01, T_S) == pytest.approx(0.4)


def test_wrap_angle_range():
    a = np.linspace(-20, 20, 1001)
    w = wrap_angle(a)
    assert np.all(w >= -np.pi) and np.all(w < np.pi)
    assert np.allclose(np.cos(w), np.cos(a)) and np.allclose(np.sin(w), np.sin(a))


def test_body_frame_speeds():
    assert np.allclose(body_frame_speeds((0, 0), (0.5, 0), 0.0, T_S), (10, 0))
    assert np.allclose(body_frame_speeds((0, 0), (0, 0.5), np.pi / 2, T_S), (10, 0))


def test_straight_line_window():
    wps = np.column_stack([0.5 * np.arange(30), np.zeros(30)])
    win = window_array(build_reference_window(wps, 3, 8, T_S))
    assert win.shape == (9, 6)
    assert np.allclose(win[:, 2:], [[10, 0, 0, 0]] * 9)
    assert np.allclose(win[:, 0], 0.5 * np.arange(3, 12))


def test_circle_window_constant_speed_and_rate():
    radius, speed = 50.0, 10.0
    wps = circular_track((0, 0), radius, speed, 200, T_S)
    win = window_array(build_reference_window(wps, 20, 15, T_S))
    # chord vs arc: the reconstruction is exact for the chord length
    chord = 2 * radius * np.sin(speed * T_S / (2 * radius))
    assert np.allclose(win[:, 2], chord / T_S, rtol=1e-12)
    assert np.allclose(win[:, 3], 0.0, atol=1e-9)
    assert np.allclose(win[:, 5], speed / radius, rtol=1e-9)


def test_circle_heading_is_tangent():
    wps = circular_track((0, 0), 50.0, 10.0, 100, T_S)
    win = window_array(build_reference_window(wps, 10, 5, T_S))
    # the heading of segment (j-1, j) is the tangent at the midpoint of the arc
    theta = np.arctan2(win[:, 1], win[:, 0]) - 0.5 * 10 * T_S / 50
    assert np.allclose(wrap_angle(win[:, 4] - (theta + np.pi / 2)), 0, atol=1e-12)


def test_window_unwraps_heading():
    wps = circular_track((0, 0), 5.0, 10.0, 200, T_S)
    win = window_array(build_reference_window(wps, 0, 150, T_S))
    assert np.all(np.abs(np.diff(win[:, 4])) < np.pi)
    assert win[-1, 4] - win[0, 4] > 2 * np.pi


def test_window_padding():
    wps = np.column_stack([0.5 * np.arange(5), 0.1 * np.arange(5) ** 2])
    win = window_array(build_reference_window(wps, 3, 6, T_S))
    assert np.allclose(win[2:, :5], win[1, :5])
    assert np.all(win[2:, 5] == 0)


def test_empty_waypoints():
    with pytest.raises(EmptyTrajectory):
        build_reference_window(np.zeros((0, 2)), 0, 3, T_S)


def test_circular_track_geometry():
    wps = circular_track((0, 0), 50.0, 10.0, 20, T_S)
    assert np.allclose(wps[0], (50, 0))
    assert np.allclose(np.hypot(wps[:, 0], wps[:, 1]), 50)
    steps = np.hypot(*np.diff(wps, axis=0).T)
    assert np.allclose(steps, 0.5, rtol=1e-4)
    cw = circular_track((0, 0), 50.0, 10.0, 3, T_S, direction=-1)
    assert cw[1, 1] < 0


def test_circular_track_rejects_bad_radius():
    with pytest.raises(ValueError):
        circular_track((0, 0), 0.0, 10.0, 5, T_S)


def test_csv_round_trip(tmp_path):
    wps = circular_track((3, -2), 7.0, 10.0, 13, T_S)
    path = tmp_path / "wps.csv"
    save_waypoints_csv(path, wps)
    assert np.array_equal(load_waypoints_csv(path), wps)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        load_waypoints_csv(path)
