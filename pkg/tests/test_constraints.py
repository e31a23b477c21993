import numpy as np
import pytest

from lpvmpc.constraints import (HARD, N_SLACK, BoxLimits, EllipseObstacle, HalfspacePolytope,
                                ObstacleHalfspace, RoadBoundary, TrustRegionConfig, box_rows, horizon_rows,
                                obstacle_rows, obstacle_tangent, project_to_ellipse, rate_rows,
                                road_tangent_rows, tangent_from_point, traj_dim, trust_region_rows,
                                u_col, z_col)
from lpvmpc.errors import DegenerateGeometry


def _interval(poly, col):
    """Bounds implied on one trajectory column by single-column rows."""
    lo, hi = -np.inf, np.inf
    for g, h in zip(poly.g, poly.h):
        nz = np.flatnonzero(g)
        if list(nz) != [col]:
            continue
        if g[col] > 0:
            hi = min(hi, h / g[col])
        else:
            lo = max(lo, h / g[col])
    return lo, hi


def test_box_rows_steering():
    state, inp = box_rows()
    assert not inp.contains([0.6, 0.0])
    assert inp.contains([0.59, 0.0])
    assert 34 * np.pi / 180 == pytest.approx(0.5934, abs=1e-4)


def test_box_rows_acceleration_edge():
    _, inp = box_rows()
    assert inp.residual([0.0, -6.0]).max() == pytest.approx(0.0)
    assert not inp.contains([0.0, -6.01])


def test_box_state_bounds():
    state, _ = box_rows()
    assert state.contains([0, 0, 10, 0, 0, 0])
    assert not state.contains([0, 0, 0.5, 0, 0, 0])
    assert not state.contains([0, 0, 10, 0, 0, 21.0])


def test_omega_bound_follows_sampling_time():
    assert BoxLimits.for_sampling_time(0.1).omega_max == pytest.approx(np.pi / 0.3)


def test_rate_rows_from_rest():
    n = 3
    poly = rate_rows([0, 0], n)
    assert _interval(poly, u_col(0, 0, n)) == pytest.approx((-25 * np.pi / 180, 25 * np.pi / 180))
    assert _interval(poly, u_col(0, 1, n)) == pytest.approx((-1.5, 1.5))
    assert 25 * np.pi / 180 == pytest.approx(0.4363, abs=1e-4)


def test_rate_rows_intersect_box():
    n = 2
    rate = rate_rows([0.5, 0], n)
    box = horizon_rows(*box_rows(), n)
    lo_r, hi_r = _interval(rate, u_col(0, 0, n))
    lo_b, hi_b = _interval(box, u_col(0, 0, n))
    assert (lo_r, hi_r) == pytest.approx((0.0637, 0.9363), abs=1e-4)
    assert (max(lo_r, lo_b), min(hi_r, hi_b)) == pytest.approx((0.0637, 0.5934), abs=1e-4)


def test_rate_rows_later_steps_couple_inputs():
    n = 3
    poly = rate_rows([0, 0], n)
    w = np.zeros(traj_dim(n))
    w[u_col(1, 1, n)] = w[u_col(2, 1, n)] = 1.4
    assert poly.contains(w)
    w[u_col(2, 1, n)] = 3.0
    assert not poly.contains(w)


def test_horizon_rows_layout():
    n = 4
    state, inp = box_rows()
    poly = horizon_rows(state, inp, n)
    assert poly.g.shape == (n * (12 + 4), traj_dim(n))
    w = np.zeros(traj_dim(n))
    w[[z_col(i, 2, n) for i in range(n)]] = 10.0
    assert poly.contains(w)
    w[z_col(3, 2, n)] = 0.5
    assert not poly.contains(w)


def test_unit_circle_tangent():
    obs = EllipseObstacle(0, 0, 1, 1)
    assert tangent_from_point(obs, (1, 0)) == (1, 0, 1)


def test_ellipse_tangent():
    obs = EllipseObstacle(0, 0, 2, 1)
    assert tangent_from_point(obs, (2, 0)) == (2, 0, 4)


def test_tangent_inactive_without_intrusion():
    obs = EllipseObstacle(0, 0, 1, 1)
    ref = np.array([[5, 0, 10, 0, 0, 0], [5.5, 0, 10, 0, 0, 0]])
    hs = obstacle_tangent(obs, ref)
    assert not hs.active and hs.c3 == -np.inf


def test_tangent_excludes_interior_reference():
    obs = EllipseObstacle(10, 0.2, 1.2, 0.8, side="left")
    ref = np.array([[x, 0, 10, 0, 0, 0] for x in np.arange(7, 13, 0.5)])
    hs = obstacle_tangent(obs, ref)
    assert hs.active
    p = ref[hs.index, :2]
    assert hs.margin(*p) < 0
    assert obs.level(*hs.point) == pytest.approx(0.0, abs=1e-9 * obs.rx**2 * obs.ry**2)
    # the halfspace keeps the vehicle on the requested side
    assert hs.point[1] > p[1] - 1e-12


def test_projection_respects_side():
    obs = EllipseObstacle(0, 0, 1, 1, side="right")
    q = project_to_ellipse(obs, (0.2, 0.1), 0.0)
    assert q[1] < 0 and q[0] == pytest.approx(0.2)


def test_projection_uses_road_radial():
    road = RoadBoundary((0, -50), 50.0, -1, 4)
    obs = EllipseObstacle(0, 0, 1, 1, side="left")
    q = project_to_ellipse(obs, (0.3, 0.0), 0.0, road)
    radial = np.array([0.3, 50.0]) / np.hypot(0.3, 50)
    assert np.allclose((q - [0.3, 0]) / np.linalg.norm(q - [0.3, 0]), radial)


def test_level_scale_consistency():
    obs = EllipseObstacle(1, 2, 3, 0.5)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-5, 5, (100, 2))
    lv = obs.level(pts[:, 0], pts[:, 1])
    nl = obs.normalized_level(pts[:, 0], pts[:, 1])
    assert np.allclose(lv, nl * obs.rx**2 * obs.ry**2)


def test_obstacle_rows_map_to_states():
    n = 3
    obs = EllipseObstacle(0, 0, 1, 1)
    hs = tangent_from_point(obs, (1, 0))
    poly = obstacle_rows([None, ObstacleHalfspace(*hs, True, 0, (1, 0)), None], n)
    assert poly.n_rows == 1 and poly.tag == "obstacle"
    w = np.zeros(traj_dim(n))
    w[z_col(1, 0, n)] = 1.5
    assert poly.contains(w)
    w[z_col(1, 0, n)] = 0.5
    assert not poly.contains(w)


def test_road_rows_at_angle_zero():
    road = RoadBoundary((0, 0), 50, -1, 4)
    poly = road_tangent_rows(road, np.array([[50, 0, 10, 0, np.pi / 2, 0]]))
    assert _interval(poly, z_col(0, 0, 1)) == pytest.approx((49, 54))


def test_road_rows_at_quarter_turn():
    road = RoadBoundary((0, 0), 50, -1, 4)
    poly = road_tangent_rows(road, np.array([[0, 50, 10, 0, np.pi, 0]]))
    lo, hi = _interval(poly, z_col(0, 1, 1))
    assert (lo, hi) == pytest.approx((49, 54))


def test_road_rows_reject_radial_outliers():
    road = RoadBoundary((0, 0), 50, -1, 4)
    ref = np.array([[50, 0, 10, 0, 0, 0]])
    poly = road_tangent_rows(road, ref)
    w = np.zeros(traj_dim(1))
    w[z_col(0, 0, 1)] = 50 - 1 - 0.1
    assert not poly.contains(w)
    w[z_col(0, 0, 1)] = 50 + 4 + 0.1
    assert not poly.contains(w)
    w[z_col(0, 0, 1)] = 52
    assert poly.contains(w)


def test_road_rows_degenerate():
    with pytest.raises(DegenerateGeometry):
        road_tangent_rows(RoadBoundary(), np.zeros((1, 6)))


def test_road_validation():
    with pytest.raises(ValueError):
        RoadBoundary((0, 0), 50, 4, -1)


def test_trust_rows_soft_box():
    cfg = TrustRegionConfig(e_z_max=[0.1, 0.3, 0.1])
    z_hat = np.array([[0, 0, 10, 0, 0, 0]])
    poly = trust_region_rows(z_hat, np.array([[0.0, 0.0]]), cfg)
    assert poly.n_rows == 8
    assert np.all(poly.slack >= 0) and poly.slack.max() < N_SLACK
    v_rows = [k for k in range(poly.n_rows) if poly.g[k, z_col(0, 2, 1)] != 0]
    eps = np.zeros(N_SLACK)
    w = np.zeros(traj_dim(1))
    w[z_col(0, 2, 1)] = 10.15
    assert poly.residual(w, eps)[v_rows].max() > 0
    eps[0] = 0.05
    assert poly.residual(w, eps)[v_rows].max() <= 1e-12
    w[z_col(0, 2, 1)] = 9.9
    assert poly.residual(w, np.zeros(N_SLACK))[v_rows].max() <= 1e-12


def test_trust_rows_disabled():
    cfg = TrustRegionConfig(enabled=False)
    assert trust_region_rows(np.zeros((4, 6)), np.zeros((4, 2)), cfg).n_rows == 0


def test_trust_rows_zero_radius_is_slack_only():
    cfg = TrustRegionConfig(e_z_max=[0, 0, 0], e_u_max=0.0)
    z_hat = np.array([[0, 0, 10, 0.2, 0.1, 0]] * 2)
    u_hat = np.array([[0.05, 0]] * 2)
    poly = trust_region_rows(z_hat, u_hat, cfg)
    w = np.zeros(traj_dim(2))
    for i in range(2):
        w[z_col(i, 2, 2)], w[z_col(i, 3, 2)], w[z_col(i, 4, 2)] = 10, 0.2, 0.1
        w[u_col(i, 0, 2)] = 0.05
    assert poly.contains(w, tol=1e-12)
    w[z_col(1, 3, 2)] = 0.25
    assert not poly.contains(w)
    eps = np.zeros(2 * N_SLACK)
    eps[N_SLACK + 1] = 0.05
    assert poly.contains(w, tol=1e-12, eps=eps)


def test_trust_config_validation():
    with pytest.raises(ValueError):
        TrustRegionConfig(e_z_max=[-1, 0, 0])
    with pytest.raises(ValueError):
        TrustRegionConfig(e_p=-np.eye(4))
    assert TrustRegionConfig(e_p=[1, 2, 3, 4]).e_p.shape == (4, 4)


def test_polytope_stacking():
    a = HalfspacePolytope(np.eye(2), [1, 1])
    b = HalfspacePolytope(-np.eye(2), [0, 0])
    s = a + b
    assert s.n_rows == 4 and np.all(s.slack == HARD)
    assert s.contains([0.5, 0.5]) and not s.contains([-0.1, 0.5])
    with pytest.raises(ValueError):
        a + HalfspacePolytope(np.eye(3), [1, 1, 1])


def test_ellipse_validation():
    with pytest.raises(ValueError):
        EllipseObstacle(0, 0, -1, 1)
    with pytest.raises(ValueError):
        EllipseObstacle(0, 0, 1, 1, side="up")
