from dataclasses import replace

import numpy as np
import pytest

from lpvmpc import qp as qpmod
from lpvmpc.constraints import (BoxLimits, EllipseObstacle, TrustRegionConfig, box_rows,
                                horizon_rows, rate_rows)
from lpvmpc.controllers import (ControllerConfig, LpvMpcController, NmpcSqpController,
                                _obstacle_halfspaces, euler_rollout, init_scheduling,
                                make_controller, preset_config, shift_scheduling)
from lpvmpc.reference import build_reference_window, circular_track, window_array
from lpvmpc.vehicle import VehicleParams, euler_step, lpv_continuous, scheduling_of

T_S = 0.05


def _straight_refs(n, k=0, y=0.0):
    wps = np.column_stack([0.5 * np.arange(k + n + 3), np.full(k + n + 3, y)])
    return window_array(build_reference_window(wps, k, n, T_S))


def test_init_scheduling():
    p = init_scheduling([0, 0, 10, 0, 0, 0], [0, 0], 8)
    assert p.shape == (9, 4) and np.allclose(p, [10, 0, 0, 0])
    assert init_scheduling([0, 0, 10, 0, 0, 0], [0, 0], 1).shape == (2, 4)
    assert np.all(init_scheduling([0, 0, 0.5, 0, 0, 0], [0, 0], 3)[:, 0] == 1.0)


def test_shift_scheduling():
    p = np.arange(12.0).reshape(3, 4)
    assert np.array_equal(shift_scheduling(p), p[[1, 2, 2]])
    c = np.ones((4, 4))
    assert np.array_equal(shift_scheduling(c), c)


def test_config_validation():
    with pytest.raises(ValueError):
        ControllerConfig(kind="mpc")
    with pytest.raises(ValueError):
        ControllerConfig(horizon=0)
    with pytest.raises(ValueError):
        ControllerConfig(r=np.zeros(2))
    assert not ControllerConfig(kind="lpv_standard").uses_trust
    assert ControllerConfig().uses_trust


def test_presets():
    c1 = preset_config("scenario1", "lpv_trust")
    c2 = preset_config("scenario2", "nmpc_sqp", horizon=15)
    assert c1.q[2, 2] == 1 and c1.q[4, 4] == 10
    assert c2.q[2, 2] == 1000 and c2.horizon == 15 and c2.kind == "nmpc_sqp"
    with pytest.raises(KeyError):
        preset_config("scenario9")


@pytest.mark.parametrize("kind", ["lpv_trust", "lpv_standard"])
def test_lpv_equilibrium_on_straight(kind):
    n = 8
    ctrl = make_controller(ControllerConfig(kind=kind, horizon=n))
    refs = _straight_refs(n)
    u, plan, diag = ctrl.step(refs[0], np.zeros(2), refs)
    assert diag.feasible
    assert np.allclose(u, 0, atol=1e-4)
    assert np.abs(diag.slack).max() < 1e-6
    assert np.abs(plan.states[:, :2] - refs[:, :2]).max() < 1e-3


def test_lpv_plan_respects_obstacle_halfspace():
    n = 8
    cfg = ControllerConfig(horizon=n, obstacle_margin=0.0)
    ctrl = LpvMpcController(cfg)
    refs = _straight_refs(n)
    obs = EllipseObstacle(3.0, 0.0, 1.0, 0.6, side="left")
    u, plan, diag = ctrl.step(refs[0], np.zeros(2), refs, [obs])
    assert diag.feasible and diag.obstacle_active
    for i, hs in enumerate(_obstacle_halfspaces([obs], refs[1:], None, 0.0)[0]):
        if hs.active:
            assert hs.margin(*plan.states[i + 1, :2]) >= -1e-5


def test_lpv_first_step_embedding_is_exact():
    """The first predicted state is the Euler step, up to the scheduled steering angle."""
    n = 6
    ctrl = LpvMpcController(ControllerConfig(horizon=n, kind="lpv_standard"))
    wps = circular_track((0, 0), 30.0, 10.0, 40, T_S)
    refs = window_array(build_reference_window(wps, 0, n, T_S))
    z0 = refs[0] + np.array([0.1, -0.1, 0.2, 0.05, 0.01, 0.0])
    _, plan, _ = ctrl.step(z0, np.zeros(2), refs)
    u0 = plan.inputs[0]
    m = lpv_continuous(scheduling_of(z0, u0))
    assert np.allclose(z0 + T_S * (m.a @ z0 + m.b @ u0), euler_step(z0, u0), atol=1e-12)
    # steering enters the scheduling only through the lateral-speed row
    diff = np.abs(plan.states[1] - euler_step(z0, u0))
    assert diff[[0, 1, 2, 4, 5]].max() < 1e-9


def test_lpv_step_is_deterministic():
    n = 8
    refs = _straight_refs(n, y=0.3)
    z0 = refs[0] - np.array([0, 0.3, 0, 0, 0, 0])
    outs = []
    for _ in range(2):
        ctrl = LpvMpcController(ControllerConfig(horizon=n))
        u, plan, _ = ctrl.step(z0, np.zeros(2), refs)
        outs.append((u, plan.states))
    assert np.array_equal(outs[0][0], outs[1][0]) and np.array_equal(outs[0][1], outs[1][1])


def test_lpv_matches_independent_qp_without_trust():
    n = 5
    par = VehicleParams()
    cfg = ControllerConfig(kind="lpv_standard", horizon=n)
    ctrl = LpvMpcController(cfg)
    refs = _straight_refs(n, y=0.2)
    z0 = refs[0] + np.array([0, -0.2, 0.5, 0, 0.02, 0])
    u_prev = np.array([0.01, 0.2])
    ctrl.step(z0, u_prev, refs)
    qp = ctrl.last_qp

    # rebuild with explicit loops: constant scheduling from (z0, u_prev)
    p = scheduling_of(z0, u_prev)
    m = lpv_continuous(p, par)
    a, b = np.eye(6) + T_S * m.a, T_S * m.b
    gam = np.zeros((6 * n, 2 * n))
    phi = np.zeros((6 * n, 6))
    for i in range(n):
        phi[6 * i:6 * i + 6] = np.linalg.matrix_power(a, i + 1)
        for j in range(i + 1):
            gam[6 * i:6 * i + 6, 2 * j:2 * j + 2] = np.linalg.matrix_power(a, i - j) @ b
    q_bar = np.kron(np.eye(n), cfg.q)
    r_bar = np.kron(np.eye(n), cfg.r)
    hess = 2 * (gam.T @ q_bar @ gam + r_bar)
    lin = 2 * gam.T @ q_bar @ (phi @ z0 - refs[1:].ravel())
    assert np.allclose(qp.hessian, hess, rtol=1e-10, atol=1e-10)
    assert np.allclose(qp.linear, lin, rtol=1e-10, atol=1e-8)


def test_lpv_infeasible_step_holds_input():
    n = 4
    # rate limit of zero and an acceleration box that excludes the previous input
    limits = BoxLimits(a_lon=(0.5, 2.0), a_rate=0.0)
    ctrl = LpvMpcController(ControllerConfig(horizon=n, kind="lpv_standard", limits=limits))
    refs = _straight_refs(n)
    u, _, diag = ctrl.step(refs[0], np.array([0.0, 0.0]), refs)
    assert not diag.feasible
    assert np.allclose(u, [0.0, 0.5])


def test_scheduling_error_shrinks_with_trust_radius():
    n = 8
    wps = circular_track((0, 0), 20.0, 10.0, 80, T_S)
    errs = []
    for e in (np.inf, 0.5, 0.1):
        trust = TrustRegionConfig(e_z_max=[e, e, e], e_u_max=e)
        ctrl = LpvMpcController(ControllerConfig(horizon=n, trust=trust))
        z = window_array(build_reference_window(wps, 0, n, T_S))[0] + [0, 0.5, 0, 0, 0, 0]
        u = np.zeros(2)
        worst = 0.0
        for k in range(30):
            refs = window_array(build_reference_window(wps, k, n, T_S))
            u, _, diag = ctrl.step(z, u, refs)
            if k:
                worst = max(worst, diag.scheduling_error)
            z = euler_step(z, u)
        errs.append(worst)
    assert errs[0] >= errs[1] >= errs[2]


def test_nmpc_equilibrium_converges_immediately():
    n = 8
    ctrl = NmpcSqpController(ControllerConfig(kind="nmpc_sqp", horizon=n))
    refs = _straight_refs(n)
    u, _, diag = ctrl.step(refs[0], np.zeros(2), refs)
    assert diag.status == qpmod.SOLVED and diag.sqp_iterations == 1
    assert np.allclose(u, 0, atol=1e-6)


def test_nmpc_plan_keeps_clear_of_obstacle():
    n = 10
    ctrl = NmpcSqpController(ControllerConfig(kind="nmpc_sqp", horizon=n, obstacle_margin=0.0))
    refs = _straight_refs(n)
    # the reference passes through the lower half of the ellipse
    obs = EllipseObstacle(5.0, -0.6, 1.0, 0.8, side="left")
    assert obs.level(refs[1:, 0], refs[1:, 1]).min() < 0
    u, plan, diag = ctrl.step(refs[0], np.zeros(2), refs, [obs])
    assert diag.status == qpmod.SOLVED
    assert obs.level(plan.states[1:, 0], plan.states[1:, 1]).min() >= -1e-6
    assert np.allclose(plan.states, euler_rollout(refs[0], plan.inputs, VehicleParams()))


def test_lpv_and_nmpc_plans_agree_on_circle():
    n = 8
    wps = circular_track((0, 0), 40.0, 10.0, 40, T_S)
    refs = window_array(build_reference_window(wps, 0, n, T_S))
    z0 = refs[0] + np.array([0.3, 0.0, 0.0, 0, 0.0, 0])
    plans = []
    for kind in ("lpv_trust", "nmpc_sqp"):
        ctrl = make_controller(ControllerConfig(kind=kind, horizon=n))
        _, plan, diag = ctrl.step(z0, np.zeros(2), refs)
        assert diag.feasible
        plans.append(plan.states[:, :2])
    travel = np.sqrt(np.mean(np.sum((plans[1] - z0[:2]) ** 2, axis=1)))
    gap = np.sqrt(np.mean(np.sum((plans[0] - plans[1]) ** 2, axis=1)))
    assert gap <= 0.1 * travel


def test_nmpc_survives_low_speed_start():
    n = 8
    cfg = ControllerConfig(kind="nmpc_sqp", horizon=n)
    ctrl = NmpcSqpController(cfg)
    refs = _straight_refs(n)
    z0 = refs[0].copy()
    z0[2], z0[3] = 3.0, 0.5
    u, _, diag = ctrl.step(z0, np.array([0.3, 0.0]), refs)
    lo, hi = cfg.limits.input_bounds()
    assert np.all(u >= lo) and np.all(u <= hi)
    assert diag.status in (qpmod.SOLVED, "not_converged", qpmod.INFEASIBLE)


def test_box_rows_used_by_controllers_match_limits():
    state, inp = box_rows(BoxLimits())
    poly = horizon_rows(state, inp, 2) + rate_rows([0, 0], 2)
    assert poly.n_rows == 2 * 16 + 8


def test_controller_reset_clears_state():
    n = 4
    ctrl = LpvMpcController(ControllerConfig(horizon=n))
    refs = _straight_refs(n)
    ctrl.step(refs[0], np.zeros(2), refs)
    assert ctrl.plan is not None
    ctrl.reset()
    assert ctrl.plan is None and ctrl.warm is None
    nm = NmpcSqpController(replace(ControllerConfig(horizon=n), kind="lpv_trust"))
    assert nm.cfg.kind == "nmpc_sqp"
