import numpy as np
import pytest

from lpvmpc.errors import DomainError
from lpvmpc.vehicle import (IOMEGA, INU, VehicleParams, dynamics_jacobians, dynamics_rhs,
                            euler_step, lpv_continuous, lpv_discrete, lpv_discretize, rk4_step,
                            scheduling_of, LpvMatrices)

from oracles import bicycle_rhs, fine_flow

PAR = VehicleParams()


def test_straight_coasting():
    assert np.allclose(dynamics_rhs([0, 0, 10, 0, 0, 0], [0, 0]), [10, 0, 0, 0, 0, 0])


def test_heading_rotates_velocity():
    f = dynamics_rhs([0, 0, 10, 0, np.pi / 2, 0], [0, 1])
    assert np.allclose(f, [0, 10, 1, 0, 0, 0], atol=1e-12)


def test_steering_response():
    f = dynamics_rhs([0, 0, 10, 0, 0, 0], [0.1, 0])
    assert f[INU] == pytest.approx(16.18, abs=5e-3)
    assert f[IOMEGA] == pytest.approx(11.05, abs=5e-3)
    assert np.allclose(f[[0, 1, 2, 4]], [10, 0, 0, 0])


def test_rhs_matches_independent_formula():
    rng = np.random.default_rng(0)
    for _ in range(50):
        z = [*rng.uniform(-5, 5, 2), rng.uniform(1, 40), rng.uniform(-3, 3),
             rng.uniform(-np.pi, np.pi), rng.uniform(-2, 2)]
        u = [rng.uniform(-0.5, 0.5), rng.uniform(-3, 3)]
        assert np.allclose(dynamics_rhs(z, u), bicycle_rhs(z, u), rtol=1e-13, atol=1e-12)


def test_speed_below_domain_raises():
    with pytest.raises(DomainError):
        dynamics_rhs([0, 0, 0.5, 0, 0, 0], [0, 0])
    with pytest.raises(DomainError):
        lpv_continuous((0.2, 0, 0, 0))


def test_euler_step_examples():
    assert np.allclose(euler_step([0, 0, 10, 0, 0, 0], [0, 0]), [0.5, 0, 10, 0, 0, 0])
    z = euler_step([0, 0, 10, 0, 0, 0], [0.1, 0])
    assert z[INU] == pytest.approx(0.8088, abs=5e-4)


def test_euler_step_is_definitional():
    z, u = np.array([3.0, -2, 12, 0.4, 0.3, -0.2]), np.array([0.05, 0.7])
    assert np.allclose(euler_step(z, u), z + PAR.t_s * dynamics_rhs(z, u))


def test_rk4_straight_is_exact():
    assert np.allclose(rk4_step([0, 0, 10, 0, 0, 0], [0, 0]), [0.5, 0, 10, 0, 0, 0])


def test_rk4_substeps_close_to_fine_integration():
    z0, u = [0, 0, 10, 0, 0, 0], [0.1, 0]
    exact = fine_flow(z0, u, PAR.t_s)
    # one step at t_s misses the fast lateral mode at 10 m/s; five substeps resolve it
    z = np.asarray(z0, float)
    for _ in range(5):
        z = rk4_step(z, u, PAR, PAR.t_s / 5)
    assert abs(z[INU] - exact[INU]) < 0.05 * abs(exact[INU])
    assert abs(z[IOMEGA] - exact[IOMEGA]) < 0.05 * abs(exact[IOMEGA])
    single = rk4_step(z0, u)
    assert abs(single[INU] - exact[INU]) < abs(euler_step(z0, u)[INU] - exact[INU])


@pytest.mark.parametrize("stepper, order", [(euler_step, 1), (rk4_step, 4)])
def test_convergence_order(stepper, order):
    z0, u = np.array([0, 0, 20, 0.2, 0.1, 0.05]), np.array([0.02, 0.5])
    errs = []
    for h in (0.004, 0.002):
        par = VehicleParams(t_s=h)
        z = z0
        for _ in range(int(round(0.02 / h))):
            z = stepper(z, u, par)
        errs.append(np.abs(z - fine_flow(z0, u, 0.02)).max())
    rate = np.log2(errs[0] / errs[1])
    assert rate > order - 0.3


def test_jacobians_vs_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(20):
        z = np.array([*rng.uniform(-5, 5, 2), rng.uniform(2, 40), rng.uniform(-3, 3),
                      rng.uniform(-np.pi, np.pi), rng.uniform(-2, 2)])
        u = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-3, 3)])
        jz, ju = dynamics_jacobians(z, u)
        h = 1e-6
        for j in range(6):
            e = np.zeros(6)
            e[j] = h
            fd = (dynamics_rhs(z + e, u) - dynamics_rhs(z - e, u)) / (2 * h)
            assert np.allclose(jz[:, j], fd, rtol=1e-6, atol=1e-6)
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (dynamics_rhs(z, u + e) - dynamics_rhs(z, u - e)) / (2 * h)
            assert np.allclose(ju[:, j], fd, rtol=1e-6, atol=1e-6)


def test_lpv_rotation_block():
    a = lpv_continuous((10, 0, 0, 0)).a
    assert a[0, 2] == 1 and a[0, 3] == 0 and a[1, 2] == 0 and a[1, 3] == 1


def test_lpv_carries_lateral_speed():
    assert lpv_continuous((10, 2, 0, 0)).a[2, 5] == 2


def test_lpv_lateral_damping():
    assert lpv_continuous((10, 0, 0.1, 0)).a[3, 3] == pytest.approx(-36.29, abs=5e-3)


def test_lpv_sparsity_pattern():
    rng = np.random.default_rng(2)
    for _ in range(10):
        m = lpv_continuous((rng.uniform(1, 50), rng.uniform(-3, 3), rng.uniform(-0.5, 0.5),
                            rng.uniform(-3, 3)))
        assert np.count_nonzero(m.a) <= 10
        assert np.all(m.a[:, [0, 1]] == 0)
        assert np.count_nonzero(m.b) == 3


def test_lpv_embedding_is_exact():
    rng = np.random.default_rng(3)
    for _ in range(200):
        z = np.array([*rng.uniform(-50, 50, 2), rng.uniform(1, 100), rng.uniform(-10, 10),
                      rng.uniform(-np.pi, np.pi), rng.uniform(-5, 5)])
        u = np.array([rng.uniform(-0.6, 0.6), rng.uniform(-6, 2)])
        m = lpv_continuous(scheduling_of(z, u))
        f = dynamics_rhs(z, u)
        assert np.abs(m.a @ z + m.b @ u - f).max() <= 1e-9 * max(1, np.abs(f).max())


def test_discretize():
    zero = LpvMatrices(np.zeros((6, 6)), np.zeros((6, 2)))
    assert np.array_equal(lpv_discretize(zero, 0.05).a, np.eye(6))
    m = lpv_discretize(lpv_continuous((10, 0, 0, 0)), 0.0)
    assert np.array_equal(m.a, np.eye(6)) and not m.b.any()
    d = lpv_discrete((10, 0, 0, 0))
    assert d.a[0, 2] == pytest.approx(0.05)
    with pytest.raises(ValueError):
        lpv_discretize(d, 0.05)


def test_discrete_step_matches_euler():
    z, u = np.array([1.0, 2, 15, 0.3, 0.4, 0.1]), np.array([0.05, 1.0])
    m = lpv_discrete(scheduling_of(z, u))
    assert np.allclose(m.a @ z + m.b @ u, euler_step(z, u), atol=1e-12)


def test_scheduling_projection_and_clamp():
    assert scheduling_of([0, 0, 10, 1, 0.2, 0], [0.05, 0]) == (10, 1, 0.05, 0.2)
    assert scheduling_of([0, 0, 0.5, 0, 0, 0], [0, 0]).v_lon == 1.0
    assert scheduling_of([0, 0, 150, 0, 0, 0], [0, 0]).v_lon == 100.0


def test_params_validation_and_perturbation():
    with pytest.raises(ValueError):
        VehicleParams(m=-1)
    p = PAR.perturbed(0.1)
    assert p.m == pytest.approx(1.1 * PAR.m) and p.l_f == PAR.l_f
