"""Dynamic bicycle model with linear tire forces and its exact LPV embedding.

State ordering is ``z = [X, Y, v_lon, v_lat, psi, omega]`` and input ordering
is ``u = [delta, a_lon]``. All functions accept plain arrays (or the named
tuples below) and return ``numpy`` arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import DomainError

NX = 6
NU = 2
V_MIN = 1.0
V_MAX = 100.0

IX, IY, IV, INU, IPSI, IOMEGA = range(NX)
IDELTA, IACC = range(NU)


@dataclass(frozen=True)
class VehicleParams:
    """Vehicle parameters; defaults are those of a 1919 kg passenger car."""

    c_alpha_f: float = 156e3
    c_alpha_r: float = 193e3
    l_f: float = 1.04
    l_r: float = 1.4
    i_z: float = 2937.0
    m: float = 1919.0
    t_s: float = 0.05

    def __post_init__(self):
        for name in ("c_alpha_f", "c_alpha_r", "l_f", "l_r", "i_z", "m", "t_s"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"VehicleParams.{name} must be > 0, got {value}")

    def perturbed(self, factor: float) -> "VehicleParams":
        """Scale cornering stiffnesses and mass by ``1 + factor``.

        Used to emulate mismatch between the controller model and the plant.
        """
        s = 1.0 + factor
        return replace(self, c_alpha_f=self.c_alpha_f * s,
                       c_alpha_r=self.c_alpha_r * s, m=self.m * s)

    @property
    def beta_f(self):
        return 2.0 * self.c_alpha_f / self.m

    @property
    def beta_r(self):
        return 2.0 * self.c_alpha_r / self.m

    @property
    def gamma_f(self):
        return 2.0 * self.l_f * self.c_alpha_f / self.i_z

    @property
    def gamma_r(self):
        return 2.0 * self.l_r * self.c_alpha_r / self.i_z


class VehicleState(NamedTuple):
    x: float
    y: float
    v_lon: float
    v_lat: float
    psi: float
    omega: float


class ControlInput(NamedTuple):
    delta: float
    a_lon: float


class SchedulingVector(NamedTuple):
    v_lon: float
    v_lat: float
    delta: float
    psi: float


@dataclass(frozen=True)
class LpvMatrices:
    a: np.ndarray
    b: np.ndarray
    discrete: bool = False


def _check_speed(v, what="v_lon"):
    if not v >= V_MIN:
        raise DomainError(f"{what}={v!r} is below the model minimum {V_MIN} m/s")


def slip_angles(z, u, par: VehicleParams = VehicleParams()):
    """Front and rear tire slip angles."""
    _, _, v, nu, _, om = z
    alpha_f = u[IDELTA] - (nu + par.l_f * om) / v
    alpha_r = (par.l_r * om - nu) / v
    return alpha_f, alpha_r


def dynamics_rhs(z, u, par: VehicleParams = VehicleParams()) -> np.ndarray:
    """Continuous-time state derivative of the bicycle model.

    Raises
    ------
    DomainError
        If the longitudinal speed is below ``V_MIN``.
    """
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    _, _, v, nu, psi, om = z
    _check_speed(v)
    delta, acc = u
    alpha_f, alpha_r = slip_angles(z, u, par)
    fyf = par.c_alpha_f * alpha_f
    fyr = par.c_alpha_r * alpha_r
    c, s = np.cos(psi), np.sin(psi)
    return np.array([
        v * c - nu * s,
        v * s + nu * c,
        om * nu + acc,
        -om * v + 2.0 / par.m * (fyf * np.cos(delta) + fyr),
        om,
        2.0 / par.i_z * (par.l_f * fyf - par.l_r * fyr),
    ])


def dynamics_jacobians(z, u, par: VehicleParams = VehicleParams()):
    """Analytic Jacobians ``(df/dz, df/du)`` of :func:`dynamics_rhs`."""
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    _, _, v, nu, psi, om = z
    _check_speed(v)
    delta = u[IDELTA]
    c, s = np.cos(psi), np.sin(psi)
    cd, sd = np.cos(delta), np.sin(delta)
    cf, cr = par.c_alpha_f, par.c_alpha_r
    lf, lr = par.l_f, par.l_r
    alpha_f, alpha_r = slip_angles(z, u, par)

    # partials of the slip angles w.r.t. (v, nu, omega)
    daf = np.array([(nu + lf * om) / v**2, -1.0 / v, -lf / v])
    dar = np.array([-(lr * om - nu) / v**2, -1.0 / v, lr / v])

    jz = np.zeros((NX, NX))
    ju = np.zeros((NX, NU))
    jz[IX, IV], jz[IX, INU], jz[IX, IPSI] = c, -s, -v * s - nu * c
    jz[IY, IV], jz[IY, INU], jz[IY, IPSI] = s, c, v * c - nu * s
    jz[IV, INU], jz[IV, IOMEGA] = om, nu
    lat = 2.0 / par.m * (cf * cd * daf + cr * dar)
    jz[INU, IV] = -om + lat[0]
    jz[INU, INU] = lat[1]
    jz[INU, IOMEGA] = -v + lat[2]
    jz[IPSI, IOMEGA] = 1.0
    yaw = 2.0 / par.i_z * (lf * cf * daf - lr * cr * dar)
    jz[IOMEGA, IV], jz[IOMEGA, INU], jz[IOMEGA, IOMEGA] = yaw

    ju[IV, IACC] = 1.0
    ju[INU, IDELTA] = 2.0 / par.m * cf * (cd - alpha_f * sd)
    ju[IOMEGA, IDELTA] = 2.0 / par.i_z * lf * cf
    return jz, ju


def euler_step(z, u, par: VehicleParams = VehicleParams()) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return z + par.t_s * dynamics_rhs(z, u, par)


def rk4_step(z, u, par: VehicleParams = VehicleParams(), t_s=None) -> np.ndarray:
    """One classical Runge-Kutta step with the input held constant.

    ``t_s`` defaults to ``par.t_s``; pass a smaller value to substep.
    """
    h = par.t_s if t_s is None else t_s
    z = np.asarray(z, dtype=float)
    k1 = dynamics_rhs(z, u, par)
    k2 = dynamics_rhs(z + 0.5 * h * k1, u, par)
    k3 = dynamics_rhs(z + 0.5 * h * k2, u, par)
    k4 = dynamics_rhs(z + h * k3, u, par)
    return z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def lpv_continuous(p, par: VehicleParams = VehicleParams()) -> LpvMatrices:
    """Continuous-time LPV matrices ``A_c(p), B_c(p)`` for ``p = (v, nu, delta, psi)``."""
    v, nu, delta, psi = p
    _check_speed(v, "scheduling v_lon")
    bf, br, gf, gr = par.beta_f, par.beta_r, par.gamma_f, par.gamma_r
    lf, lr = par.l_f, par.l_r
    cd = np.cos(delta)
    a = np.zeros((NX, NX))
    a[IX, IV], a[IX, INU] = np.cos(psi), -np.sin(psi)
    a[IY, IV], a[IY, INU] = np.sin(psi), np.cos(psi)
    a[IV, IOMEGA] = nu
    a[INU, INU] = -bf * cd / v - br / v
    a[INU, IOMEGA] = -v - bf * cd * lf / v + br * lr / v
    a[IPSI, IOMEGA] = 1.0
    a[IOMEGA, INU] = (gr - gf) / v
    a[IOMEGA, IOMEGA] = -(gf * lf + gr * lr) / v
    b = np.zeros((NX, NU))
    b[INU, IDELTA] = bf * cd
    b[IOMEGA, IDELTA] = gf
    b[IV, IACC] = 1.0
    return LpvMatrices(a, b, discrete=False)


def lpv_discretize(cont: LpvMatrices, t_s: float) -> LpvMatrices:
    """Forward-Euler discretization ``A = I + t_s A_c``, ``B = t_s B_c``."""
    if cont.discrete:
        raise ValueError("matrices are already discrete")
    return LpvMatrices(np.eye(cont.a.shape[0]) + t_s * cont.a, t_s * cont.b,
                       discrete=True)


def lpv_discrete(p, par: VehicleParams = VehicleParams()) -> LpvMatrices:
    return lpv_discretize(lpv_continuous(p, par), par.t_s)


def scheduling_of(z, u) -> SchedulingVector:
    """Scheduling vector of a state/input pair, with speed clamped to the model range."""
    v = min(max(float(z[IV]), V_MIN), V_MAX)
    return SchedulingVector(v, float(z[INU]), float(u[IDELTA]), float(z[IPSI]))
