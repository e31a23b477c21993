"""Linear inequality rows for the tracking MPC.

Rows that act on a whole prediction horizon are expressed over the
trajectory vector ``w = [z_1, ..., z_N, u_0, ..., u_{N-1}]`` of length
``8 N`` (see :func:`traj_dim`). Soft rows carry a slack index into the
stacked slack vector ``E = [eps_0, ..., eps_{N-1}]`` with four channels per
step (v_lon, v_lat, psi, delta).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, ProjectionFailure
from .vehicle import IDELTA, INU, IPSI, IV, IX, IY, NU, NX

N_SLACK = 4
HARD = -1


def traj_dim(n):
    return (NX + NU) * n


def z_col(i, j, n):
    """Column of state component ``j`` of ``z_{i+1}`` in the trajectory vector."""
    return NX * i + j


def u_col(i, j, n):
    """Column of input component ``j`` of ``u_i`` in the trajectory vector."""
    return NX * n + NU * i + j


@dataclass
class HalfspacePolytope:
    """Rows ``g x <= h``; soft rows read ``g x - eps[slack] <= h``."""

    g: np.ndarray
    h: np.ndarray
    slack: np.ndarray = None
    tag: str = ""

    def __post_init__(self):
        self.g = np.atleast_2d(np.asarray(self.g, dtype=float))
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        if self.g.shape[0] != self.h.shape[0]:
            raise ValueError(f"{self.g.shape[0]} rows in g but {self.h.shape[0]} in h")
        if self.slack is None:
            self.slack = np.full(self.h.shape[0], HARD, dtype=int)
        self.slack = np.asarray(self.slack, dtype=int).reshape(-1)
        if self.slack.shape[0] != self.h.shape[0]:
            raise ValueError("slack mask length differs from row count")

    @classmethod
    def empty(cls, n):
        return cls(np.zeros((0, n)), np.zeros(0))

    @property
    def n_rows(self):
        return self.h.shape[0]

    @property
    def dim(self):
        return self.g.shape[1]

    def residual(self, x, eps=None):
        """``g x - h`` minus any slack; nonpositive entries are satisfied rows."""
        r = self.g @ np.asarray(x, dtype=float) - self.h
        if eps is not None:
            soft = self.slack >= 0
            r[soft] -= np.asarray(eps)[self.slack[soft]]
        return r

    def contains(self, x, tol=0.0, eps=None):
        return bool(np.all(self.residual(x, eps) <= tol))

    def __add__(self, other):
        if self.dim != other.dim:
            raise ValueError("cannot stack polytopes of different dimension")
        return HalfspacePolytope(np.vstack([self.g, other.g]),
                                 np.concatenate([self.h, other.h]),
                                 np.concatenate([self.slack, other.slack]), self.tag)


@dataclass(frozen=True)
class BoxLimits:
    """Box bounds on states and inputs plus input-rate limits."""

    x: tuple = (-1.0, 1500.0)
    y: tuple = (-600.0, 800.0)
    v_lon: tuple = (1.0, 100.0)
    v_lat_max: float = 10.0
    psi_max: float = np.pi
    omega_max: float = np.pi / (3 * 0.05)
    delta_max: float = 34 * np.pi / 180
    a_lon: tuple = (-6.0, 2.0)
    delta_rate: float = 25 * np.pi / 180
    a_rate: float = 1.5

    @classmethod
    def for_sampling_time(cls, t_s, **kw):
        return cls(omega_max=np.pi / (3 * t_s), **kw)

    def state_bounds(self):
        lo = np.array([self.x[0], self.y[0], self.v_lon[0], -self.v_lat_max,
                       -self.psi_max, -self.omega_max])
        hi = np.array([self.x[1], self.y[1], self.v_lon[1], self.v_lat_max,
                       self.psi_max, self.omega_max])
        return lo, hi

    def input_bounds(self):
        lo = np.array([-self.delta_max, self.a_lon[0]])
        hi = np.array([self.delta_max, self.a_lon[1]])
        return lo, hi

    def rate_bounds(self):
        return np.array([self.delta_rate, self.a_rate])


@dataclass(frozen=True)
class EllipseObstacle:
    """Axis-aligned ellipse, passed on ``side`` ('left' or 'right') of the travel direction."""

    cx: float
    cy: float
    rx: float
    ry: float
    side: str = "left"

    def __post_init__(self):
        if not (self.rx > 0 and self.ry > 0):
            raise ValueError(f"ellipse semi-axes must be positive, got {self.rx}, {self.ry}")
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")

    def level(self, x, y):
        """``ry^2 (x-cx)^2 + rx^2 (y-cy)^2 - rx^2 ry^2``; negative strictly inside."""
        rx2, ry2 = self.rx**2, self.ry**2
        return ry2 * (np.asarray(x) - self.cx) ** 2 + rx2 * (np.asarray(y) - self.cy) ** 2 - rx2 * ry2

    def normalized_level(self, x, y):
        """``((x-cx)/rx)^2 + ((y-cy)/ry)^2 - 1``, the same sign as :meth:`level`."""
        return ((np.asarray(x) - self.cx) / self.rx) ** 2 + ((np.asarray(y) - self.cy) / self.ry) ** 2 - 1.0

    def inflated(self, margin):
        return EllipseObstacle(self.cx, self.cy, self.rx + margin, self.ry + margin, self.side)

    def outline(self, n=64):
        t = np.linspace(0.0, 2 * np.pi, n)
        return np.column_stack([self.cx + self.rx * np.cos(t), self.cy + self.ry * np.sin(t)])


@dataclass(frozen=True)
class ObstacleHalfspace:
    """``a3 X + b3 Y >= c3``; inactive halfspaces carry ``c3 = -inf``."""

    a3: float = 0.0
    b3: float = 0.0
    c3: float = -np.inf
    active: bool = False
    index: int = -1
    point: tuple = None

    def margin(self, x, y):
        return self.a3 * x + self.b3 * y - self.c3


@dataclass(frozen=True)
class RoadBoundary:
    """Circular road: center-line radius around ``center`` with offsets ``r1 < r2``."""

    center: tuple = (0.0, 0.0)
    radius: float = 50.0
    r1: float = -1.0
    r2: float = 4.0

    def __post_init__(self):
        if not self.r1 < self.r2:
            raise ValueError(f"road offsets need r1 < r2, got {self.r1}, {self.r2}")
        if self.radius + self.r1 <= 0:
            raise ValueError("inner road edge must have positive radius")

    def margin(self, x, y):
        """Signed distance inside the annulus (negative when off the road)."""
        d = np.hypot(np.asarray(x) - self.center[0], np.asarray(y) - self.center[1])
        return np.minimum(d - (self.radius + self.r1), (self.radius + self.r2) - d)

    def edges(self, n=256):
        t = np.linspace(0.0, 2 * np.pi, n)
        cx, cy = self.center
        inner = self.radius + self.r1
        outer = self.radius + self.r2
        return (np.column_stack([cx + inner * np.cos(t), cy + inner * np.sin(t)]),
                np.column_stack([cx + outer * np.cos(t), cy + outer * np.sin(t)]))


@dataclass
class TrustRegionConfig:
    """Soft bounds on (v_lon, v_lat, psi) and steering around the previous plan."""

    e_z_max: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.3, 0.1]))
    e_u_max: float = 0.05
    e_p: np.ndarray = field(default_factory=lambda: 1e3 * np.eye(N_SLACK))
    enabled: bool = True

    def __post_init__(self):
        self.e_z_max = np.asarray(self.e_z_max, dtype=float).reshape(3)
        self.e_p = np.asarray(self.e_p, dtype=float)
        if self.e_p.ndim == 1:
            self.e_p = np.diag(self.e_p)
        if np.any(self.e_z_max < 0) or self.e_u_max < 0:
            raise ValueError("trust-region bounds must be nonnegative")
        if self.e_p.shape != (N_SLACK, N_SLACK):
            raise ValueError("e_p must be 4x4")
        if np.min(np.linalg.eigvalsh(0.5 * (self.e_p + self.e_p.T))) < -1e-12:
            raise ValueError("e_p must be positive semidefinite")


def box_rows(limits: BoxLimits = BoxLimits()):
    """Single-step state and input boxes as ``[I; -I] x <= [hi; -lo]``."""
    zlo, zhi = limits.state_bounds()
    ulo, uhi = limits.input_bounds()
    state = HalfspacePolytope(np.vstack([np.eye(NX), -np.eye(NX)]), np.concatenate([zhi, -zlo]))
    inp = HalfspacePolytope(np.vstack([np.eye(NU), -np.eye(NU)]), np.concatenate([uhi, -ulo]))
    return state, inp


def horizon_rows(state_poly: HalfspacePolytope, input_poly: HalfspacePolytope, n):
    """Replicate single-step state rows on ``z_1..z_N`` and input rows on ``u_0..u_{N-1}``."""
    d = traj_dim(n)
    gz = np.kron(np.eye(n), state_poly.g)
    gu = np.kron(np.eye(n), input_poly.g)
    g = np.zeros((gz.shape[0] + gu.shape[0], d))
    g[:gz.shape[0], :NX * n] = gz
    g[gz.shape[0]:, NX * n:] = gu
    h = np.concatenate([np.tile(state_poly.h, n), np.tile(input_poly.h, n)])
    return HalfspacePolytope(g, h, tag="box")


def rate_rows(u_prev, n, limits: BoxLimits = BoxLimits()):
    """Two-sided rate rows on ``u_0 - u_prev`` and on ``u_i - u_{i-1}`` for ``i >= 1``."""
    rate = limits.rate_bounds()
    u_prev = np.asarray(u_prev, dtype=float)
    d = traj_dim(n)
    g = np.zeros((2 * NU * n, d))
    h = np.zeros(2 * NU * n)
    row = 0
    for i in range(n):
        for j in range(NU):
            for sign in (1.0, -1.0):
                g[row, u_col(i, j, n)] = sign
                if i == 0:
                    h[row] = rate[j] + sign * u_prev[j]
                else:
                    g[row, u_col(i - 1, j, n)] = -sign
                    h[row] = rate[j]
                row += 1
    return HalfspacePolytope(g, h, tag="rate")


def _lateral_direction(obs, point, psi, road):
    left = np.array([-np.sin(psi), np.cos(psi)])
    want = left if obs.side == "left" else -left
    if road is not None:
        radial = np.asarray(point) - np.asarray(road.center, dtype=float)
        nrm = np.linalg.norm(radial)
        if nrm > 1e-12:
            radial = radial / nrm
            return radial if radial @ want >= 0 else -radial
    return want


def _ray_exit(obs, p, d):
    """Positive root of ``level(p + s d) = 0`` for ``p`` strictly inside."""
    rx2, ry2 = obs.rx**2, obs.ry**2
    px, py = p[0] - obs.cx, p[1] - obs.cy
    qa = ry2 * d[0] ** 2 + rx2 * d[1] ** 2
    qb = 2.0 * (ry2 * px * d[0] + rx2 * py * d[1])
    qc = ry2 * px**2 + rx2 * py**2 - rx2 * ry2
    if qa <= 0 or qc >= 0:
        return None
    disc = np.sqrt(qb * qb - 4.0 * qa * qc)
    # cancellation-free form of the positive root
    return 2.0 * qc / (-qb - disc) if qb >= 0 else (-qb + disc) / (2.0 * qa)


def _radial_projection(obs, p):
    px, py = p[0] - obs.cx, p[1] - obs.cy
    rho = np.sqrt((px / obs.rx) ** 2 + (py / obs.ry) ** 2)
    if rho < 1e-9:
        raise ProjectionFailure("reference point coincides with the obstacle center")
    return np.array([obs.cx + px / rho, obs.cy + py / rho])


def project_to_ellipse(obs: EllipseObstacle, point, psi, road=None):
    """Move ``point`` laterally toward the overtaking side until it meets the ellipse."""
    p = np.asarray(point, dtype=float)[:2]
    d = _lateral_direction(obs, p, psi, road)
    s = _ray_exit(obs, p, d)
    if s is None:
        return _radial_projection(obs, p)
    q = p + s * d
    # one Newton step along the ray to mop up rounding in the root
    grad = np.array([obs.ry**2 * (q[0] - obs.cx), obs.rx**2 * (q[1] - obs.cy)]) * 2.0
    slope = grad @ d
    if abs(slope) > 0:
        q = q - obs.level(*q) / slope * d
    return q


def tangent_from_point(obs: EllipseObstacle, q):
    """Tangent halfspace ``a3 X + b3 Y >= c3`` at boundary point ``q``."""
    a3 = obs.ry**2 * (q[0] - obs.cx)
    b3 = obs.rx**2 * (q[1] - obs.cy)
    c3 = a3 * q[0] + b3 * q[1]
    return a3, b3, c3


def obstacle_tangent(obs: EllipseObstacle, ref_window, road: RoadBoundary = None):
    """Tangent halfspace at the projection of the first reference point inside ``obs``.

    ``ref_window`` holds reference states ``(X, Y, v, nu, psi, omega)``. The
    returned halfspace is inactive when no point of the window lies strictly
    inside the ellipse.
    """
    ref = np.atleast_2d(np.asarray(ref_window, dtype=float))
    if ref.shape[0] == 0:
        raise ValueError("empty reference window")
    inside = np.flatnonzero(obs.level(ref[:, 0], ref[:, 1]) < 0)
    if inside.size == 0:
        return ObstacleHalfspace()
    i = int(inside[0])
    psi = ref[i, IPSI] if ref.shape[1] > IPSI else 0.0
    q = project_to_ellipse(obs, ref[i, :2], psi, road)
    a3, b3, c3 = tangent_from_point(obs, q)
    return ObstacleHalfspace(a3, b3, c3, True, i, (float(q[0]), float(q[1])))


def obstacle_rows(halfspaces, n):
    """Hard rows ``-a3 X_{i} - b3 Y_{i} <= -c3`` on ``z_{i}``, one per active entry.

    ``halfspaces[i]`` applies to the predicted state ``z_{i+1}``.
    """
    d = traj_dim(n)
    rows, rhs = [], []
    for i, hs in enumerate(halfspaces[:n]):
        if hs is None or not hs.active:
            continue
        # scale to a unit normal so the row is well conditioned for the solver
        nrm = np.hypot(hs.a3, hs.b3)
        g = np.zeros(d)
        g[z_col(i, IX, n)] = -hs.a3 / nrm
        g[z_col(i, IY, n)] = -hs.b3 / nrm
        rows.append(g)
        rhs.append(-hs.c3 / nrm)
    if not rows:
        return HalfspacePolytope.empty(d)
    return HalfspacePolytope(np.array(rows), np.array(rhs), tag="obstacle")


def road_tangent_rows(road: RoadBoundary, ref_window):
    """Outer and inner road tangents at the radial projection of each reference point.

    ``ref_window[i]`` constrains ``z_{i+1}``; pass entries ``1..N`` of a
    reference window. Row ``2i`` is the outer boundary ``a1 X + b1 Y <= c1``
    and row ``2i + 1`` the inner boundary ``-a2 X - b2 Y <= -c2``.
    """
    ref = np.atleast_2d(np.asarray(ref_window, dtype=float))
    n = ref.shape[0]
    d = traj_dim(n)
    c = np.asarray(road.center, dtype=float)
    g = np.zeros((2 * n, d))
    h = np.zeros(2 * n)
    for i in range(n):
        radial = ref[i, :2] - c
        dist = np.linalg.norm(radial)
        if dist < 1e-9:
            raise DegenerateGeometry("reference point at the track center")
        nx_, ny_ = radial / dist
        base = nx_ * c[0] + ny_ * c[1]
        g[2 * i, z_col(i, IX, n)] = nx_
        g[2 * i, z_col(i, IY, n)] = ny_
        h[2 * i] = base + road.radius + road.r2
        g[2 * i + 1, z_col(i, IX, n)] = -nx_
        g[2 * i + 1, z_col(i, IY, n)] = -ny_
        h[2 * i + 1] = -(base + road.radius + road.r1)
    return HalfspacePolytope(g, h, tag="road")


def trust_region_rows(z_hat, u_hat, cfg: TrustRegionConfig):
    """Soft two-sided rows keeping the plan near the previous one.

    ``z_hat[i]`` is the predicted ``z_{i+1}`` and ``u_hat[i]`` the predicted
    ``u_i`` for ``i = 0..N-1``. Slack channel ``4 i + c`` softens component
    ``c`` of (v_lon, v_lat, psi, delta) at step ``i``. Rows whose bound is
    infinite are omitted.
    """
    z_hat = np.atleast_2d(np.asarray(z_hat, dtype=float))
    u_hat = np.atleast_2d(np.asarray(u_hat, dtype=float))
    n = z_hat.shape[0]
    d = traj_dim(n)
    if not cfg.enabled:
        return HalfspacePolytope.empty(d)
    rows, rhs, slack = [], [], []
    targets = [(IV, 0), (INU, 1), (IPSI, 2)]
    for i in range(n):
        channels = [(z_col(i, j, n), z_hat[i, j], cfg.e_z_max[c], c) for j, c in targets]
        channels.append((u_col(i, IDELTA, n), u_hat[i, IDELTA], cfg.e_u_max, 3))
        for col, centre, bound, c in channels:
            if not np.isfinite(bound):
                continue
            for sign in (1.0, -1.0):
                g = np.zeros(d)
                g[col] = sign
                rows.append(g)
                rhs.append(bound + sign * centre)
                slack.append(N_SLACK * i + c)
    if not rows:
        return HalfspacePolytope.empty(d)
    return HalfspacePolytope(np.array(rows), np.array(rhs), np.array(slack), tag="trust")


__all__ = [
    "N_SLACK", "HARD", "traj_dim", "z_col", "u_col", "HalfspacePolytope", "BoxLimits",
    "EllipseObstacle", "ObstacleHalfspace", "RoadBoundary", "TrustRegionConfig",
    "box_rows", "horizon_rows", "rate_rows", "project_to_ellipse", "tangent_from_point",
    "obstacle_tangent", "obstacle_rows", "road_tangent_rows", "trust_region_rows",
]
