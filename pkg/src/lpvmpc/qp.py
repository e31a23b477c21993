"""Condensed LPV prediction model and a dense operator-splitting QP solver.

Decision vector layout for the condensed problem is ``x = [U; E]`` with
``U = [u_0, ..., u_{N-1}]`` (2N entries) and the optional slack block ``E``
(4N entries). The solver handles the generic form::

    minimize    1/2 x' H x + f' x
    subject to  l <= A x <= u

and the MPC problems are fed to it with ``l = -inf``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

from .constraints import traj_dim
from .errors import DimensionMismatch
from .vehicle import NU, NX

log = logging.getLogger(__name__)

SOLVED = "solved"
MAX_ITERATIONS = "max_iterations"
INFEASIBLE = "infeasible"


@dataclass
class PredictionOperators:
    """Stacked prediction ``Z = phi z0 + gamma U`` with ``Z = [z_1; ...; z_N]``."""

    phi: np.ndarray
    gamma: np.ndarray

    @property
    def horizon(self):
        return self.phi.shape[0] // self.phi.shape[1]

    def predict(self, z0, u_stack):
        return self.phi @ np.asarray(z0, dtype=float) + self.gamma @ np.asarray(u_stack, dtype=float)


def condense(a_seq, b_seq) -> PredictionOperators:
    """Build ``phi`` and ``gamma`` from the discrete matrices ``A_i, B_i``, ``i = 0..N-1``."""
    a_seq = [np.atleast_2d(np.asarray(a, dtype=float)) for a in a_seq]
    b_seq = [np.asarray(b, dtype=float) for b in b_seq]
    b_seq = [b.reshape(b.shape[0], -1) if b.ndim < 2 else b for b in b_seq]
    n = len(a_seq)
    if n < 1 or len(b_seq) != n:
        raise DimensionMismatch(f"need equal nonempty A/B sequences, got {n} and {len(b_seq)}")
    nx = a_seq[0].shape[0]
    nu = b_seq[0].shape[1]
    for a, b in zip(a_seq, b_seq):
        if a.shape != (nx, nx) or b.shape != (nx, nu):
            raise DimensionMismatch("inconsistent A/B shapes in sequence")
    phi = np.zeros((nx * n, nx))
    gamma = np.zeros((nx * n, nu * n))
    prod = np.eye(nx)
    for i in range(n):
        rows = slice(nx * i, nx * (i + 1))
        prod = a_seq[i] @ prod
        phi[rows] = prod
        # block (i, j) = A_i ... A_{j+1} B_j; reuse row-block i-1 for j < i
        if i > 0:
            gamma[rows, : nu * i] = a_seq[i] @ gamma[nx * (i - 1): nx * i, : nu * i]
        gamma[rows, nu * i: nu * (i + 1)] = b_seq[i]
    return PredictionOperators(phi, gamma)


def build_cost(ops: PredictionOperators, q_weight, r_weight, p_weight=None, e_p=None,
               z0=None, z_ref=None):
    """Hessian and linear term of the tracking cost in ``x = [U; E]``.

    The objective ``1/2 x' H x + f' x`` equals, up to a constant,
    ``sum_{i=1}^{N-1} |z_i - r_i|_Q^2 + |z_N - r_N|_P^2 + sum |u_i|_R^2 + sum |eps_i|_Ep^2``.
    ``z_ref`` is the stacked ``[r_1; ...; r_N]`` (or an ``(N, nx)`` array);
    ``e_p=None`` drops the slack block.
    """
    n = ops.horizon
    nx = ops.phi.shape[1]
    nu = ops.gamma.shape[1] // n
    q_weight = np.asarray(q_weight, dtype=float)
    r_weight = np.asarray(r_weight, dtype=float)
    p_weight = q_weight if p_weight is None else np.asarray(p_weight, dtype=float)
    if q_weight.shape != (nx, nx) or p_weight.shape != (nx, nx) or r_weight.shape != (nu, nu):
        raise DimensionMismatch("weight shapes do not match the prediction operators")
    z0 = np.zeros(nx) if z0 is None else np.asarray(z0, dtype=float)
    z_ref = np.zeros(nx * n) if z_ref is None else np.asarray(z_ref, dtype=float).reshape(-1)
    if z_ref.shape[0] != nx * n:
        raise DimensionMismatch(f"reference has {z_ref.shape[0]} entries, expected {nx * n}")

    q_hat = np.kron(np.eye(n), q_weight)
    q_hat[-nx:, -nx:] = p_weight
    r_hat = np.kron(np.eye(n), r_weight)
    gq = ops.gamma.T @ q_hat
    h_u = 2.0 * (r_hat + gq @ ops.gamma)
    f_u = 2.0 * gq @ (ops.phi @ z0 - z_ref)
    if e_p is None:
        return 0.5 * (h_u + h_u.T), f_u
    e_p = np.asarray(e_p, dtype=float)
    ns = e_p.shape[0] * n
    hess = np.zeros((nu * n + ns, nu * n + ns))
    hess[: nu * n, : nu * n] = 0.5 * (h_u + h_u.T)
    hess[nu * n:, nu * n:] = 2.0 * np.kron(np.eye(n), 0.5 * (e_p + e_p.T))
    return hess, np.concatenate([f_u, np.zeros(ns)])


@dataclass
class CondensedQp:
    """``minimize 1/2 x'Hx + f'x  s.t.  G x <= h`` over ``x = [U; E]``."""

    hessian: np.ndarray
    linear: np.ndarray
    ineq_g: np.ndarray
    ineq_h: np.ndarray
    n_u: int
    n_slack: int = 0
    row_tags: list = field(default_factory=list)
    committed_violation: float = 0.0

    @property
    def dim(self):
        return self.hessian.shape[0]

    def objective(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * x @ self.hessian @ x + self.linear @ x

    def dump(self, path):
        """Write every matrix row-major to a plain-text file with dimension headers."""
        with open(path, "w") as fh:
            fh.write(f"# condensed QP: n={self.dim} m={self.ineq_h.shape[0]} "
                     f"n_u={self.n_u} n_slack={self.n_slack}\n")
            for name, mat in (("H", self.hessian), ("f", self.linear[None, :]),
                              ("G", self.ineq_g), ("h", self.ineq_h[None, :])):
                fh.write(f"{name} {mat.shape[0]} {mat.shape[1]}\n")
                np.savetxt(fh, mat, fmt="%.17g")


def load_qp_dump(path):
    """Read a file written by :meth:`CondensedQp.dump` back into a dict of arrays."""
    out = {}
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    k = 0
    while k < len(lines):
        name, r, c = lines[k].split()
        r, c = int(r), int(c)
        rows = [np.array(lines[k + 1 + i].split(), dtype=float) for i in range(r)]
        out[name] = np.array(rows).reshape(r, c)
        k += 1 + r
    out["f"] = out["f"].ravel()
    out["h"] = out["h"].ravel()
    return out


def assemble_qp(ops: PredictionOperators, cost, z0, polytopes=(), n_slack=0) -> CondensedQp:
    """Map trajectory-space rows through the prediction model.

    Each polytope acts on ``w = [Z; U]``. A row ``g_Z Z + g_U U - eps_s <= h``
    becomes ``(g_Z gamma + g_U) U - eps_s <= h - g_Z phi z0``. Rows with an
    infinite right-hand side are dropped and slack nonnegativity rows are
    appended. Rows with no dependence on the decision variables (typically
    position rows on the first predicted state, which the current state
    already fixes) are dropped too; their largest violation is kept in
    ``committed_violation``.
    """
    hessian, linear = cost
    n = ops.horizon
    nx = ops.phi.shape[1]
    nu = ops.gamma.shape[1] // n
    n_u = nu * n
    d = n_u + n_slack
    if hessian.shape != (d, d) or linear.shape != (d,):
        raise DimensionMismatch(f"cost has dimension {hessian.shape}, expected {d}")
    z0 = np.asarray(z0, dtype=float)
    free = ops.phi @ z0
    blocks_g, blocks_h, tags = [], [], []
    committed = 0.0
    for poly in polytopes:
        if poly is None or poly.n_rows == 0:
            continue
        if poly.dim != traj_dim(n) or nx != NX or nu != NU:
            raise DimensionMismatch(f"polytope over {poly.dim} columns, expected {traj_dim(n)}")
        keep = np.isfinite(poly.h)
        gz, gu = poly.g[keep, : nx * n], poly.g[keep, nx * n:]
        g = np.zeros((int(keep.sum()), d))
        g[:, :n_u] = gz @ ops.gamma + gu
        soft = poly.slack[keep]
        for r in np.flatnonzero(soft >= 0):
            if soft[r] >= n_slack:
                raise DimensionMismatch(f"slack index {soft[r]} out of range {n_slack}")
            g[r, n_u + soft[r]] = -1.0
        h = poly.h[keep] - gz @ free
        const = np.abs(g).max(axis=1) <= 1e-12 if g.size else np.zeros(0, bool)
        if const.any():
            committed = max(committed, float(np.max(-h[const], initial=0.0)))
            g, h = g[~const], h[~const]
        blocks_g.append(g)
        blocks_h.append(h)
        tags.extend([poly.tag] * g.shape[0])
    if n_slack:
        g = np.zeros((n_slack, d))
        g[:, n_u:] = -np.eye(n_slack)
        blocks_g.append(g)
        blocks_h.append(np.zeros(n_slack))
        tags.extend(["slack"] * n_slack)
    ineq_g = np.vstack(blocks_g) if blocks_g else np.zeros((0, d))
    ineq_h = np.concatenate(blocks_h) if blocks_h else np.zeros(0)
    return CondensedQp(hessian, linear, ineq_g, ineq_h, n_u, n_slack, tags, committed)


@dataclass
class QpSolution:
    primal: np.ndarray
    dual: np.ndarray
    objective: float
    status: str
    primal_residual: float
    dual_residual: float
    iterations: int
    polished: bool = False

    @property
    def solved(self):
        return self.status == SOLVED


@dataclass
class AdmmSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_pinf: float = 1e-5
    max_iter: int = 4000
    check_every: int = 5
    adapt_every: int = 25
    infeasible_streak: int = 50
    scaling_iters: int = 10
    polish: bool = True


class DenseAdmmSolver:
    """Operator-splitting QP solver for small dense problems.

    Implements the standard ADMM splitting with over-relaxation, Ruiz
    equilibration and residual-balancing step-size updates. Whenever the
    iterates look close, the active set is guessed from the dual iterate and
    the equality-constrained KKT system is solved directly; the polished
    point is accepted only if it passes all optimality checks.

    One instance keeps mutable iterate state and must not be shared between
    threads.
    """

    def __init__(self, settings: AdmmSettings = None):
        self.settings = settings or AdmmSettings()

    # -- scaling -----------------------------------------------------------
    def _equilibrate(self, p, q, a):
        n, m = p.shape[0], a.shape[0]
        d = np.ones(n)
        e = np.ones(m)
        # positive scalings commute with abs, so iterate on |[P; A]|
        mat = np.abs(np.vstack([p, a]))
        for _ in range(self.settings.scaling_iters):
            # P is symmetric: its row norms equal its column norms
            norms = np.clip(mat.max(axis=1), 1e-4, 1e4)
            col = np.maximum(norms[:n], mat[n:].max(axis=0)) if m else norms[:n]
            dd = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
            ee = 1.0 / np.sqrt(norms[n:])
            scale = np.concatenate([dd, ee])
            mat *= scale[:, None]
            mat *= dd
            d *= dd
            e *= ee
            if np.abs(1.0 - scale).max() < 1e-2:
                break
        ps = d[:, None] * p * d
        as_ = e[:, None] * a * d
        qs = d * q
        scale = max(np.mean(np.abs(ps).max(axis=0)), np.abs(qs).max() if n else 0.0)
        c = 1.0 / np.clip(scale, 1e-4, 1e4)
        return d, e, c, c * ps, c * qs, as_

    def solve(self, p, q, a, l, u, warm_x=None, warm_y=None) -> QpSolution:
        st = self.settings
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        a = np.asarray(a, dtype=float).reshape(-1, p.shape[0])
        l = np.asarray(l, dtype=float)
        u = np.asarray(u, dtype=float)
        n, m = p.shape[0], a.shape[0]
        if q.shape != (n,) or l.shape != (m,) or u.shape != (m,):
            raise DimensionMismatch("inconsistent QP data shapes")
        if np.any(l > u):
            return self._trivially_infeasible(n, m)

        d, e, c, ps, qs, as_ = self._equilibrate(p, q, a)
        ls, us = e * l, e * u
        eq = np.isfinite(l) & np.isfinite(u) & (u - l < 1e-6)
        loose = ~np.isfinite(l) & ~np.isfinite(u)

        def rho_vec(r):
            v = np.full(m, r)
            v[eq] = 1e3 * r
            v[loose] = 1e-6
            return v

        rho = st.rho
        rv = rho_vec(rho)
        kmat = cho_factor(ps + st.sigma * np.eye(n) + as_.T @ (rv[:, None] * as_))

        x = np.zeros(n) if warm_x is None else np.asarray(warm_x, dtype=float) / d
        y = np.zeros(m) if warm_y is None else c * np.asarray(warm_y, dtype=float) / e
        z = np.clip(as_ @ x, ls, us)

        it = 0
        streak = 0
        r_p = r_d = np.inf
        last_polish = -np.inf
        for it in range(1, st.max_iter + 1):
            rhs = st.sigma * x - qs + as_.T @ (rv * z - y)
            xt = cho_solve(kmat, rhs)
            zt = as_ @ xt
            x_new = st.alpha * xt + (1.0 - st.alpha) * x
            zr = st.alpha * zt + (1.0 - st.alpha) * z
            z_new = np.clip(zr + y / rv, ls, us)
            dy = rv * (zr - z_new)
            y = y + dy
            x, z = x_new, z_new

            if m and self._certificate(dy, as_, d, e, ls, us):
                streak += 1
                if streak >= st.infeasible_streak:
                    return self._finish(p, q, a, l, u, d, e, c, x, y, INFEASIBLE, it)
            else:
                streak = 0

            if it % st.check_every and it != st.max_iter:
                continue
            ax = as_ @ x
            px = ps @ x
            aty = as_.T @ y
            r_p = np.abs((ax - z) / e).max() if m else 0.0
            r_d = np.abs((px + qs + aty) / d).max() / c
            s_p = max(np.abs(ax / e).max(), np.abs(z / e).max()) if m else 0.0
            s_d = max(np.abs(px / d).max(), np.abs(aty / d).max(), np.abs(qs / d).max()) / c
            tol_p = st.eps_abs + st.eps_rel * s_p
            tol_d = st.eps_abs + st.eps_rel * s_d
            if r_p <= tol_p and r_d <= tol_d:
                sol = self._finish(p, q, a, l, u, d, e, c, x, y, SOLVED, it)
                if st.polish:
                    pol = self._polish(p, q, a, l, u, sol)
                    if pol is not None:
                        return pol
                return sol
            near = r_p <= 1e3 * tol_p and r_d <= 1e3 * tol_d
            if st.polish and (near or it - last_polish >= 50) and it - last_polish >= 10:
                last_polish = it
                guess = self._finish(p, q, a, l, u, d, e, c, x, y, SOLVED, it)
                pol = self._polish(p, q, a, l, u, guess)
                if pol is not None:
                    return pol
            if it % st.adapt_every == 0 and m:
                num = r_p / max(s_p, 1e-10)
                den = r_d / max(s_d, 1e-10)
                new = rho * math.sqrt(num / max(den, 1e-12)) if den > 0 else rho
                new = min(max(new, 1e-6), 1e6)
                if new > 5.0 * rho or new < 0.2 * rho:
                    rho = new
                    rv = rho_vec(rho)
                    kmat = cho_factor(ps + st.sigma * np.eye(n) + as_.T @ (rv[:, None] * as_))
        return self._finish(p, q, a, l, u, d, e, c, x, y, MAX_ITERATIONS, it)

    def _certificate(self, dy, as_, d, e, ls, us):
        ndy = np.abs(e * dy).max()
        if ndy < 1e-12:
            return False
        eps = self.settings.eps_pinf * ndy
        if np.abs((as_.T @ dy) / d).max() > eps:
            return False
        pos, neg = dy > eps * 1e-3, dy < -eps * 1e-3
        if np.any(pos & ~np.isfinite(us)) or np.any(neg & ~np.isfinite(ls)):
            return False
        support = us[pos] @ dy[pos] + ls[neg] @ dy[neg]
        return support < -eps

    def _trivially_infeasible(self, n, m):
        return QpSolution(np.zeros(n), np.zeros(m), np.inf, INFEASIBLE, np.inf, np.inf, 0)

    def _finish(self, p, q, a, l, u, d, e, c, xs, ys, status, it):
        x = d * xs
        y = e * ys / c
        r_p, r_d = kkt_residuals(p, q, a, l, u, x, y)
        return QpSolution(x, y, float(0.5 * x @ p @ x + q @ x), status, r_p, r_d, it)

    def _polish(self, p, q, a, l, u, sol):
        st = self.settings
        x, y = sol.primal, sol.dual
        ax = a @ x
        low = (ax - l < -y) & np.isfinite(l)
        upp = (u - ax < y) & np.isfinite(u)
        low &= ~upp
        act = np.flatnonzero(low | upp)
        n, k = p.shape[0], act.size
        if k > 4 * n:
            return None
        aa = a[act]
        bb = np.where(upp[act], u[act], l[act])
        delta = 1e-9
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = p
        kkt[:n, n:] = aa.T
        kkt[n:, :n] = aa
        reg = kkt.copy()
        reg[:n, :n] += delta * np.eye(n)
        reg[n:, n:] -= delta * np.eye(k)
        rhs = np.concatenate([-q, bb])
        try:
            fac = lu_factor(reg, check_finite=False)
        except (ValueError, np.linalg.LinAlgError):
            return None
        sol_vec = lu_solve(fac, rhs)
        for _ in range(5):
            sol_vec = sol_vec + lu_solve(fac, rhs - kkt @ sol_vec)
        if not np.all(np.isfinite(sol_vec)):
            return None
        xp = sol_vec[:n]
        yp = np.zeros_like(y)
        yp[act] = sol_vec[n:]
        r_p, r_d = kkt_residuals(p, q, a, l, u, xp, yp)
        scale = 1.0 + max(np.abs(q).max() if n else 0.0, np.abs(p @ xp).max())
        sign_ok = np.all(yp[upp] >= -st.eps_abs * scale) and np.all(yp[low] <= st.eps_abs * scale)
        if r_p <= st.eps_abs and r_d <= st.eps_abs * scale and sign_ok:
            yp[upp] = np.maximum(yp[upp], 0.0)
            yp[low] = np.minimum(yp[low], 0.0)
            return QpSolution(xp, yp, float(0.5 * xp @ p @ xp + q @ xp), SOLVED,
                              r_p, r_d, sol.iterations, polished=True)
        return None


def kkt_residuals(p, q, a, l, u, x, y):
    """Infinity-norm primal and dual residuals of ``l <= A x <= u``."""
    ax = a @ x
    viol = np.maximum(ax - u, l - ax)
    r_p = float(max(viol.max(), 0.0)) if ax.size else 0.0
    r_d = float(np.abs(p @ x + q + a.T @ y).max()) if x.size else 0.0
    return r_p, r_d


def pair_rows(g, h):
    """Merge rows ``g_i x <= h_i`` and ``-g_i x <= h_j`` into ``-h_j <= g_i x <= h_i``.

    Returns ``(keep, lower, upper, partner)``: the indices of the rows kept,
    their two-sided bounds and, for each kept row, the index of the merged
    partner row or -1.
    """
    m, n = g.shape
    partner = np.full(m, -1)
    if m < 2:
        return np.arange(m), np.full(m, -np.inf), h.copy(), partner
    # exact negation survives the projection, so complements have s_j == -s_i
    w = np.random.default_rng(12345).standard_normal(n)
    s = g @ w
    order = np.argsort(s, kind="stable")
    ss = s[order]
    pos = np.clip(np.searchsorted(ss, -s), 0, m - 1)
    cand = order[pos]
    rows = np.flatnonzero((ss[pos] == -s) & (s > 0))
    cols = cand[rows]
    ok = np.all(g[rows] == -g[cols], axis=1)
    rows, cols = rows[ok], cols[ok]
    if np.unique(cols).size == cols.size:
        partner[rows] = cols
    else:
        # duplicated rows: pair greedily
        taken = np.zeros(m, bool)
        for i, j in zip(rows, cols):
            if not taken[j]:
                partner[i] = j
                taken[j] = True
    dropped = np.zeros(m, bool)
    dropped[partner[partner >= 0]] = True
    keep = np.flatnonzero(~dropped)
    lower = np.full(keep.size, -np.inf)
    pk = partner[keep]
    lower[pk >= 0] = -h[pk[pk >= 0]]
    return keep, lower, h[keep].copy(), pk


def solve_qp(qp: CondensedQp, warm_start=None, settings: AdmmSettings = None,
             solver: DenseAdmmSolver = None) -> QpSolution:
    """Solve a condensed QP; ``warm_start`` is a primal vector or a ``(primal, dual)`` pair.

    Complementary row pairs are merged into two-sided rows before solving;
    the returned dual is expanded back to one nonnegative multiplier per
    original row. Never raises on non-convergence: the outcome is reported
    in ``status``.
    """
    solver = solver or DenseAdmmSolver(settings)
    m = qp.ineq_h.shape[0]
    wx = wy = None
    if warm_start is not None:
        if isinstance(warm_start, tuple):
            wx, wy = warm_start
            if wy is not None and np.shape(wy) != (m,):
                wy = None
        else:
            wx = warm_start
        if wx is not None and np.shape(wx) != (qp.dim,):
            wx = None
    keep, lower, upper, partner = pair_rows(qp.ineq_g, qp.ineq_h)
    merged = partner >= 0
    if wy is not None:
        wy = np.asarray(wy, dtype=float)
        wy_m = wy[keep].copy()
        wy_m[merged] -= wy[partner[merged]]
        wy = wy_m
    sol = solver.solve(qp.hessian, qp.linear, qp.ineq_g[keep], lower, upper, warm_x=wx, warm_y=wy)
    dual = np.zeros(m)
    dual[keep] = np.maximum(sol.dual, 0.0)
    dual[partner[merged]] = np.maximum(-sol.dual[merged], 0.0)
    sol.dual = dual
    return sol
