"""Receding-horizon controllers for reference tracking with obstacle avoidance.

* ``lpv_trust``: LPV MPC whose scheduling trajectory is taken from the
  previous plan, with soft trust-region rows keeping the new plan close to it.
* ``lpv_standard``: the same controller without the trust region.
* ``nmpc_sqp``: nonlinear MPC on the Euler-discretized bicycle model, solved
  by sequential quadratic programming with exact Jacobians.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import qp as qpmod
from .constraints import (N_SLACK, BoxLimits, HalfspacePolytope, TrustRegionConfig, box_rows,
                          horizon_rows, obstacle_rows, obstacle_tangent, rate_rows,
                          road_tangent_rows, traj_dim, trust_region_rows, z_col)
from .errors import DomainError
from .reference import window_array, wrap_angle
from .vehicle import (INU, IPSI, IV, IX, IY, NU, NX, V_MAX, V_MIN, VehicleParams,
                      dynamics_jacobians, dynamics_rhs, lpv_discrete, scheduling_of)

KINDS = ("lpv_trust", "lpv_standard", "nmpc_sqp")
NOT_CONVERGED = "not_converged"

PRESETS = {
    "scenario1": {
        "lpv": dict(q=(10, 10, 1, 1, 10, 1), r=(0.1, 0.1)),
        "nmpc": dict(q=(10, 10, 5, 1, 1, 1), r=(0.1, 0.1)),
        "road": (-1.0, 4.0),
    },
    "scenario2": {
        "lpv": dict(q=(10, 10, 300, 1, 1, 1), r=(0.001, 0.001)),
        "nmpc": dict(q=(10, 10, 1000, 1, 1, 1), r=(0.001, 0.001)),
        "road": (-1.5, 5.0),
    },
}


@dataclass
class ControllerConfig:
    kind: str = "lpv_trust"
    horizon: int = 8
    q: np.ndarray = field(default_factory=lambda: np.diag([10.0, 10, 1, 1, 10, 1]))
    r: np.ndarray = field(default_factory=lambda: np.diag([0.1, 0.1]))
    p: np.ndarray = None
    trust: TrustRegionConfig = field(default_factory=TrustRegionConfig)
    limits: BoxLimits = field(default_factory=BoxLimits)
    params: VehicleParams = field(default_factory=VehicleParams)
    solver: qpmod.AdmmSettings = field(default_factory=qpmod.AdmmSettings)
    obstacle_margin: float = 0.3
    sqp_max_iter: int = 20
    sqp_tol: float = 1e-4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown controller kind {self.kind!r}; expected one of {KINDS}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.q = _as_weight(self.q, NX, "q")
        self.r = _as_weight(self.r, NU, "r")
        self.p = self.q if self.p is None else _as_weight(self.p, NX, "p")
        if np.min(np.linalg.eigvalsh(self.q)) < -1e-12 or np.min(np.linalg.eigvalsh(self.p)) < -1e-12:
            raise ValueError("q and p must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(self.r)) <= 0:
            raise ValueError("r must be positive definite")
        if self.kind == "lpv_standard" and self.trust.enabled:
            self.trust = replace(self.trust, enabled=False)

    @property
    def uses_trust(self):
        return self.kind == "lpv_trust" and self.trust.enabled


def _as_weight(w, n, name):
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = np.diag(w)
    if w.shape != (n, n):
        raise ValueError(f"weight {name} must be {n}x{n} or a length-{n} diagonal")
    return 0.5 * (w + w.T)


def preset_config(name="scenario1", kind="lpv_trust", **overrides) -> ControllerConfig:
    """Controller configuration with the named weight set for ``kind``."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    weights = PRESETS[name]["nmpc" if kind == "nmpc_sqp" else "lpv"]
    kw = dict(kind=kind, q=np.diag(weights["q"]).astype(float), r=np.diag(weights["r"]).astype(float))
    kw.update(overrides)
    return ControllerConfig(**kw)


@dataclass
class StepDiagnostics:
    status: str
    objective: float
    slack: np.ndarray
    solve_time: float
    obstacle_active: bool
    scheduling_error: float
    iterations: int = 0
    sqp_iterations: int = 0
    step_norm: float = 0.0
    committed_violation: float = 0.0

    @property
    def feasible(self):
        return self.status in (qpmod.SOLVED, NOT_CONVERGED)


@dataclass
class Plan:
    """Open-loop plan: ``states[i]`` is ``z_{i|k}`` for ``i = 0..N``, ``inputs[i]`` is ``u_{i|k}``."""

    states: np.ndarray
    inputs: np.ndarray


def init_scheduling(z0, u0, n) -> np.ndarray:
    """Scheduling trajectory of ``n + 1`` identical entries built from ``(z0, u0)``."""
    return np.tile(np.array(scheduling_of(z0, u0)), (n + 1, 1))


def shift_scheduling(prev) -> np.ndarray:
    """Drop the first entry and repeat the last one."""
    prev = np.asarray(prev, dtype=float)
    return np.vstack([prev[1:], prev[-1:]])


def scheduling_from_plan(states, inputs) -> np.ndarray:
    """Scheduling entries ``p_i = (v_i, nu_i, delta_i, psi_i)`` for ``i = 0..N`` of a plan."""
    n = inputs.shape[0]
    out = np.zeros((n + 1, 4))
    for i in range(n + 1):
        out[i] = scheduling_of(states[i], inputs[min(i, n - 1)])
    return out


def _unwrap_to(window, psi):
    """Shift reference headings by a multiple of 2 pi so the first lies within pi of ``psi``."""
    w = window.copy()
    w[:, IPSI] += float(wrap_angle(w[0, IPSI] - psi)) - (w[0, IPSI] - psi)
    return w


def _input_box(limits, u):
    lo, hi = limits.input_bounds()
    return np.clip(u, lo, hi)


def _obstacle_halfspaces(obstacles, refs, road, margin):
    """One tangent halfspace per obstacle and horizon step whose reference lies inside."""
    grid = []
    for obs in obstacles:
        big = obs.inflated(margin) if margin else obs
        grid.append([obstacle_tangent(big, refs[i:i + 1], road) for i in range(refs.shape[0])])
    return grid


class LpvMpcController:
    """LPV MPC with (``lpv_trust``) or without (``lpv_standard``) the scheduling trust region.

    The instance stores the scheduling trajectory, the previous plan and the
    solver warm start, so one instance serves a single closed loop.
    """

    def __init__(self, cfg: ControllerConfig):
        if cfg.kind == "nmpc_sqp":
            raise ValueError("use NmpcSqpController for nmpc_sqp")
        self.cfg = cfg
        self.solver = qpmod.DenseAdmmSolver(cfg.solver)
        self.reset()

    def reset(self):
        self.p_hat = None
        self.plan = None
        self.warm = None
        self.last_qp = None

    def _predicted(self, z_k, u_prev):
        """Scheduling trajectory and trust-region centres for the current step."""
        n = self.cfg.horizon
        if self.plan is None:
            p_hat = init_scheduling(z_k, u_prev, n)
            z_hat = np.tile(np.asarray(z_k, dtype=float), (n, 1))
            u_hat = np.tile(np.asarray(u_prev, dtype=float), (n, 1))
        else:
            p_hat = shift_scheduling(self.p_hat)
            z_hat = np.vstack([self.plan.states[2:], self.plan.states[-1:]])
            u_hat = np.vstack([self.plan.inputs[1:], self.plan.inputs[-1:]])
        # the first prediction step uses the measured state
        p_hat[0, [0, 1, 3]] = z_k[IV], z_k[INU], z_k[IPSI]
        p_hat[:, 0] = np.clip(p_hat[:, 0], V_MIN, V_MAX)
        return p_hat, z_hat, u_hat

    def step(self, z_k, u_prev, refs, obstacles=(), road=None):
        """Compute the input for state ``z_k``.

        ``refs`` is the reference window for steps ``k..k+N`` (``N+1`` rows).
        Returns ``(u, plan, diagnostics)``; infeasible steps hold ``u_prev``
        clipped to the input box and report the failure in the diagnostics.
        """
        cfg = self.cfg
        n = cfg.horizon
        z_k = np.asarray(z_k, dtype=float)
        u_prev = np.asarray(u_prev, dtype=float)
        refs = _unwrap_to(window_array(refs) if not isinstance(refs, np.ndarray) else refs, z_k[IPSI])
        if refs.shape[0] < n + 1:
            raise ValueError(f"reference window has {refs.shape[0]} rows, need {n + 1}")
        refs = refs[: n + 1]
        p_hat, z_hat, u_hat = self._predicted(z_k, u_prev)

        mats = [lpv_discrete(p_hat[i], cfg.params) for i in range(n)]
        ops = qpmod.condense([m.a for m in mats], [m.b for m in mats])
        n_slack = N_SLACK * n if cfg.uses_trust else 0
        cost = qpmod.build_cost(ops, cfg.q, cfg.r, cfg.p, cfg.trust.e_p if n_slack else None,
                                z_k, refs[1:])
        state_box, input_box = box_rows(cfg.limits)
        polys = [horizon_rows(state_box, input_box, n), rate_rows(u_prev, n, cfg.limits)]
        if road is not None:
            polys.append(road_tangent_rows(road, refs[1:]))
        grid = _obstacle_halfspaces(obstacles, refs[1:], road, cfg.obstacle_margin)
        for row in grid:
            polys.append(obstacle_rows(row, n))
        if n_slack:
            polys.append(trust_region_rows(z_hat, u_hat, cfg.trust))
        qp = qpmod.assemble_qp(ops, cost, z_k, polys, n_slack)
        self.last_qp = qp

        warm = self.warm if self.warm is not None and self.warm.shape == (qp.dim,) else None
        t0 = time.perf_counter()
        sol = qpmod.solve_qp(qp, warm, solver=self.solver)
        elapsed = time.perf_counter() - t0
        active = any(hs.active for row in grid for hs in row)

        if not sol.solved:
            u = _input_box(cfg.limits, u_prev)
            # keep predictions consistent for the next step
            if self.plan is not None:
                self.plan = Plan(np.vstack([self.plan.states[1:], self.plan.states[-1:]]),
                                 np.vstack([self.plan.inputs[1:], self.plan.inputs[-1:]]))
            self.p_hat = p_hat
            self.warm = None
            plan = self.plan or Plan(np.tile(z_k, (n + 1, 1)), np.tile(u, (n, 1)))
            diag = StepDiagnostics(sol.status, float("nan"), np.full(N_SLACK, np.nan), elapsed,
                                   active, float("nan"), sol.iterations,
                                   committed_violation=qp.committed_violation)
            return u, plan, diag

        u_stack = sol.primal[: NU * n]
        eps = sol.primal[NU * n:]
        states = np.vstack([z_k, ops.predict(z_k, u_stack).reshape(n, NX)])
        inputs = u_stack.reshape(n, NU)
        plan = Plan(states, inputs)
        realized = scheduling_from_plan(states, inputs)
        sched_err = float(np.abs(realized[:n] - p_hat[:n]).max())
        slack = (np.abs(eps).reshape(n, N_SLACK).max(axis=0) if n_slack
                 else np.zeros(N_SLACK))

        self.plan = plan
        self.p_hat = realized
        # shift the primal solution one step for the next warm start
        u_next = np.concatenate([u_stack[NU:], u_stack[-NU:]])
        if n_slack:
            e_next = np.concatenate([eps[N_SLACK:], eps[-N_SLACK:]])
            self.warm = np.concatenate([u_next, e_next])
        else:
            self.warm = u_next
        diag = StepDiagnostics(sol.status, sol.objective, slack, elapsed, active, sched_err,
                               sol.iterations, committed_violation=qp.committed_violation)
        return inputs[0].copy(), plan, diag


def lpv_mpc_step(controller: LpvMpcController, z_k, u_prev, refs, obstacles=(), road=None):
    return controller.step(z_k, u_prev, refs, obstacles, road)


def _shift_rows(poly: HalfspacePolytope, w_bar):
    """Rows of ``poly`` rewritten for the deviation ``w - w_bar``."""
    return HalfspacePolytope(poly.g, poly.h - poly.g @ w_bar, poly.slack, poly.tag)


def euler_rollout(z0, inputs, par: VehicleParams):
    states = [np.asarray(z0, dtype=float)]
    for u in inputs:
        z = states[-1]
        states.append(z + par.t_s * dynamics_rhs(z, u, par))
    return np.array(states)


def ellipse_rows(obstacles, states, margin, n):
    """Linearized ellipse constraints ``G(X,Y) >= 0`` about the planned positions ``z_1..z_N``."""
    d = traj_dim(n)
    rows, rhs = [], []
    for obs in obstacles:
        big = obs.inflated(margin) if margin else obs
        rx2, ry2 = big.rx**2, big.ry**2
        for i in range(n):
            xb, yb = states[i + 1, IX], states[i + 1, IY]
            gval = big.level(xb, yb)
            grad = np.array([2 * ry2 * (xb - big.cx), 2 * rx2 * (yb - big.cy)])
            nrm = np.linalg.norm(grad)
            if nrm < 1e-9:
                continue
            # G(p_bar) + grad (p - p_bar) >= 0, normalized
            g = np.zeros(d)
            g[z_col(i, IX, n)] = -grad[0] / nrm
            g[z_col(i, IY, n)] = -grad[1] / nrm
            rows.append(g)
            rhs.append((gval - grad @ np.array([xb, yb])) / nrm)
    if not rows:
        return HalfspacePolytope.empty(d)
    return HalfspacePolytope(np.array(rows), np.array(rhs), tag="ellipse")


class NmpcSqpController:
    """Nonlinear MPC solved by SQP with a Gauss-Newton Hessian and l1 merit line search."""

    def __init__(self, cfg: ControllerConfig):
        if cfg.kind != "nmpc_sqp":
            cfg = replace(cfg, kind="nmpc_sqp")
        self.cfg = cfg
        self.solver = qpmod.DenseAdmmSolver(cfg.solver)
        self.reset()

    def reset(self):
        self.u_guess = None
        self.plan = None

    def _violation(self, states, inputs, polys, obstacles):
        w = np.concatenate([states[1:].ravel(), inputs.ravel()])
        viol = 0.0
        for poly in polys:
            if poly.n_rows:
                viol += np.maximum(poly.g @ w - poly.h, 0.0).sum()
        for obs in obstacles:
            big = obs.inflated(self.cfg.obstacle_margin) if self.cfg.obstacle_margin else obs
            lv = big.normalized_level(states[1:, IX], states[1:, IY])
            viol += np.maximum(-lv, 0.0).sum() * min(big.rx, big.ry)
        return viol

    def _cost(self, states, inputs, refs):
        cfg = self.cfg
        e = states[1:] - refs[1:]
        c = sum(e[i] @ cfg.q @ e[i] for i in range(len(e) - 1)) + e[-1] @ cfg.p @ e[-1]
        return float(c + sum(u @ cfg.r @ u for u in inputs))

    def step(self, z_k, u_prev, refs, obstacles=(), road=None):
        cfg = self.cfg
        n = cfg.horizon
        par = cfg.params
        z_k = np.asarray(z_k, dtype=float)
        u_prev = np.asarray(u_prev, dtype=float)
        refs = _unwrap_to(window_array(refs) if not isinstance(refs, np.ndarray) else refs, z_k[IPSI])
        refs = refs[: n + 1]
        held = _input_box(cfg.limits, u_prev)
        guesses = [np.tile(held, (n, 1)), np.tile([held[0], 0.0], (n, 1))]
        if self.u_guess is not None:
            guesses.insert(0, np.vstack([self.u_guess[1:], self.u_guess[-1:]]))

        state_box, input_box = box_rows(cfg.limits)
        fixed = [horizon_rows(state_box, input_box, n), rate_rows(u_prev, n, cfg.limits)]
        if road is not None:
            fixed.append(road_tangent_rows(road, refs[1:]))

        t0 = time.perf_counter()
        status = NOT_CONVERGED
        objective = float("nan")
        step_norm = np.inf
        iters = qp_iters = 0
        mu = 1e3
        committed = 0.0
        # the explicit Euler model leaves its domain for some guesses at low speed
        states = None
        for inputs in guesses:
            try:
                states = euler_rollout(z_k, inputs, par)
                break
            except DomainError:
                continue
        if states is None:
            status = qpmod.INFEASIBLE
        for iters in range(1, cfg.sqp_max_iter + 1 if states is not None else 1):
            a_seq, b_seq = [], []
            for i in range(n):
                jz, ju = dynamics_jacobians(states[i], inputs[i], par)
                a_seq.append(np.eye(NX) + par.t_s * jz)
                b_seq.append(par.t_s * ju)
            ops = qpmod.condense(a_seq, b_seq)
            ref_dev = (refs[1:] - states[1:]).ravel()
            hess, lin = qpmod.build_cost(ops, cfg.q, cfg.r, cfg.p, None, np.zeros(NX), ref_dev)
            lin = lin + 2.0 * np.kron(np.eye(n), cfg.r) @ inputs.ravel()
            w_bar = np.concatenate([states[1:].ravel(), inputs.ravel()])
            polys = [_shift_rows(p, w_bar) for p in fixed]
            polys.append(_shift_rows(ellipse_rows(obstacles, states, cfg.obstacle_margin, n), w_bar))
            qp = qpmod.assemble_qp(ops, (hess, lin), np.zeros(NX), polys, 0)
            committed = max(committed, qp.committed_violation)
            sol = qpmod.solve_qp(qp, None, solver=self.solver)
            qp_iters += sol.iterations
            if not sol.solved:
                status = qpmod.INFEASIBLE
                break
            du = sol.primal.reshape(n, NU)
            if sol.dual.size:
                mu = max(mu, 1.1 * float(np.abs(sol.dual).max()))

            merit0 = self._cost(states, inputs, refs) + mu * self._violation(
                states, inputs, fixed, obstacles)
            slope = float(lin @ sol.primal) - mu * self._violation(states, inputs, fixed, obstacles)
            alpha = 1.0
            accepted = False
            while alpha >= 1e-3:
                trial_u = inputs + alpha * du
                try:
                    trial_z = euler_rollout(z_k, trial_u, par)
                except DomainError:
                    alpha *= 0.5
                    continue
                merit = self._cost(trial_z, trial_u, refs) + mu * self._violation(
                    trial_z, trial_u, fixed, obstacles)
                if merit <= merit0 + 1e-4 * alpha * min(slope, 0.0) or alpha * np.abs(du).max() < cfg.sqp_tol:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                step_norm = alpha * np.abs(du).max()
                break
            inputs, states = trial_u, trial_z
            step_norm = float(alpha * np.abs(du).max())
            if step_norm < cfg.sqp_tol:
                status = qpmod.SOLVED
                break
        elapsed = time.perf_counter() - t0

        if status == qpmod.INFEASIBLE:
            u = _input_box(cfg.limits, u_prev)
            self.u_guess = None
            plan = Plan(np.tile(z_k, (n + 1, 1)), np.tile(u, (n, 1)))
            diag = StepDiagnostics(status, float("nan"), np.zeros(N_SLACK), elapsed, False,
                                   float("nan"), qp_iters, iters, float(step_norm), committed)
            return u, plan, diag
        objective = self._cost(states, inputs, refs)
        self.u_guess = inputs.copy()
        self.plan = Plan(states, inputs)
        active = bool(obstacles) and any(
            np.any(obs.inflated(cfg.obstacle_margin).normalized_level(refs[1:, IX], refs[1:, IY]) < 0)
            for obs in obstacles)
        diag = StepDiagnostics(status, objective, np.zeros(N_SLACK), elapsed, active, 0.0,
                               qp_iters, iters, float(step_norm), committed)
        return inputs[0].copy(), self.plan, diag


def nmpc_sqp_step(controller: NmpcSqpController, z_k, u_prev, refs, obstacles=(), road=None):
    return controller.step(z_k, u_prev, refs, obstacles, road)


def make_controller(cfg: ControllerConfig):
    if cfg.kind == "nmpc_sqp":
        return NmpcSqpController(cfg)
    return LpvMpcController(cfg)
