"""Projected spectral gradient minimization of the penalized functional.

The variables are the stacked derivative and control samples.  The initial
state is built into the reconstruction, so it never appears as a constraint;
the control set is enforced by exact Euclidean projection each iteration.
The inner method is projected gradient with Barzilai-Borwein step lengths
and a nonmonotone backtracking line search; the outer driver grows the
penalty parameter and shrinks the norm smoothing until the iterate is
feasible and stationary.

Stationarity is measured as the norm of the projected-gradient step at unit
step length, scaled to the discrete L^2 norm of the underlying functions
(``||v - P(v - g)||_2 / sqrt(dt)``), which is grid-independent for the
unconstrained coordinates.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError
from .functionals import eval_objective, grad_objective, penalty_gradient
from .model import Grid, InclusionProblemSpec, Trajectory, residual, states

Array = np.ndarray


@dataclass
class SolverConfig:
    """Tolerances, continuation schedule, and line-search parameters."""

    max_outer: int = 30
    max_inner: int = 2000
    lambda_init: float = 1.0
    lambda_growth: float = 4.0
    lambda_max: float = 1e8
    eps_init: float = 1e-3
    eps_decay: float = 0.1
    eps_min: float = 1e-10
    tol_feas: float = 1e-6
    tol_stat: float = 1e-6
    tol_plateau: float = 1e-3
    ls_step_init: float = 1.0
    ls_backtrack: float = 0.5
    ls_sufficient_decrease: float = 1e-4
    ls_memory: int = 10
    # Stop an inner solve once the best value has not improved by more than
    # stall_rtol (relative) over stall_window accepted steps; 0 disables.
    stall_window: int = 250
    stall_rtol: float = 1e-12

    def __post_init__(self):
        if self.lambda_growth <= 1:
            raise InvalidArgumentError("lambda_growth must exceed 1")
        if min(self.tol_feas, self.tol_stat, self.tol_plateau) <= 0:
            raise InvalidArgumentError("tolerances must be positive")
        if self.ls_memory < 1:
            raise InvalidArgumentError("line-search memory must be >= 1")
        if not (0 < self.ls_backtrack < 1):
            raise InvalidArgumentError("backtrack factor must lie in (0, 1)")
        if self.eps_init < 0 or self.eps_min < 0 or self.eps_decay <= 0 or self.eps_decay >= 1:
            raise InvalidArgumentError("bad smoothing schedule")


@dataclass
class Solution:
    """Final iterate of a solve plus its trace.

    ``penalty`` is always the exact (eps = 0) residual norm at the final
    trajectory; ``phi_lambda`` is ``objective + lam * penalty``.
    """

    trajectory: Trajectory
    objective: float
    penalty: float
    phi_lambda: float
    lam: float
    eps: float
    status: str
    n_iterations: int
    records: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    outer_trace: list = field(default_factory=list)
    lambda_star: Optional[float] = None
    exceeded_lambda_star: Optional[bool] = None


def project_control(u: Array, control_set) -> Array:
    """Exact Euclidean projection of control samples onto the control set."""
    return control_set.project(u)


def default_trajectory(prob, grid: Grid) -> Trajectory:
    """Deterministic initial point: zero derivative, projected zero control."""
    z = np.zeros((grid.N, prob.dim_state))
    if isinstance(prob, InclusionProblemSpec):
        return Trajectory(grid=grid, z=z)
    u = project_control(np.zeros((grid.N, prob.dim_control)), prob.control_set)
    return Trajectory(grid=grid, z=z, u=u)


class _PackedProblem:
    """Flattened view of (z, u) with value, gradient, and projection."""

    def __init__(self, prob, grid: Grid, lam: float, eps: float, penalty_only: bool):
        self.prob = prob
        self.grid = grid
        self.lam = float(lam)
        self.eps = float(eps)
        self.penalty_only = penalty_only
        self.inclusion = isinstance(prob, InclusionProblemSpec)
        self.N = grid.N
        self.d = prob.dim_state
        self.m = 0 if self.inclusion else prob.dim_control
        self.nz = self.N * self.d

    def pack(self, traj: Trajectory) -> Array:
        if self.inclusion:
            return traj.z.ravel().copy()
        return np.concatenate([traj.z.ravel(), traj.u.ravel()])

    def unpack(self, v: Array) -> Trajectory:
        z = v[: self.nz].reshape(self.N, self.d)
        u = None if self.inclusion else v[self.nz :].reshape(self.N, self.m)
        return Trajectory(grid=self.grid, z=z, u=u)

    def project(self, v: Array) -> Array:
        if self.inclusion or self.prob.control_set.kind == "all":
            return v.copy()
        out = v.copy()
        u = out[self.nz :].reshape(self.N, self.m)
        out[self.nz :] = self.prob.control_set.project(u).ravel()
        return out

    def _power_sum(self, traj: Trajectory) -> float:
        p = self.prob.p
        if self.inclusion:
            from .inclusion import _distance_batch

            x = states(traj, self.prob)
            h, _ = _distance_batch(
                self.prob.set_model, x[:-1], traj.z, self.grid.left_nodes
            )
            return float(np.sum(self.grid.dt * h**p))
        r = residual(traj, self.prob).values
        mags = np.linalg.norm(r, axis=1)
        return float(np.sum(self.grid.dt * mags**p))

    def value(self, v: Array):
        """Return ``(F, objective, exact penalty)`` at ``v``."""
        traj = self.unpack(v)
        p = self.prob.p
        S = self._power_sum(traj)
        sigma = (S + self.eps**p) ** (1.0 / p)
        phi_eps = sigma - self.eps
        phi0 = S ** (1.0 / p)
        obj = eval_objective(traj, self.prob)
        F = phi_eps if self.penalty_only else obj + self.lam * phi_eps
        return F, obj, phi0

    def grad(self, v: Array) -> Array:
        traj = self.unpack(v)
        if self.penalty_only:
            g = penalty_gradient(traj, self.prob, self.eps)
            g_z, g_u = g.g_z, g.g_u
            if not self.inclusion and g_u is None:
                g_u = np.zeros((self.N, self.m))
        else:
            g = grad_objective(traj, self.prob)
            g_z, g_u = g.g_z, g.g_u
            if self.lam > 0:
                gp = penalty_gradient(traj, self.prob, self.eps)
                g_z = g_z + self.lam * gp.g_z
                if g_u is not None and gp.g_u is not None:
                    g_u = g_u + self.lam * gp.g_u
        if self.inclusion:
            return g_z.ravel()
        return np.concatenate([g_z.ravel(), g_u.ravel()])


def _spg_loop(pp: _PackedProblem, v0: Array, cfg: SolverConfig, records, walls,
              feas_stop: Optional[float] = None, max_iter: Optional[int] = None):
    """Nonmonotone projected BB gradient descent on the packed problem.

    Returns ``(v, status, n_accepted_steps)`` and appends one record per
    visited iterate.  ``feas_stop``, when set, stops as soon as the exact
    penalty drops to that level.
    """
    max_iter = cfg.max_inner if max_iter is None else max_iter
    sqdt = math.sqrt(pp.grid.dt)
    t_prev = time.perf_counter()
    v = pp.project(np.asarray(v0, dtype=float))
    F, obj, phi0 = pp.value(v)
    g = pp.grad(v)
    hist = deque([F], maxlen=cfg.ls_memory)
    alpha = cfg.ls_step_init
    best_v, best_F = v.copy(), F
    status = "iteration-limit"
    it = 0
    step_len = 0.0
    stall_anchor = (0, F)
    while True:
        stat = float(np.linalg.norm(v - pp.project(v - g)) / sqdt)
        now = time.perf_counter()
        walls.append(now - t_prev)
        t_prev = now
        records.append(
            {
                "iteration": it,
                "lambda": pp.lam,
                "eps": pp.eps,
                "phi_lambda": F if not pp.penalty_only else obj + pp.lam * phi0,
                "objective": obj,
                "residual_norm": phi0,
                "stat": stat,
                "step": step_len,
            }
        )
        if feas_stop is not None and phi0 <= feas_stop:
            status = "early-stop"
            break
        if stat <= cfg.tol_stat:
            status = "stationary"
            break
        if it >= max_iter:
            status = "iteration-limit"
            break
        if cfg.stall_window > 0 and it - stall_anchor[0] >= cfg.stall_window:
            if stall_anchor[1] - best_F <= cfg.stall_rtol * max(1.0, abs(best_F)):
                status = "iteration-limit"
                break
            stall_anchor = (it, best_F)
        d = pp.project(v - alpha * g) - v
        gtd = float(g @ d)
        if gtd >= 0.0:
            alpha = max(1e-12, alpha * 0.1)
            d = pp.project(v - alpha * g) - v
            gtd = float(g @ d)
            if gtd >= 0.0:
                status = "line-search-failure"
                break
        f_ref = max(hist)
        s = 1.0
        accepted = False
        while s >= 1e-16:
            v_trial = v + s * d
            F_t, obj_t, phi0_t = pp.value(v_trial)
            if F_t <= f_ref + cfg.ls_sufficient_decrease * s * gtd:
                accepted = True
                break
            s *= cfg.ls_backtrack
        if not accepted:
            status = "line-search-failure"
            break
        g_new = pp.grad(v_trial)
        sv = v_trial - v
        yv = g_new - g
        sty = float(sv @ yv)
        if sty > 0.0:
            alpha = float(np.clip(float(sv @ sv) / sty, 1e-12, 1e12))
        else:
            alpha = min(alpha * 10.0, 1e12)
        v, F, obj, phi0, g = v_trial, F_t, obj_t, phi0_t, g_new
        hist.append(F)
        if F < best_F:
            best_F, best_v = F, v.copy()
        step_len = s * float(np.linalg.norm(d))
        it += 1
    if status == "line-search-failure" and best_F < F:
        v = best_v
    return v, status, it


def _finish(pp: _PackedProblem, v: Array, status: str, n_iter: int, records, walls,
            cfg: SolverConfig) -> Solution:
    traj = pp.unpack(v)
    _, obj, phi0 = pp.value(v)
    return Solution(
        trajectory=traj,
        objective=obj,
        penalty=phi0,
        phi_lambda=obj + pp.lam * phi0,
        lam=pp.lam,
        eps=pp.eps,
        status=status,
        n_iterations=n_iter,
        records=records,
        wall_times=walls,
    )


def minimize_Phi(prob, lam: float, eps: float, init: Trajectory,
                 cfg: Optional[SolverConfig] = None) -> Solution:
    """Minimize the smoothed penalized functional at fixed ``(lam, eps)``.

    Terminates on the stationarity tolerance, the inner iteration cap, or
    step collapse in the line search.  On step collapse the smoothing is
    halved once and the solve retried from the stalled point before the
    failure is reported with the best iterate found.
    """
    cfg = cfg or SolverConfig()
    if lam < 0:
        raise InvalidArgumentError("lam must be >= 0")
    records, walls = [], []
    pp = _PackedProblem(prob, init.grid, lam, eps, penalty_only=False)
    v = pp.pack(init)
    v, status, it = _spg_loop(pp, v, cfg, records, walls)
    if status == "line-search-failure" and eps > cfg.eps_min:
        pp = _PackedProblem(prob, init.grid, lam, max(eps / 2.0, cfg.eps_min),
                            penalty_only=False)
        v, status, it2 = _spg_loop(pp, v, cfg, records, walls)
        it += it2
    if status == "stationary":
        _, _, phi0 = pp.value(v)
        status = "feasible-stationary" if phi0 <= cfg.tol_feas else "stationary-infeasible"
    return _finish(pp, v, status, it, records, walls, cfg)


def minimize_at_lambda(prob, lam: float, cfg: Optional[SolverConfig] = None,
                       init: Optional[Trajectory] = None,
                       grid: Optional[Grid] = None) -> Solution:
    """Minimize the true penalized functional at fixed target ``lam``.

    Internally the penalty parameter is ramped up to the target along the
    configured growth schedule with warm starts (a cold start at a large
    parameter stalls on the stiff penalty), and the smoothing is then driven
    down to ``eps_min``, so the reported value approximates the unsmoothed
    minimum at the target parameter.
    """
    cfg = cfg or SolverConfig()
    if init is None:
        if grid is None:
            raise InvalidArgumentError("minimize_at_lambda needs init or grid")
        init = default_trajectory(prob, grid)
    records, walls = [], []
    lam_cur = min(cfg.lambda_init, lam) if lam > 0 else lam
    eps = cfg.eps_init
    v = None
    status = "iteration-limit"
    total_it = 0
    pp = None
    while True:
        pp = _PackedProblem(prob, init.grid, lam_cur, eps, penalty_only=False)
        if v is None:
            v = pp.pack(init)
        v, status, it = _spg_loop(pp, v, cfg, records, walls)
        total_it += it
        if lam_cur >= lam and eps <= cfg.eps_min:
            break
        lam_cur = min(lam_cur * cfg.lambda_growth, lam) if lam_cur < lam else lam
        eps = max(eps * cfg.eps_decay, cfg.eps_min)
    if status == "stationary":
        _, _, phi0 = pp.value(v)
        status = "feasible-stationary" if phi0 <= cfg.tol_feas else "stationary-infeasible"
    return _finish(pp, v, status, total_it, records, walls, cfg)


def penalty_continuation(prob, cfg: Optional[SolverConfig] = None,
                         init: Optional[Trajectory] = None,
                         grid: Optional[Grid] = None,
                         certificate=None) -> Solution:
    """Grow the penalty parameter until the iterate is feasible and stationary.

    Each outer round minimizes at the current ``(lam, eps)``, warm-starting
    from the previous iterate.  While the exact residual norm exceeds
    ``tol_feas`` the penalty parameter is multiplied by ``lambda_growth``
    (capped at ``lambda_max``) and the smoothing is reduced.  If the cap is
    reached while still infeasible the result is reported as
    ``stationary-infeasible``.  When a certificate is supplied, the solution
    records whether the final penalty parameter reached its threshold.
    """
    cfg = cfg or SolverConfig()
    if init is None:
        if grid is None:
            raise InvalidArgumentError("penalty_continuation needs init or grid")
        init = default_trajectory(prob, grid)
    records, walls, outer_trace = [], [], []
    lam = cfg.lambda_init
    eps = cfg.eps_init
    pp = _PackedProblem(prob, init.grid, lam, eps, penalty_only=False)
    v = pp.pack(init)
    total_it = 0
    status = "iteration-limit"
    for _ in range(cfg.max_outer):
        pp = _PackedProblem(prob, init.grid, lam, eps, penalty_only=False)
        phi_start = pp.value(v)[2]
        v, inner_status, it = _spg_loop(pp, v, cfg, records, walls)
        total_it += it
        if inner_status == "line-search-failure" and eps > cfg.eps_min:
            eps = max(eps / 2.0, cfg.eps_min)
            pp = _PackedProblem(prob, init.grid, lam, eps, penalty_only=False)
            v, inner_status, it = _spg_loop(pp, v, cfg, records, walls)
            total_it += it
        _, _, phi0 = pp.value(v)
        outer_trace.append(
            {"lambda": lam, "eps": eps, "phi_start": phi_start, "phi_end": phi0}
        )
        stationary = inner_status == "stationary"
        if phi0 <= cfg.tol_feas and stationary:
            status = "feasible-stationary"
            break
        if phi0 > cfg.tol_feas and lam >= cfg.lambda_max:
            status = "stationary-infeasible" if stationary else inner_status
            break
        if inner_status == "line-search-failure":
            status = "line-search-failure"
            break
        if phi0 > cfg.tol_feas:
            lam = min(lam * cfg.lambda_growth, cfg.lambda_max)
        eps = max(eps * cfg.eps_decay, cfg.eps_min)
    sol = _finish(pp, v, status, total_it, records, walls, cfg)
    sol.outer_trace = outer_trace
    if certificate is not None:
        sol.lambda_star = float(certificate.lambda_star)
        sol.exceeded_lambda_star = sol.lam >= sol.lambda_star
    return sol


def feasibility_restore(prob, init: Trajectory,
                        cfg: Optional[SolverConfig] = None) -> Solution:
    """Drive the exact residual norm below ``tol_feas`` by minimizing it alone.

    Uses the same projected-gradient machinery on the smoothed penalty with a
    decreasing smoothing schedule; the run stops as soon as the exact
    (unsmoothed) penalty reaches the target.
    """
    cfg = cfg or SolverConfig()
    records, walls = [], []
    eps = cfg.eps_init
    pp = _PackedProblem(prob, init.grid, 0.0, eps, penalty_only=True)
    v = pp.project(pp.pack(init))
    total_it = 0
    status = "iteration-limit"
    for _ in range(cfg.max_outer):
        pp = _PackedProblem(prob, init.grid, 0.0, eps, penalty_only=True)
        _, _, phi0 = pp.value(v)
        if phi0 <= cfg.tol_feas:
            status = "early-stop"
            break
        v, inner_status, it = _spg_loop(pp, v, cfg, records, walls,
                                        feas_stop=cfg.tol_feas)
        total_it += it
        if inner_status == "early-stop":
            status = "early-stop"
            break
        if inner_status == "line-search-failure" and eps <= cfg.eps_min:
            status = "line-search-failure"
            break
        eps = max(eps * cfg.eps_decay, cfg.eps_min)
    _, _, phi0 = pp.value(v)
    final = "feasible-stationary" if phi0 <= cfg.tol_feas else (
        status if status != "early-stop" else "iteration-limit"
    )
    sol = _finish(pp, v, final, total_it, records, walls, cfg)
    sol.phi_lambda = sol.objective  # lam = 0 in restoration mode
    return sol
