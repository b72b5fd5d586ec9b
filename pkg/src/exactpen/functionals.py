"""Objective, residual penalty, and their derivative-space gradients.

The penalized functional is ``Phi = I + lambda * phi`` where ``I`` is the
running-plus-terminal cost and ``phi`` is the L^p norm of the dynamics
residual.  Gradients are taken with respect to the derivative samples ``z``
and control samples ``u``; because every quadrature uses the same
left-endpoint rule as the state reconstruction, the formulas below are the
exact gradients of the discrete values, not approximations of a continuous
formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    CapabilityError,
    EvaluationError,
    InvalidArgumentError,
    NondifferentiablePointError,
)
from .model import (
    InclusionProblemSpec,
    ProblemSpec,
    Trajectory,
    residual,
    states,
    tail_sums_exclusive,
)

Array = np.ndarray


@dataclass
class PenaltyConfig:
    """Penalty parameter, smoothing level, and optional barrier width.

    ``lam >= 0`` weights the residual penalty.  ``smoothing_eps >= 0`` rounds
    the norm so gradients exist on the feasible set; zero recovers the exact
    penalty.  ``psi_delta``, when set, is the width used by the rational
    barrier variant :func:`eval_Psi`.
    """

    lam: float = 1.0
    smoothing_eps: float = 0.0
    psi_delta: Optional[float] = None

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidArgumentError("penalty parameter must be >= 0")
        if self.smoothing_eps < 0:
            raise InvalidArgumentError("smoothing_eps must be >= 0")
        if self.psi_delta is not None and not (self.psi_delta > 0):
            raise InvalidArgumentError("psi_delta must be positive when given")


@dataclass
class GradientPair:
    """Gradients with respect to derivative samples and control samples."""

    g_z: Array
    g_u: Optional[Array] = None


def _is_inclusion(prob) -> bool:
    return isinstance(prob, InclusionProblemSpec)


def _stage_cost(prob, x, u, t) -> Array:
    if _is_inclusion(prob):
        return np.asarray(prob.theta(x, t), dtype=float)
    return np.asarray(prob.theta(x, u, t), dtype=float)


def eval_objective(traj: Trajectory, prob) -> float:
    """Left-endpoint quadrature of the running cost plus the terminal cost."""
    x = states(traj, prob)
    tl = traj.grid.left_nodes
    th = _stage_cost(prob, x[:-1], traj.u, tl)
    if not np.all(np.isfinite(th)):
        bad = int(np.where(~np.isfinite(th))[0][0])
        raise EvaluationError(
            f"running cost is non-finite at sample {bad}, t={tl[bad]}",
            index=bad,
            time=float(tl[bad]),
        )
    terminal = float(prob.zeta(x[-1]))
    if not math.isfinite(terminal):
        raise EvaluationError("terminal cost is non-finite", index=traj.grid.N)
    return float(traj.grid.dt * np.sum(th) + terminal)


def grad_objective(traj: Trajectory, prob) -> GradientPair:
    """Exact gradient of :func:`eval_objective` in ``(z, u)``.

    The ``z`` gradient combines the tail sums of the state gradient of the
    running cost (states at later nodes depend on earlier derivative samples)
    with the terminal gradient; the ``u`` gradient is the pointwise control
    gradient of the running cost.
    """
    if prob.grad_theta_x is None or prob.grad_zeta is None:
        raise CapabilityError("grad_objective needs grad_theta_x and grad_zeta")
    if not _is_inclusion(prob) and prob.grad_theta_u is None:
        raise CapabilityError("grad_objective needs grad_theta_u")
    x = states(traj, prob)
    tl = traj.grid.left_nodes
    dt = traj.grid.dt
    if _is_inclusion(prob):
        gtx = np.asarray(prob.grad_theta_x(x[:-1], tl), dtype=float)
        g_u = None
    else:
        gtx = np.asarray(prob.grad_theta_x(x[:-1], traj.u, tl), dtype=float)
        g_u = dt * np.asarray(prob.grad_theta_u(x[:-1], traj.u, tl), dtype=float)
    gz_term = np.asarray(prob.grad_zeta(x[-1]), dtype=float).reshape(1, -1)
    g_z = dt * (dt * tail_sums_exclusive(gtx) + gz_term)
    return GradientPair(g_z=g_z, g_u=g_u)


def smoothed_norm_parts(field_norms_p_sum: float, p: float, eps: float):
    """Return ``(sigma, value)`` for the perturbed norm.

    ``sigma = (S + eps^p)^(1/p)`` and ``value = sigma - eps`` where ``S`` is
    the quadrature sum of the p-th powers.  ``value`` equals the exact norm
    at ``eps = 0`` and never exceeds it; the gap is at most ``eps``.
    """
    sigma = (field_norms_p_sum + eps**p) ** (1.0 / p)
    return sigma, sigma - eps


def _penalty_power_sum(traj: Trajectory, prob: ProblemSpec) -> tuple[Array, float]:
    r = residual(traj, prob).values
    mags = np.linalg.norm(r, axis=1)
    S = float(np.sum(traj.grid.dt * mags ** prob.p))
    return r, S


def eval_penalty(traj: Trajectory, prob: ProblemSpec, eps: float = 0.0) -> float:
    """Smoothed L^p norm of the dynamics residual.

    With ``eps = 0`` this is the exact penalty term; with ``eps > 0`` it is
    the differentiable surrogate ``(S + eps^p)^(1/p) - eps``, which lies
    within ``eps`` below the exact value.
    """
    if eps < 0:
        raise InvalidArgumentError("eps must be >= 0")
    _, S = _penalty_power_sum(traj, prob)
    return smoothed_norm_parts(S, prob.p, eps)[1]


def H_map(v: Array, p: float) -> Array:
    """The norm-gradient kernel ``|v|^(p-2) v`` with value zero at ``v = 0``.

    Acts on a single vector or on an array of vectors along the last axis.
    """
    if not (p > 1):
        raise InvalidArgumentError(f"p must exceed 1, got {p}")
    v = np.asarray(v, dtype=float)
    mags = np.linalg.norm(v, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mags > 0, mags ** (p - 2.0), 0.0)
    return scale * v


def grad_penalty(traj: Trajectory, prob: ProblemSpec, eps: float = 0.0) -> GradientPair:
    """Exact gradient of :func:`eval_penalty` in ``(z, u)``.

    Writes ``w_i = sigma^(1-p) H(r_i)`` with ``sigma`` the perturbed norm;
    the ``z`` gradient is ``dt * (w_i - dt * sum_{j>i} jac_f_x_j^T w_j)`` and
    the ``u`` gradient is ``-dt * jac_f_u_i^T w_i``.  When ``jac_f_u`` is not
    provided, the control part falls back to componentwise central finite
    differences of :func:`eval_penalty`, which costs O(N*m) extra
    evaluations.

    Raises
    ------
    NondifferentiablePointError
        If ``eps = 0`` and the trajectory is feasible (the norm has a kink
        there); pass ``eps > 0`` to smooth it.
    """
    if prob.jac_f_x is None:
        raise CapabilityError("grad_penalty needs jac_f_x")
    if eps < 0:
        raise InvalidArgumentError("eps must be >= 0")
    r, S = _penalty_power_sum(traj, prob)
    sigma, _ = smoothed_norm_parts(S, prob.p, eps)
    if sigma == 0.0:
        raise NondifferentiablePointError(
            "penalty gradient does not exist at a feasible point with eps = 0; "
            "use a positive smoothing eps"
        )
    dt = traj.grid.dt
    x = states(traj, prob)
    tl = traj.grid.left_nodes
    w = sigma ** (1.0 - prob.p) * H_map(r, prob.p)
    Jx = np.asarray(prob.jac_f_x(x[:-1], traj.u, tl), dtype=float)
    JTw = np.einsum("nij,ni->nj", Jx, w)
    g_z = dt * (w - dt * tail_sums_exclusive(JTw))
    if prob.jac_f_u is not None:
        Ju = np.asarray(prob.jac_f_u(x[:-1], traj.u, tl), dtype=float)
        g_u = -dt * np.einsum("nij,ni->nj", Ju, w)
    else:
        g_u = _grad_penalty_u_fd(traj, prob, eps)
    return GradientPair(g_z=g_z, g_u=g_u)


def _grad_penalty_u_fd(traj: Trajectory, prob: ProblemSpec, eps: float) -> Array:
    """Central finite differences of the penalty in each control coordinate."""
    N, m = traj.u.shape
    g_u = np.empty((N, m))
    work = traj.copy()
    for i in range(N):
        for l in range(m):
            h = math.sqrt(np.finfo(float).eps) * max(1.0, abs(traj.u[i, l]))
            work.u[i, l] = traj.u[i, l] + h
            fp = eval_penalty(work, prob, eps)
            work.u[i, l] = traj.u[i, l] - h
            fm = eval_penalty(work, prob, eps)
            work.u[i, l] = traj.u[i, l]
            g_u[i, l] = (fp - fm) / (2.0 * h)
    return g_u


def penalty_value(traj: Trajectory, prob, eps: float = 0.0) -> float:
    """Residual penalty for either problem kind (dispatch helper)."""
    if _is_inclusion(prob):
        from .inclusion import eval_inclusion_penalty

        return eval_inclusion_penalty(traj, prob, eps)
    return eval_penalty(traj, prob, eps)


def penalty_gradient(traj: Trajectory, prob, eps: float = 0.0) -> GradientPair:
    """Residual penalty gradient for either problem kind (dispatch helper)."""
    if _is_inclusion(prob):
        from .inclusion import grad_inclusion_penalty

        return GradientPair(g_z=grad_inclusion_penalty(traj, prob, eps), g_u=None)
    return grad_penalty(traj, prob, eps)


def eval_Phi(traj: Trajectory, prob, cfg: PenaltyConfig) -> float:
    """Penalized value ``I + lam * phi`` with the configured smoothing."""
    value = eval_objective(traj, prob)
    if cfg.lam > 0:
        value += cfg.lam * penalty_value(traj, prob, cfg.smoothing_eps)
    return value


def grad_Phi(traj: Trajectory, prob, cfg: PenaltyConfig) -> GradientPair:
    """Gradient of :func:`eval_Phi` in ``(z, u)``."""
    g = grad_objective(traj, prob)
    if cfg.lam > 0:
        gp = penalty_gradient(traj, prob, cfg.smoothing_eps)
        g.g_z = g.g_z + cfg.lam * gp.g_z
        if g.g_u is not None:
            g.g_u = g.g_u + cfg.lam * gp.g_u
    return g


def eval_Psi(traj: Trajectory, prob, cfg: PenaltyConfig) -> float:
    """Rational barrier variant: ``I + lam * phi / (delta - phi)``.

    Returns ``math.inf`` once the exact penalty reaches ``delta``.
    """
    if cfg.psi_delta is None:
        raise InvalidArgumentError("eval_Psi requires psi_delta in the config")
    phi = penalty_value(traj, prob, 0.0)
    if phi >= cfg.psi_delta:
        return math.inf
    return eval_objective(traj, prob) + cfg.lam * phi / (cfg.psi_delta - phi)
