"""Set-valued derivative constraints via support functions.

A multifunction ``F(x, t)`` with compact convex values is represented by one
of three models and queried through its support function
``s(F(x, t), psi) = sup_{y in F} <y, psi>``.  The pointwise violation of the
constraint ``z in F(x, t)`` is the Euclidean distance ``h(x, z, t)`` from
``z`` to the set, which equals the largest hinge value
``max(0, <z, psi> - s(F(x, t), psi))`` over unit directions ``psi``.  The
maximizing direction ``psi_star`` is unique whenever ``h > 0`` and equals the
unit vector from the nearest point toward ``z``; at ``h = 0`` the convention
``psi_star = e_1`` is used.

Model callables are vectorized like the problem callables in
:mod:`exactpen.model`: ``center(x, t)`` maps ``(N, d), (N,)`` to ``(N, d)``,
``jac_center`` to ``(N, d, d)``, ``radius`` to ``(N,)``, ``grad_radius`` to
``(N, d)``; box bounds map to ``(N, d)`` with Jacobians ``(N, d, d)`` whose
row ``k`` is the state gradient of bound component ``k``; polytope vertices
map to ``(N, K, d)`` with Jacobians ``(N, K, d, d)``.  Constants may be
passed instead of callables and get zero derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    CapabilityError,
    InvalidArgumentError,
    NondifferentiablePointError,
)
from .model import InclusionProblemSpec, Trajectory, states, tail_sums_exclusive

Array = np.ndarray

_UNIT_TOL = 1e-12
_TIE_TOL = 1e-12
_MNP_TOL = 1e-12
_MNP_MAX_ITER = 1000


def _vector_fn(value, name: str) -> Callable:
    if callable(value):
        return value
    const = np.asarray(value, dtype=float)

    def fn(x, t, _c=const):
        return np.broadcast_to(_c, (x.shape[0],) + _c.shape)

    fn._constant = True  # noqa: SLF001 - marker for zero derivative
    return fn


def _scalar_fn(value, name: str) -> Callable:
    if callable(value):
        return value
    const = float(value)

    def fn(x, t, _c=const):
        return np.full(x.shape[0], _c)

    fn._constant = True
    return fn


def _zero_jac(shape_tail):
    def fn(x, t):
        return np.zeros((x.shape[0],) + shape_tail)

    return fn


@dataclass
class SupportSetModel:
    """Ball, box, or polytope model of a state- and time-dependent set."""

    kind: str
    dim: int
    center: Optional[Callable] = None
    jac_center: Optional[Callable] = None
    radius: Optional[Callable] = None
    grad_radius: Optional[Callable] = None
    lower: Optional[Callable] = None
    upper: Optional[Callable] = None
    jac_lower: Optional[Callable] = None
    jac_upper: Optional[Callable] = None
    vertices: Optional[Callable] = None
    jac_vertices: Optional[Callable] = None

    @classmethod
    def ball(cls, dim, center, radius, jac_center=None, grad_radius=None):
        """Euclidean ball with center ``c(x, t)`` and radius ``r(x, t) >= 0``."""
        center_fn = _vector_fn(center, "center")
        radius_fn = _scalar_fn(radius, "radius")
        if jac_center is None and getattr(center_fn, "_constant", False):
            jac_center = _zero_jac((dim, dim))
        if grad_radius is None and getattr(radius_fn, "_constant", False):
            grad_radius = _zero_jac((dim,))
        return cls(
            kind="ball",
            dim=dim,
            center=center_fn,
            radius=radius_fn,
            jac_center=jac_center,
            grad_radius=grad_radius,
        )

    @classmethod
    def box(cls, dim, lower, upper, jac_lower=None, jac_upper=None):
        """Axis-aligned box with per-component bound functions of ``(x, t)``."""
        lower_fn = _vector_fn(lower, "lower")
        upper_fn = _vector_fn(upper, "upper")
        if jac_lower is None and getattr(lower_fn, "_constant", False):
            jac_lower = _zero_jac((dim, dim))
        if jac_upper is None and getattr(upper_fn, "_constant", False):
            jac_upper = _zero_jac((dim, dim))
        return cls(
            kind="box",
            dim=dim,
            lower=lower_fn,
            upper=upper_fn,
            jac_lower=jac_lower,
            jac_upper=jac_upper,
        )

    @classmethod
    def polytope(cls, dim, vertices, jac_vertices=None):
        """Convex hull of vertex functions ``v_k(x, t)``, at least one vertex."""
        vertices_fn = _vector_fn(vertices, "vertices")
        if jac_vertices is None and getattr(vertices_fn, "_constant", False):
            const = np.asarray(vertices, dtype=float)
            jac_vertices = _zero_jac((const.shape[0], dim, dim))
        return cls(
            kind="polytope",
            dim=dim,
            vertices=vertices_fn,
            jac_vertices=jac_vertices,
        )


def _check_unit(psi: Array):
    if abs(np.linalg.norm(psi) - 1.0) > _UNIT_TOL:
        raise InvalidArgumentError("psi must be a unit vector")


def _support_batch(model: SupportSetModel, x: Array, t: Array, psi: Array):
    """Support values ``(N,)`` and state gradients ``(N, d)`` per sample."""
    if model.kind == "ball":
        c = np.asarray(model.center(x, t), dtype=float)
        r = np.asarray(model.radius(x, t), dtype=float)
        if np.any(r < 0):
            raise InvalidArgumentError("ball radius must be nonnegative")
        s = np.einsum("nd,nd->n", c, psi) + r
        if model.jac_center is None or model.grad_radius is None:
            raise CapabilityError("ball support gradient needs jac_center and grad_radius")
        Jc = np.asarray(model.jac_center(x, t), dtype=float)
        gr = np.asarray(model.grad_radius(x, t), dtype=float)
        grad = np.einsum("nij,ni->nj", Jc, psi) + gr
        return s, grad
    if model.kind == "box":
        lo = np.asarray(model.lower(x, t), dtype=float)
        up = np.asarray(model.upper(x, t), dtype=float)
        if np.any(lo > up):
            raise InvalidArgumentError("box requires lower <= upper")
        s = np.sum(np.maximum(psi * lo, psi * up), axis=1)
        if model.jac_lower is None or model.jac_upper is None:
            raise CapabilityError("box support gradient needs jac_lower and jac_upper")
        Jlo = np.asarray(model.jac_lower(x, t), dtype=float)
        Jup = np.asarray(model.jac_upper(x, t), dtype=float)
        # Component k contributes psi_k * grad(bound_k); the active bound is
        # the upper one for psi_k >= 0 (at psi_k = 0 the term vanishes).
        pick_up = psi >= 0
        Jsel = np.where(pick_up[:, :, None], Jup, Jlo)
        grad = np.einsum("nk,nkj->nj", psi, Jsel)
        return s, grad
    if model.kind == "polytope":
        V = np.asarray(model.vertices(x, t), dtype=float)
        if V.ndim != 3 or V.shape[2] != model.dim or V.shape[1] < 1:
            raise InvalidArgumentError("polytope vertices must have shape (N, K, d), K >= 1")
        vals = np.einsum("nkd,nd->nk", V, psi)
        smax = vals.max(axis=1)
        # Tie rule: among vertices within _TIE_TOL of the maximum, take the
        # lowest index; the returned gradient is then a subgradient choice.
        idx = np.argmax(vals >= (smax[:, None] - _TIE_TOL), axis=1)
        if model.jac_vertices is None:
            raise CapabilityError("polytope support gradient needs jac_vertices")
        J = np.asarray(model.jac_vertices(x, t), dtype=float)
        Jsel = J[np.arange(x.shape[0]), idx]
        grad = np.einsum("nij,ni->nj", Jsel, psi)
        return smax, grad
    raise InvalidArgumentError(f"unknown set model kind {model.kind!r}")


def support_value(model: SupportSetModel, x: Array, t: float, psi: Array) -> float:
    """Support function ``s(F(x, t), psi)`` for a unit direction ``psi``."""
    psi = np.asarray(psi, dtype=float)
    _check_unit(psi)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    s, _ = _support_batch(model, x, np.array([t]), psi.reshape(1, -1))
    return float(s[0])


def support_grad_x(model: SupportSetModel, x: Array, t: float, psi: Array) -> Array:
    """State gradient of the support function at a unit direction ``psi``."""
    psi = np.asarray(psi, dtype=float)
    _check_unit(psi)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    _, g = _support_batch(model, x, np.array([t]), psi.reshape(1, -1))
    return g[0]


def _min_norm_point(points: Array) -> Array:
    """Wolfe's algorithm for the minimum-norm point of a convex hull.

    ``points`` has shape ``(K, d)``.  Terminates finitely up to the tolerance
    ``_MNP_TOL`` and is capped at ``_MNP_MAX_ITER`` major cycles.
    """
    K = points.shape[0]
    scale = max(1.0, float(np.max(np.linalg.norm(points, axis=1))))
    k0 = int(np.argmin(np.einsum("kd,kd->k", points, points)))
    active = [k0]
    lam = np.array([1.0])
    x = points[k0].copy()
    for _ in range(_MNP_MAX_ITER):
        dots = points @ x
        j = int(np.argmin(dots))
        if x @ x - dots[j] <= _MNP_TOL * scale * scale:
            break
        if j in active:
            break
        active.append(j)
        lam = np.append(lam, 0.0)
        for _ in range(_MNP_MAX_ITER):
            Q = points[active]
            G = Q @ Q.T
            n_act = len(active)
            # Affine minimizer over the active set: solve the KKT system for
            # weights summing to one.
            kkt = np.zeros((n_act + 1, n_act + 1))
            kkt[:n_act, :n_act] = G
            kkt[:n_act, n_act] = 1.0
            kkt[n_act, :n_act] = 1.0
            rhs = np.zeros(n_act + 1)
            rhs[n_act] = 1.0
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
            alpha = sol[:n_act]
            if np.all(alpha > 1e-14):
                lam = alpha
                x = alpha @ Q
                break
            neg = alpha <= 1e-14
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, lam / (lam - alpha), np.inf)
            theta = float(np.min(ratios))
            theta = min(max(theta, 0.0), 1.0)
            lam = (1.0 - theta) * lam + theta * alpha
            lam[lam < 1e-14] = 0.0
            keep = lam > 0.0
            if not np.any(keep):
                keep[int(np.argmax(alpha))] = True
                lam[keep] = 1.0
            active = [a for a, k in zip(active, keep) if k]
            lam = lam[keep]
            lam = lam / lam.sum()
            x = lam @ points[active]
    return x


def _distance_batch(model: SupportSetModel, x: Array, z: Array, t: Array):
    """Distances ``(N,)`` and maximizing directions ``(N, d)`` per sample."""
    N, d = z.shape
    e1 = np.zeros(d)
    e1[0] = 1.0
    if model.kind == "ball":
        c = np.asarray(model.center(x, t), dtype=float)
        r = np.asarray(model.radius(x, t), dtype=float)
        dev = z - c
        dn = np.linalg.norm(dev, axis=1)
        h = np.maximum(0.0, dn - r)
        psi = np.tile(e1, (N, 1))
        pos = h > 0
        psi[pos] = dev[pos] / dn[pos, None]
        return h, psi
    if model.kind == "box":
        lo = np.asarray(model.lower(x, t), dtype=float)
        up = np.asarray(model.upper(x, t), dtype=float)
        proj = np.clip(z, lo, up)
        dev = z - proj
        h = np.linalg.norm(dev, axis=1)
        psi = np.tile(e1, (N, 1))
        pos = h > 0
        psi[pos] = dev[pos] / h[pos, None]
        return h, psi
    if model.kind == "polytope":
        V = np.asarray(model.vertices(x, t), dtype=float)
        h = np.empty(N)
        psi = np.tile(e1, (N, 1))
        for i in range(N):
            mnp = _min_norm_point(V[i] - z[i])  # nearest point minus z
            hi = float(np.linalg.norm(mnp))
            h[i] = hi
            if hi > _MNP_TOL:
                psi[i] = -mnp / hi
            else:
                h[i] = 0.0
        return h, psi
    raise InvalidArgumentError(f"unknown set model kind {model.kind!r}")


def inclusion_distance(model: SupportSetModel, x: Array, z: Array, t: float):
    """Distance from ``z`` to ``F(x, t)`` and the maximizing unit direction.

    Returns ``(h, psi_star)``.  ``psi_star`` is the first standard basis
    vector when ``z`` lies in the set.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    z = np.asarray(z, dtype=float).reshape(1, -1)
    h, psi = _distance_batch(model, x, z, np.array([t]))
    return float(h[0]), psi[0]


def eval_inclusion_penalty(
    traj: Trajectory, prob: InclusionProblemSpec, eps: float = 0.0
) -> float:
    """Smoothed L^p norm of the pointwise set distances ``h(x_i, z_i, t_i)``."""
    if eps < 0:
        raise InvalidArgumentError("eps must be >= 0")
    x = states(traj, prob)
    tl = traj.grid.left_nodes
    h, _ = _distance_batch(prob.set_model, x[:-1], traj.z, tl)
    S = float(np.sum(traj.grid.dt * h ** prob.p))
    sigma = (S + eps**prob.p) ** (1.0 / prob.p)
    return sigma - eps


def grad_inclusion_penalty(
    traj: Trajectory, prob: InclusionProblemSpec, eps: float = 0.0
) -> Array:
    """Exact gradient of :func:`eval_inclusion_penalty` in ``z``.

    With weights ``w_i = sigma^(1-p) h_i^(p-1)`` the gradient is
    ``dt * (w_i psi*_i - dt * sum_{j>i} w_j grad_x s(F(x_j, t_j), psi*_j))``.
    It is the exact derivative wherever every active sample has ``h > 0`` and
    the model's support function is differentiable; samples with ``h = 0``
    contribute nothing since ``p > 1``.
    """
    if eps < 0:
        raise InvalidArgumentError("eps must be >= 0")
    x = states(traj, prob)
    tl = traj.grid.left_nodes
    dt = traj.grid.dt
    h, psi = _distance_batch(prob.set_model, x[:-1], traj.z, tl)
    S = float(np.sum(dt * h ** prob.p))
    sigma = (S + eps**prob.p) ** (1.0 / prob.p)
    if sigma == 0.0:
        raise NondifferentiablePointError(
            "inclusion penalty gradient does not exist at a feasible point "
            "with eps = 0; use a positive smoothing eps"
        )
    w = sigma ** (1.0 - prob.p) * h ** (prob.p - 1.0)
    _, sgrad = _support_batch(prob.set_model, x[:-1], tl, psi)
    tail = tail_sums_exclusive(w[:, None] * sgrad)
    return dt * (w[:, None] * psi - dt * tail)
