"""Discrete derivative-space model of free-endpoint trajectory problems.

A trajectory is parameterized by the samples ``z`` of its derivative on a
uniform grid, together with control samples ``u``.  States are recovered by
the cumulative-sum map ``x_{i+1} = x_i + dt * z_i``, which is the discrete
counterpart of integrating the derivative from the initial state.  All
quadrature in the package is the left-endpoint rectangle rule on the same
grid, so that discretize-then-differentiate and differentiate-then-discretize
produce the same gradient expressions exactly.

All problem callables are vectorized over a leading sample axis:

* ``theta(x, u, t)`` with ``x`` of shape ``(N, d)``, ``u`` of shape
  ``(N, m)`` and ``t`` of shape ``(N,)`` returns shape ``(N,)``,
* ``f(x, u, t)`` returns shape ``(N, d)``,
* ``jac_f_x`` returns ``(N, d, d)`` and ``jac_f_u`` returns ``(N, d, m)``,
* ``grad_theta_x`` returns ``(N, d)`` and ``grad_theta_u`` returns ``(N, m)``,
* ``zeta(x)`` and ``grad_zeta(x)`` act on a single terminal state ``(d,)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError, InvalidArgumentError

Array = np.ndarray


def _as_float_array(x, name: str) -> Array:
    a = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} must be finite")
    return a


@dataclass
class ControlSetModel:
    """Admissible control set: all of space, a box, or a Euclidean ball.

    Use the constructors :meth:`all_space`, :meth:`box` and :meth:`ball`.
    """

    kind: str
    lower: Optional[Array] = None
    upper: Optional[Array] = None
    center: Optional[Array] = None
    radius: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("all", "box", "ball"):
            raise InvalidArgumentError(f"unknown control set kind {self.kind!r}")
        if self.kind == "box":
            self.lower = _as_float_array(self.lower, "lower")
            self.upper = _as_float_array(self.upper, "upper")
            if self.lower.shape != self.upper.shape:
                raise InvalidArgumentError("box bounds must have matching shapes")
            if np.any(self.lower > self.upper):
                raise InvalidArgumentError("box requires lower <= upper componentwise")
        if self.kind == "ball":
            self.center = _as_float_array(self.center, "center")
            self.radius = float(self.radius)
            if self.radius < 0:
                raise InvalidArgumentError("ball radius must be nonnegative")

    @classmethod
    def all_space(cls) -> "ControlSetModel":
        return cls(kind="all")

    @classmethod
    def box(cls, lower, upper) -> "ControlSetModel":
        return cls(kind="box", lower=lower, upper=upper)

    @classmethod
    def ball(cls, center, radius) -> "ControlSetModel":
        return cls(kind="ball", center=center, radius=radius)

    def project(self, u: Array) -> Array:
        """Euclidean projection of control samples ``u`` (shape ``(N, m)``)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "all":
            return u.copy()
        if self.kind == "box":
            return np.clip(u, self.lower, self.upper)
        # ball: radial scaling of the part exceeding the radius
        dev = u - self.center
        norms = np.linalg.norm(dev, axis=-1, keepdims=True)
        scale = np.ones_like(norms)
        outside = norms[..., 0] > self.radius
        scale[outside] = self.radius / norms[outside]
        return self.center + dev * scale

    def contains(self, u: Array, tol: float = 1e-12) -> bool:
        u = np.asarray(u, dtype=float)
        if self.kind == "all":
            return True
        if self.kind == "box":
            return bool(
                np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol)
            )
        return bool(
            np.all(np.linalg.norm(u - self.center, axis=-1) <= self.radius + tol)
        )


@dataclass(frozen=True)
class Grid:
    """Uniform partition of ``[0, T]`` into ``N`` intervals."""

    N: int
    nodes: Array
    dt: float

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def left_nodes(self) -> Array:
        """Left endpoints of the intervals, where samples live."""
        return self.nodes[:-1]


def make_uniform_grid(T: float, N: int) -> Grid:
    """Build the uniform grid with ``N`` intervals on ``[0, T]``.

    Raises
    ------
    InvalidArgumentError
        If ``T <= 0`` or ``N < 1``.
    """
    if not np.isfinite(T) or T <= 0:
        raise InvalidArgumentError(f"horizon must be positive, got {T}")
    if N < 1:
        raise InvalidArgumentError(f"interval count must be >= 1, got {N}")
    N = int(N)
    dt = T / N
    nodes = np.linspace(0.0, T, N + 1)
    return Grid(N=N, nodes=nodes, dt=dt)


@dataclass
class ProblemSpec:
    """A free-endpoint control problem in derivative-space form.

    Minimize the running cost ``theta`` integrated over ``[0, T]`` plus the
    terminal cost ``zeta(x(T))``, subject to the dynamics ``dx/dt = f`` with
    ``x(0) = x0`` and control constraint ``u in control_set``.  The exponent
    ``p`` sets the norm used for the dynamics residual penalty; ``q`` is the
    control-space exponent used only for bookkeeping in the certificate
    computations (``q = inf`` is allowed there).
    """

    dim_state: int
    dim_control: int
    horizon: float
    x0: Array
    theta: Callable
    f: Callable
    zeta: Callable
    p: float = 2.0
    q: float = 2.0
    grad_theta_x: Optional[Callable] = None
    grad_theta_u: Optional[Callable] = None
    jac_f_x: Optional[Callable] = None
    jac_f_u: Optional[Callable] = None
    grad_zeta: Optional[Callable] = None
    control_set: ControlSetModel = field(default_factory=ControlSetModel.all_space)

    def __post_init__(self):
        if self.dim_state < 1 or self.dim_control < 1:
            raise InvalidArgumentError("state and control dimensions must be >= 1")
        if not (self.horizon > 0):
            raise InvalidArgumentError("horizon must be positive")
        if not (1.0 < self.p < np.inf):
            raise InvalidArgumentError(f"p must lie in (1, inf), got {self.p}")
        if not (1.0 <= self.q):
            raise InvalidArgumentError(f"q must lie in [1, inf], got {self.q}")
        self.x0 = _as_float_array(self.x0, "x0").reshape(self.dim_state)


@dataclass
class InclusionProblemSpec:
    """A free-endpoint problem whose derivative is constrained to a set.

    The running cost ``theta(x, t)`` has no control argument; the dynamics
    constraint is ``dx/dt in F(x, t)`` with ``F`` described by ``set_model``
    (see :mod:`exactpen.inclusion`).
    """

    dim_state: int
    horizon: float
    x0: Array
    theta: Callable
    zeta: Callable
    set_model: "object"
    p: float = 2.0
    grad_theta_x: Optional[Callable] = None
    grad_zeta: Optional[Callable] = None

    def __post_init__(self):
        if self.dim_state < 1:
            raise InvalidArgumentError("state dimension must be >= 1")
        if not (self.horizon > 0):
            raise InvalidArgumentError("horizon must be positive")
        if not (1.0 < self.p < np.inf):
            raise InvalidArgumentError(f"p must lie in (1, inf), got {self.p}")
        self.x0 = _as_float_array(self.x0, "x0").reshape(self.dim_state)


@dataclass
class Trajectory:
    """Derivative-space trajectory: interval samples of ``z`` and ``u``.

    ``z`` has shape ``(N, d)``; ``u`` has shape ``(N, m)`` or is ``None`` for
    inclusion problems.  ``x`` caches the reconstructed node states of shape
    ``(N + 1, d)`` once :func:`reconstruct_states` has run.
    """

    grid: Grid
    z: Array
    u: Optional[Array] = None
    x: Optional[Array] = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        if self.z.ndim != 2 or self.z.shape[0] != self.grid.N:
            raise InvalidArgumentError(
                f"z must have shape (N, d) with N={self.grid.N}, got {self.z.shape}"
            )
        if self.u is not None:
            self.u = np.asarray(self.u, dtype=float)
            if self.u.ndim != 2 or self.u.shape[0] != self.grid.N:
                raise InvalidArgumentError(
                    f"u must have shape (N, m) with N={self.grid.N}, got {self.u.shape}"
                )

    def copy(self) -> "Trajectory":
        return Trajectory(
            grid=self.grid,
            z=self.z.copy(),
            u=None if self.u is None else self.u.copy(),
            x=None if self.x is None else self.x.copy(),
        )


@dataclass
class ResidualField:
    """Interval samples of the dynamics residual ``z_i - f(x_i, u_i, t_i)``."""

    values: Array


def reconstruct_states(traj: Trajectory, x0: Array) -> Array:
    """Recover node states by cumulative summation of the derivative samples.

    ``x_0 = x0`` and ``x_{i+1} = x_i + dt * z_i``.  The result is cached on
    the trajectory and returned.
    """
    z = traj.z
    if not np.all(np.isfinite(z)):
        raise InvalidArgumentError("derivative samples must be finite")
    x0 = np.asarray(x0, dtype=float).reshape(z.shape[1])
    x = np.empty((traj.grid.N + 1, z.shape[1]))
    x[0] = x0
    np.cumsum(traj.grid.dt * z, axis=0, out=x[1:])
    x[1:] += x0
    traj.x = x
    return x


def states(traj: Trajectory, prob) -> Array:
    """Cached node states of ``traj``, reconstructing from ``prob.x0`` if needed."""
    if traj.x is not None:
        return traj.x
    return reconstruct_states(traj, prob.x0)


def residual(traj: Trajectory, prob: ProblemSpec) -> ResidualField:
    """Dynamics residual sampled at the left endpoint of each interval.

    Raises
    ------
    EvaluationError
        If ``f`` returns a non-finite value; the error carries the first
        offending sample index and time.
    """
    x = states(traj, prob)
    tl = traj.grid.left_nodes
    fx = np.asarray(prob.f(x[:-1], traj.u, tl), dtype=float).reshape(traj.z.shape)
    if not np.all(np.isfinite(fx)):
        bad = int(np.where(~np.isfinite(fx).all(axis=1))[0][0])
        raise EvaluationError(
            f"dynamics returned a non-finite value at sample {bad}, t={tl[bad]}",
            index=bad,
            time=float(tl[bad]),
        )
    return ResidualField(values=traj.z - fx)


def lp_norm(values, p: float, grid: Grid) -> float:
    """Discrete L^p norm of a sampled field with left-endpoint quadrature.

    ``values`` may be a :class:`ResidualField`, a ``(N,)`` array of scalars
    or a ``(N, d)`` array of vectors; vector samples are measured with the
    Euclidean norm.
    """
    if not (1.0 < p < np.inf):
        raise InvalidArgumentError(f"p must lie in (1, inf), got {p}")
    v = values.values if isinstance(values, ResidualField) else np.asarray(values, dtype=float)
    mags = np.abs(v) if v.ndim == 1 else np.linalg.norm(v, axis=1)
    return float(np.sum(grid.dt * mags**p) ** (1.0 / p))


def euler_feasible_trajectory(prob: ProblemSpec, grid: Grid, u: Array) -> Trajectory:
    """Forward-simulate the dynamics so the discrete residual is exactly zero.

    Sets ``z_i = f(x_i, u_i, t_i)`` with states updated by the same
    cumulative-sum rule used in :func:`reconstruct_states`.
    """
    u = np.asarray(u, dtype=float).reshape(grid.N, prob.dim_control)
    d = prob.dim_state
    x = np.empty((grid.N + 1, d))
    z = np.empty((grid.N, d))
    x[0] = prob.x0
    tl = grid.left_nodes
    # Accumulate exactly as reconstruct_states does (running sum of dt*z, then
    # add x0), so the cached states match a later reconstruction bitwise.
    s = np.zeros(d)
    for i in range(grid.N):
        z[i] = np.asarray(
            prob.f(x[i : i + 1], u[i : i + 1], tl[i : i + 1]), dtype=float
        ).reshape(d)
        s = s + grid.dt * z[i]
        x[i + 1] = s + prob.x0
    # Re-evaluate the derivative in one batched call: residual() evaluates f
    # the same way, so the residual of the returned trajectory is exactly
    # zero even when batched and per-sample evaluation round differently.
    z = np.asarray(prob.f(x[:-1], u, tl), dtype=float).reshape(grid.N, d)
    traj = Trajectory(grid=grid, z=z, u=u)
    traj.x = x
    return traj


def tail_sums_exclusive(a: Array) -> Array:
    """``out[i] = sum_{j > i} a[j]`` along axis 0, accumulated from the end."""
    out = np.zeros_like(a)
    if a.shape[0] > 1:
        out[:-1] = np.cumsum(a[::-1], axis=0)[::-1][1:]
    return out
