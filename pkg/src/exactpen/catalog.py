"""Built-in problem catalog.

Problems are code-defined with exact derivative callables, so gradient-based
solves never fall back to finite differences.  Entries that support the
certificate pipeline carry the growth constants a user would otherwise
derive by hand, together with a bounded control box for sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import CatalogKeyError
from .inclusion import SupportSetModel
from .model import ControlSetModel, InclusionProblemSpec, ProblemSpec


@dataclass
class CatalogEntry:
    id: str
    description: str
    build: Callable
    # Gronwall/coercivity constants plus a sampling control box, for the
    # certificate pipeline; None when the pipeline does not apply.
    cert_constants: Optional[dict] = None
    cert_u_box: Optional[tuple] = None
    cert_delta: float = 1.0


def _lq_scalar(p: float = 2.0, q: float = 2.0) -> ProblemSpec:
    # min int(x^2 + u^2) with dx/dt = u, x(0) = 1, T = 1, free endpoint.
    return ProblemSpec(
        dim_state=1,
        dim_control=1,
        horizon=1.0,
        x0=np.array([1.0]),
        p=p,
        q=q,
        theta=lambda x, u, t: (x**2).sum(axis=1) + (u**2).sum(axis=1),
        grad_theta_x=lambda x, u, t: 2.0 * x,
        grad_theta_u=lambda x, u, t: 2.0 * u,
        f=lambda x, u, t: u,
        jac_f_x=lambda x, u, t: np.zeros((x.shape[0], 1, 1)),
        jac_f_u=lambda x, u, t: np.ones((x.shape[0], 1, 1)),
        zeta=lambda x: 0.0,
        grad_zeta=lambda x: np.zeros(1),
        control_set=ControlSetModel.all_space(),
    )


_DI_TARGET = np.array([1.0, 0.0])


def _double_integrator(p: float = 2.0, q: float = 2.0) -> ProblemSpec:
    # Minimum-energy transfer of a double integrator toward (1, 0) on [0, 2],
    # terminal miss penalized quadratically, control clipped to [-1, 1].
    def f(x, u, t):
        out = np.empty_like(x)
        out[:, 0] = x[:, 1]
        out[:, 1] = u[:, 0]
        return out

    def jac_f_x(x, u, t):
        J = np.zeros((x.shape[0], 2, 2))
        J[:, 0, 1] = 1.0
        return J

    def jac_f_u(x, u, t):
        J = np.zeros((x.shape[0], 2, 1))
        J[:, 1, 0] = 1.0
        return J

    return ProblemSpec(
        dim_state=2,
        dim_control=1,
        horizon=2.0,
        x0=np.zeros(2),
        p=p,
        q=q,
        theta=lambda x, u, t: (u**2).sum(axis=1),
        grad_theta_x=lambda x, u, t: np.zeros_like(x),
        grad_theta_u=lambda x, u, t: 2.0 * u,
        f=f,
        jac_f_x=jac_f_x,
        jac_f_u=jac_f_u,
        zeta=lambda x: float(((x - _DI_TARGET) ** 2).sum()),
        grad_zeta=lambda x: 2.0 * (x - _DI_TARGET),
        control_set=ControlSetModel.box(lower=np.array([-1.0]), upper=np.array([1.0])),
    )


def _logistic_harvest(p: float = 2.0, q: float = 2.0) -> ProblemSpec:
    # Maximize harvested yield int(u * x) of a logistic stock on [0, 2] with
    # harvest rate limited to [0, 0.8]; exercises state-dependent dynamics.
    return ProblemSpec(
        dim_state=1,
        dim_control=1,
        horizon=2.0,
        x0=np.array([0.5]),
        p=p,
        q=q,
        theta=lambda x, u, t: -(u * x).sum(axis=1),
        grad_theta_x=lambda x, u, t: -u,
        grad_theta_u=lambda x, u, t: -x,
        f=lambda x, u, t: x * (1.0 - x) - u,
        jac_f_x=lambda x, u, t: (1.0 - 2.0 * x)[:, :, None],
        jac_f_u=lambda x, u, t: -np.ones((x.shape[0], 1, 1)),
        zeta=lambda x: 0.0,
        grad_zeta=lambda x: np.zeros(1),
        control_set=ControlSetModel.box(lower=np.array([0.0]), upper=np.array([0.8])),
    )


_ROT = 0.5 * np.array(
    [
        [math.cos(math.pi / 6.0), -math.sin(math.pi / 6.0)],
        [math.sin(math.pi / 6.0), math.cos(math.pi / 6.0)],
    ]
)


def _inclusion_ball(p: float = 2.0, q: float = 2.0) -> InclusionProblemSpec:
    # dx/dt in B(A x, 0.5) with A a scaled rotation; quadratic running cost.
    A = _ROT

    def center(x, t):
        return x @ A.T

    def jac_center(x, t):
        return np.broadcast_to(A, (x.shape[0], 2, 2))

    model = SupportSetModel.ball(
        dim=2, center=center, radius=0.5, jac_center=jac_center
    )
    return InclusionProblemSpec(
        dim_state=2,
        horizon=1.0,
        x0=np.array([1.0, 0.0]),
        p=p,
        theta=lambda x, t: (x**2).sum(axis=1),
        grad_theta_x=lambda x, t: 2.0 * x,
        zeta=lambda x: 0.0,
        grad_zeta=lambda x: np.zeros(2),
        set_model=model,
    )


# Gronwall constants, entry by entry:
# lq-scalar: |f| = |u| <= |x| + |u|^(q/p) gives C_R = 1; over the sublevel set
#   {Phi <= c} with c = 1 (the value at the zero-control start) the control
#   norm is bounded by sqrt(c) = 1, folded into omega_l1 = T^(1/p') * 1; the
#   terminal cost is zero, so K1 = K2 = 0.
# double-integrator: |f| <= |x| + 1 on |u| <= 1 gives C_R = 1,
#   omega_l1 = T; zeta >= 0 so K1 = K2 = 0.
# logistic-harvest: on the invariant band |x| <= 1.3 reached from x0 = 0.5
#   with u in [0, 0.8], |f| <= |x| + 1.1; declared constants, not derived.
_CATALOG = {
    "lq-scalar": CatalogEntry(
        id="lq-scalar",
        description="scalar LQ: min int(x^2+u^2), dx/dt=u, x(0)=1, T=1, free u",
        build=_lq_scalar,
        cert_constants={"C_R": 1.0, "omega_l1": 1.0, "K1": 0.0, "K2": 0.0},
        cert_u_box=(-2.0, 2.0),
        cert_delta=1.0,
    ),
    "double-integrator": CatalogEntry(
        id="double-integrator",
        description="double integrator: min int(u^2) + |x(T)-(1,0)|^2, u in [-1,1], T=2",
        build=_double_integrator,
        cert_constants={"C_R": 1.0, "omega_l1": 2.0, "K1": 0.0, "K2": 0.0},
        cert_delta=1.0,
    ),
    "logistic-harvest": CatalogEntry(
        id="logistic-harvest",
        description="logistic stock harvest: max int(u*x), dx/dt=x(1-x)-u, u in [0,0.8], T=2",
        build=_logistic_harvest,
        cert_constants={"C_R": 1.0, "omega_l1": 2.2, "K1": 0.0, "K2": 0.0},
        cert_delta=1.0,
    ),
    "inclusion-ball": CatalogEntry(
        id="inclusion-ball",
        description="differential inclusion dx/dt in B(Ax, 0.5), A scaled rotation, min int(|x|^2), T=1",
        build=_inclusion_ball,
    ),
}


def catalog_list() -> list:
    """Descriptions of the built-in problems."""
    return [
        {"id": e.id, "description": e.description, "certificate": e.cert_constants is not None}
        for e in _CATALOG.values()
    ]


def catalog_entry(problem_id: str) -> CatalogEntry:
    if problem_id not in _CATALOG:
        known = ", ".join(sorted(_CATALOG))
        raise CatalogKeyError(f"unknown problem {problem_id!r}; available: {known}")
    return _CATALOG[problem_id]


def catalog_get(problem_id: str, p: float = 2.0, q: float = 2.0):
    """Build a catalog problem with the requested norm exponents."""
    return catalog_entry(problem_id).build(p=p, q=q)
