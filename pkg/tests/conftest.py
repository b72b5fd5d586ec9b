"""Shared oracles and problem builders for the test suite."""

import numpy as np
import pytest

from exactpen import ControlSetModel, ProblemSpec


def fd_gradient(fun, v, rel_step=2e-4):
    """Independent finite-difference oracle (4th-order central stencil).

    The high-order stencil keeps the roundoff floor near 1e-12 so the
    1e-6 relative comparisons are meaningful even for small coordinates.
    """
    v = np.asarray(v, dtype=float)
    g = np.empty(v.size)
    for i in range(v.size):
        h = rel_step * max(1.0, abs(v[i]))
        vp1, vm1, vp2, vm2 = v.copy(), v.copy(), v.copy(), v.copy()
        vp1[i] += h
        vm1[i] -= h
        vp2[i] += 2 * h
        vm2[i] -= 2 * h
        g[i] = (fun(vm2) - 8.0 * fun(vm1) + 8.0 * fun(vp1) - fun(vp2)) / (12.0 * h)
    return g


def relative_errors(g, fd):
    """Per-coordinate relative error with a scale-aware floor.

    The floor keeps near-zero coordinates from inflating the ratio while
    still demanding absolute agreement well below the gradient scale.
    """
    g = np.asarray(g, dtype=float).ravel()
    fd = np.asarray(fd, dtype=float).ravel()
    scale = max(1.0, float(np.abs(g).max(initial=0.0)))
    denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-3 * scale)
    return np.abs(g - fd) / denom


def make_smooth_problem(seed=0, d=2, m=2, T=1.5, p=2.0):
    """Random smooth control problem with exact derivative callables."""
    rng = np.random.default_rng(seed)
    A = 0.5 * rng.standard_normal((d, d))
    B = rng.standard_normal((d, m))
    Q = np.eye(d) + 0.1 * rng.standard_normal((d, d))
    Q = 0.5 * (Q + Q.T)
    R = np.eye(m)
    c = rng.standard_normal(d)
    P = 0.3 * rng.standard_normal((d, d))
    P = 0.5 * (P + P.T)
    r = rng.standard_normal(d)

    def theta(x, u, t):
        return (
            0.5 * np.einsum("ni,ij,nj->n", x, Q, x)
            + 0.5 * np.einsum("ni,ij,nj->n", u, R, u)
            + np.sin(t) * (x @ c)
        )

    return ProblemSpec(
        dim_state=d,
        dim_control=m,
        horizon=T,
        x0=rng.standard_normal(d),
        p=p,
        theta=theta,
        grad_theta_x=lambda x, u, t: x @ Q + np.sin(t)[:, None] * c,
        grad_theta_u=lambda x, u, t: u @ R,
        f=lambda x, u, t: np.tanh(x @ A.T) + u @ B.T,
        jac_f_x=lambda x, u, t: (1.0 - np.tanh(x @ A.T) ** 2)[:, :, None] * A,
        jac_f_u=lambda x, u, t: np.broadcast_to(B, (x.shape[0], d, m)),
        zeta=lambda x: 0.5 * float(x @ P @ x) + float(r @ x),
        grad_zeta=lambda x: P @ x + r,
        control_set=ControlSetModel.all_space(),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
