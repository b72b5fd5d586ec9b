"""Verifiable constants behind the exact-penalty threshold.

The chain of quantities computed here mirrors how the penalty threshold is
justified: a Gronwall bound confines the states reachable from near-feasible
sublevel sets, the Jacobian of the dynamics over that region bounds the
kernel of a backward Volterra operator, the Neumann-series majorant
``omega(tau, xi)`` bounds the inverse of that operator, which yields a
uniform negative descent rate ``a`` for the penalty term, and a sampled
Lipschitz estimate ``L`` of the objective finally gives the threshold
``lambda_star = max(lambda0, L / a)``.

The sampled constants (``M`` and ``L``) are estimates over a box, not
certified global bounds; every report carries a provenance note saying so.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import CapabilityError, InvalidArgumentError
from .model import Grid, ProblemSpec
from .solver import SolverConfig, Trajectory, default_trajectory, minimize_at_lambda

Array = np.ndarray

_SERIES_RTOL = 1e-15
_SERIES_MAX_TERMS = 500


def conjugate_exponent(r: float) -> float:
    """The exponent ``r'`` with ``1/r + 1/r' = 1``; handles 1 and inf."""
    if r == 1.0:
        return math.inf
    if math.isinf(r):
        return 1.0
    if r < 1.0:
        raise InvalidArgumentError(f"exponent must be >= 1, got {r}")
    return r / (r - 1.0)


def resolvent_bound_omega(tau: float, xi: float, p: float) -> float:
    """Series bound ``sum_n (tau^n / n!)^(1/p) xi^n`` on the inverse norm.

    Converges superexponentially for all finite arguments; terms are summed
    until the next one falls below ``1e-15`` of the partial sum or 500 terms
    are used.  The value is always >= 1 and nondecreasing in both arguments.
    """
    if tau < 0 or xi < 0:
        raise InvalidArgumentError("tau and xi must be nonnegative")
    if not (p > 1):
        raise InvalidArgumentError(f"p must exceed 1, got {p}")
    if tau == 0.0 or xi == 0.0:
        return 1.0
    total = 1.0
    log_tau = math.log(tau)
    log_xi = math.log(xi)
    for n in range(1, _SERIES_MAX_TERMS + 1):
        log_term = n * log_xi + (n * log_tau - math.lgamma(n + 1.0)) / p
        term = math.exp(log_term)
        total += term
        if term < _SERIES_RTOL * total:
            break
    return total


def _vector_pnorm(x: Array, p: float) -> float:
    if math.isinf(p):
        return float(np.max(np.abs(x)))
    return float(np.sum(np.abs(x) ** p) ** (1.0 / p))


def _dual_vector(y: Array, p: float) -> Array:
    """Unit-conjugate-norm vector ``d`` with ``<d, y> = ||y||_p``."""
    n = _vector_pnorm(y, p)
    if n == 0.0:
        e = np.zeros_like(y)
        e[0] = 1.0
        return e
    return np.sign(y) * np.abs(y) ** (p - 1.0) / n ** (p - 1.0)


@dataclass
class ResolventCheck:
    """Outcome of the discrete inverse-norm vs series-bound comparison."""

    norm_estimate: float
    omega_bound: float
    y0_norm: float
    holds: bool
    singular: bool = False


def resolvent_bound_check(y: Array, grid: Grid, p: float, y0: Optional[Array] = None,
                          seed: int = 0, n_starts: int = 32,
                          n_iters: int = 200) -> ResolventCheck:
    """Compare the discrete inverse norm of ``I - K`` against the series bound.

    ``y`` holds kernel samples ``y[i, j] = y(t_i, t_j)`` on the grid's left
    nodes; ``K`` integrates from ``t`` to ``T`` with the package quadrature,
    so ``K[i, j] = dt * y[i, j]`` for ``j >= i``.  The norm of the inverse in
    the induced discrete L^p norm is estimated from below by a p-norm power
    iteration started from ``n_starts`` random vectors, and compared against
    ``omega(T, ||y0||_p')`` where ``y0`` defaults to the columnwise maximum
    of ``|y|``.
    """
    y = np.asarray(y, dtype=float)
    N = grid.N
    if y.shape != (N, N):
        raise InvalidArgumentError(f"kernel samples must have shape ({N}, {N})")
    if y0 is None:
        y0 = np.max(np.abs(y), axis=0)
    else:
        y0 = np.asarray(y0, dtype=float)
        if np.any(np.abs(y) > y0[None, :] + 1e-12):
            raise InvalidArgumentError("kernel exceeds the supplied majorant y0")
    dt = grid.dt
    pprime = conjugate_exponent(p)
    y0_norm = float(np.sum(dt * y0**pprime) ** (1.0 / pprime))
    omega_bound = resolvent_bound_omega(grid.horizon, y0_norm, p)

    K = dt * np.triu(y)
    M = np.eye(N) - K
    try:
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lu = lu_factor(M)
        pivots = np.abs(np.diag(lu[0]))
        if pivots.min() <= 1e-14 * max(1.0, pivots.max()):
            raise np.linalg.LinAlgError("singular pivot")
    except np.linalg.LinAlgError:
        return ResolventCheck(math.inf, omega_bound, y0_norm, holds=False, singular=True)

    # Uniform quadrature weights cancel in the induced norm, so the weighted
    # discrete L^p operator norm equals the plain matrix p-norm.
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_starts):
        x = rng.standard_normal(N)
        x /= _vector_pnorm(x, p)
        for _ in range(n_iters):
            yv = lu_solve(lu, x)
            ny = _vector_pnorm(yv, p)
            if ny > best:
                best = ny
            z = lu_solve(lu, _dual_vector(yv, p), trans=1)
            nz = _vector_pnorm(z, pprime)
            if nz <= float(z @ x) * (1.0 + 1e-12) + 1e-300:
                break
            x = _dual_vector(z, pprime)
    return ResolventCheck(best, omega_bound, y0_norm, holds=best <= omega_bound)


@dataclass
class Region:
    """Axis-aligned sampling box in state and control space."""

    x_low: Array
    x_high: Array
    u_low: Optional[Array] = None
    u_high: Optional[Array] = None

    def __post_init__(self):
        self.x_low = np.asarray(self.x_low, dtype=float)
        self.x_high = np.asarray(self.x_high, dtype=float)
        if np.any(self.x_low > self.x_high):
            raise InvalidArgumentError("region requires x_low <= x_high")
        if self.u_low is not None:
            self.u_low = np.asarray(self.u_low, dtype=float)
            self.u_high = np.asarray(self.u_high, dtype=float)
            if np.any(self.u_low > self.u_high):
                raise InvalidArgumentError("region requires u_low <= u_high")


def _region_samples(region: Region, T: float, budget: int, rng) -> tuple:
    """Half lattice, half uniform random samples of (x, u, t) in the region."""
    lows = [region.x_low, region.u_low] if region.u_low is not None else [region.x_low]
    lo = np.concatenate([np.atleast_1d(a) for a in lows] + [[0.0]])
    his = [region.x_high, region.u_high] if region.u_high is not None else [region.x_high]
    hi = np.concatenate([np.atleast_1d(a) for a in his] + [[T]])
    dims = lo.size
    k = max(3, int(round((budget / 2.0) ** (1.0 / dims))))
    if k % 2 == 0:
        k += 1  # odd counts place a lattice point at box centers
    axes = [np.linspace(lo[i], hi[i], k) for i in range(dims)]
    mesh = np.meshgrid(*axes, indexing="ij")
    lattice = np.stack([m.ravel() for m in mesh], axis=1)
    n_rand = max(budget // 2, 1)
    rand = lo + (hi - lo) * rng.random((n_rand, dims))
    pts = np.vstack([lattice, rand])
    d = region.x_low.size
    x = pts[:, :d]
    if region.u_low is not None:
        m = region.u_low.size
        u = pts[:, d : d + m]
    else:
        u = None
    t = pts[:, -1]
    return x, u, t


@dataclass
class SampledBound:
    """A constant estimated by sampling, with its raw sample maximum."""

    value: float
    sample_max: float
    provenance: str = "sampled"


def kernel_bound_estimate(prob: ProblemSpec, region: Region, budget: int = 4096,
                          seed: int = 0) -> SampledBound:
    """Estimate the residual-kernel majorant ``M`` over a region.

    ``M = T^(1/p') * max ||jac_f_x||_2`` over sampled ``(x, u, t)``: the
    constant majorant of the Volterra kernel, measured in the conjugate
    norm.  This is a sampled estimate, not a certified bound.
    """
    if prob.jac_f_x is None:
        raise CapabilityError("kernel_bound_estimate needs jac_f_x")
    rng = np.random.default_rng(seed)
    x, u, t = _region_samples(region, prob.horizon, budget, rng)
    J = np.asarray(prob.jac_f_x(x, u, t), dtype=float)
    svals = np.linalg.svd(J, compute_uv=False)
    smax = float(np.max(svals[:, 0])) if svals.size else 0.0
    pprime = conjugate_exponent(prob.p)
    return SampledBound(value=prob.horizon ** (1.0 / pprime) * smax, sample_max=smax)


def descent_rate_bound(M: float, T: float, p: float) -> float:
    """Descent-rate constant ``a = 1 / ((1 + T) * omega(T, M))``."""
    if M < 0:
        raise InvalidArgumentError("M must be nonnegative")
    return 1.0 / ((1.0 + T) * resolvent_bound_omega(T, M, p))


@dataclass
class LipschitzEstimate:
    """Sampled objective Lipschitz constant and its three ingredients."""

    value: float
    max_grad_x: float
    max_grad_u: float
    max_grad_zeta: float
    provenance: str = "sampled"


def lipschitz_estimate(prob: ProblemSpec, region: Region, budget: int = 4096,
                       seed: int = 0) -> LipschitzEstimate:
    """Estimate the objective Lipschitz constant over a region.

    ``L = T * max|grad_x theta| + T^(1/q') * max|grad_u theta| +
    max|grad_zeta|`` with ``q'`` the conjugate control exponent.  Sampled,
    not certified.
    """
    if prob.grad_theta_x is None or prob.grad_theta_u is None or prob.grad_zeta is None:
        raise CapabilityError("lipschitz_estimate needs the objective gradients")
    rng = np.random.default_rng(seed)
    x, u, t = _region_samples(region, prob.horizon, budget, rng)
    gx = np.linalg.norm(
        np.asarray(prob.grad_theta_x(x, u, t), dtype=float), axis=1
    )
    gu = np.linalg.norm(
        np.asarray(prob.grad_theta_u(x, u, t), dtype=float), axis=1
    )
    gz = max(
        float(np.linalg.norm(np.asarray(prob.grad_zeta(xi), dtype=float)))
        for xi in x
    )
    qprime = conjugate_exponent(prob.q)
    T = prob.horizon
    tq = 1.0 if math.isinf(qprime) else T ** (1.0 / qprime)
    L = T * float(gx.max()) + tq * float(gu.max()) + gz
    return LipschitzEstimate(
        value=L,
        max_grad_x=float(gx.max()),
        max_grad_u=float(gu.max()),
        max_grad_zeta=gz,
    )


@dataclass
class GronwallBound:
    """Exponential a priori bound on near-feasible trajectories."""

    xsup: float
    lambda0: float
    alpha_bar: float
    C1: float
    C2: float


def gronwall_sublevel_bound(constants: dict, T: float, x0, delta: float,
                            p: float) -> GronwallBound:
    """Exponential sup-norm bound for perturbed linear-growth dynamics.

    ``constants`` holds the linear growth rate ``C_R``, the L^1 norm
    ``omega_l1`` of the forcing majorant, and the terminal-cost slope bound
    ``K1`` (``K2`` is accepted and ignored here).  With
    ``alpha_bar = |x0| + omega_l1 + T^(1/p') * delta`` the bound is
    ``xsup = alpha_bar * exp(C_R * T)``; the associated penalty threshold is
    ``lambda0 = C2 * (T * C_R + K1)`` with ``C2 = T^(1/p') * exp(C_R * T)``.
    """
    C_R = float(constants["C_R"])
    omega_l1 = float(constants["omega_l1"])
    K1 = float(constants.get("K1", 0.0))
    if min(C_R, omega_l1, K1) < 0 or delta < 0:
        raise InvalidArgumentError("Gronwall constants must be nonnegative")
    pprime = conjugate_exponent(p)
    x0n = float(np.linalg.norm(np.atleast_1d(np.asarray(x0, dtype=float))))
    growth = math.exp(C_R * T)
    alpha_bar = x0n + omega_l1 + T ** (1.0 / pprime) * delta
    xsup = alpha_bar * growth
    C1 = (x0n + omega_l1) * growth
    C2 = T ** (1.0 / pprime) * growth
    lambda0 = C2 * (T * C_R + K1)
    return GronwallBound(xsup=xsup, lambda0=lambda0, alpha_bar=alpha_bar, C1=C1, C2=C2)


def coercive_lower_bound(case: str, constants: dict, T: float) -> tuple:
    """Lower bound on the penalized value over the constraint-free set.

    ``case`` selects which coercivity pattern the user asserts:

    * ``"2a"`` (bounded controls, linear-growth costs): the Gronwall-style
      bound ``-C1 * (T * C_R + K1) - omega_l1 - K2``, valid once the penalty
      parameter reaches the associated ``lambda0``;
    * ``"2b"`` or ``"3"`` (coercive running cost, terminal cost bounded
      below): ``zeta_inf + integral(omega)``, valid for every penalty
      parameter.

    Returns ``(bound, bounded_below_flag)``.
    """
    if case == "2a":
        x0n = float(constants["x0_norm"])
        C_R = float(constants["C_R"])
        omega_l1 = float(constants["omega_l1"])
        K1 = float(constants.get("K1", 0.0))
        K2 = float(constants.get("K2", 0.0))
        C1 = (x0n + omega_l1) * math.exp(C_R * T)
        return (-C1 * (T * C_R + K1) - omega_l1 - K2, True)
    if case in ("2b", "3"):
        zeta_inf = float(constants["zeta_inf"])
        if "omega_integral" in constants:
            om = float(constants["omega_integral"])
        else:
            om = float(constants.get("omega_const", 0.0)) * T
        return (zeta_inf + om, True)
    raise InvalidArgumentError(f"unknown coercivity case {case!r}")


@dataclass
class GrowthFit:
    """Fitted constants of a sampled growth bound ``|g| <= C_R |u|^l + omega_R(t)``.

    The fit dominates the samples it was built from by construction
    (``max_violation = 0``); it is a diagnostic, not a proof, and the fitted
    ``C_R`` generally depends on the sampled control box.
    """

    order: tuple
    radius: float
    C_R: float
    omega_R: Array
    t_nodes: Array
    max_violation: float = 0.0
    certified: bool = False


def growth_condition_fit(g: Callable, order: tuple, R: float, u_box: tuple,
                         T: float, dim_state: int = 1, budget: int = 4096,
                         seed: int = 0, n_time: int = 17) -> GrowthFit:
    """Fit the smallest sampled constants of a growth bound of given order.

    Per time node, ``omega_R(t)`` is the largest ``|g|`` over samples with
    ``|u| <= 1`` and ``C_R`` is the largest ``(|g| - omega_R(t)) / |u|^l``
    over the remaining samples, clipped at zero.
    """
    if R <= 0:
        raise InvalidArgumentError("R must be positive")
    l = float(order[0])
    rng = np.random.default_rng(seed)
    u_low = np.atleast_1d(np.asarray(u_box[0], dtype=float))
    u_high = np.atleast_1d(np.asarray(u_box[1], dtype=float))
    d = int(dim_state)
    t_nodes = np.linspace(0.0, T, n_time)
    per_node = max(16, budget // n_time)
    omega = np.zeros(n_time)
    C_R = 0.0
    for i, ti in enumerate(t_nodes):
        # x uniform in the ball |x| <= R; u uniform in the box.
        dirs = rng.standard_normal((per_node, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = R * rng.random(per_node) ** (1.0 / d)
        x = dirs * radii[:, None]
        u = u_low + (u_high - u_low) * rng.random((per_node, u_low.size))
        gv = np.asarray(g(x, u, np.full(per_node, ti)), dtype=float)
        mags = np.abs(gv) if gv.ndim == 1 else np.linalg.norm(gv, axis=1)
        un = np.linalg.norm(u, axis=1)
        small = un <= 1.0
        omega[i] = float(mags[small].max()) if np.any(small) else 0.0
        big = ~small
        if np.any(big):
            ratios = (mags[big] - omega[i]) / un[big] ** l
            C_R = max(C_R, float(np.clip(ratios, 0.0, None).max()))
    return GrowthFit(order=tuple(order), radius=R, C_R=C_R, omega_R=omega,
                     t_nodes=t_nodes)


def lambda_star_bound(L: float, a: float, lambda0: float) -> float:
    """Penalty threshold ``max(lambda0, L / a)``."""
    if a <= 0:
        raise InvalidArgumentError("descent rate a must be positive")
    if L < 0 or lambda0 < 0:
        raise InvalidArgumentError("L and lambda0 must be nonnegative")
    return max(lambda0, L / a)


@dataclass
class ExactnessCertificate:
    """Computed constants behind the penalty threshold, with provenance."""

    L: float
    M: float
    omega: float
    a: float
    lambda0: float
    lambda_star: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.omega < 1.0 - 1e-12:
            raise InvalidArgumentError("omega must be >= 1")
        if min(self.L, self.M, self.a, self.lambda0) < 0:
            raise InvalidArgumentError("certificate constants must be nonnegative")
        if self.lambda_star < self.L / self.a - 1e-9 * max(1.0, self.lambda_star):
            raise InvalidArgumentError("lambda_star must dominate L / a")


def build_certificate(prob: ProblemSpec, gronwall_constants: dict,
                      u_box: Optional[tuple] = None, delta: float = 1.0,
                      budget: int = 4096, seed: int = 0,
                      inflate: float = 1.1) -> ExactnessCertificate:
    """Run the full constant pipeline for a control problem.

    The state sampling box is the Gronwall sup-norm bound inflated by 10
    percent (a recorded choice, not a derived one); the control box comes
    from the control set when it is bounded, otherwise from ``u_box``.
    """
    g = gronwall_sublevel_bound(gronwall_constants, prob.horizon, prob.x0, delta, prob.p)
    d, m = prob.dim_state, prob.dim_control
    xb = inflate * g.xsup
    cs = prob.control_set
    if u_box is not None:
        u_low = np.broadcast_to(np.asarray(u_box[0], dtype=float), (m,)).copy()
        u_high = np.broadcast_to(np.asarray(u_box[1], dtype=float), (m,)).copy()
    elif cs.kind == "box":
        u_low, u_high = cs.lower, cs.upper
    elif cs.kind == "ball":
        u_low, u_high = cs.center - cs.radius, cs.center + cs.radius
    else:
        raise InvalidArgumentError(
            "an unbounded control set needs an explicit u_box for sampling"
        )
    region = Region(
        x_low=-xb * np.ones(d), x_high=xb * np.ones(d), u_low=u_low, u_high=u_high
    )
    kb = kernel_bound_estimate(prob, region, budget=budget, seed=seed)
    om = resolvent_bound_omega(prob.horizon, kb.value, prob.p)
    a = descent_rate_bound(kb.value, prob.horizon, prob.p)
    le = lipschitz_estimate(prob, region, budget=budget, seed=seed + 1)
    lam_star = lambda_star_bound(le.value, a, g.lambda0)
    return ExactnessCertificate(
        L=le.value,
        M=kb.value,
        omega=om,
        a=a,
        lambda0=g.lambda0,
        lambda_star=lam_star,
        provenance={
            "L": "sampled",
            "M": "sampled",
            "omega": "formula",
            "a": "formula",
            "lambda0": "formula",
            "lambda_star": "formula",
            "region": f"gronwall box (xsup={g.xsup:.6g}) inflated by {inflate:g}",
            "delta": f"{delta:g}",
        },
    )


@dataclass
class PlateauEntry:
    """Per-parameter outcome of a penalty sweep."""

    lam: float
    value: float
    objective: float
    residual_norm: float
    status: str


@dataclass
class PlateauReport:
    """Penalty sweep with plateau detection.

    ``plateau_lambda`` is the smallest grid parameter from which onward the
    minimized values vary by less than ``tol_plateau`` and every solution is
    feasible to ``tol_feas``; a plateau must span at least two grid points.
    """

    entries: list
    detected: bool
    plateau_lambda: Optional[float]
    plateau_value: Optional[float]
    lambda_star: Optional[float] = None
    tol_plateau: float = 1e-3
    tol_feas: float = 1e-6


def exactness_plateau_experiment(prob, lambdas: Sequence[float],
                                 cfg: Optional[SolverConfig] = None,
                                 grid: Optional[Grid] = None,
                                 init: Optional[Trajectory] = None,
                                 certificate: Optional[ExactnessCertificate] = None,
                                 ) -> PlateauReport:
    """Minimize the penalized functional for each parameter in a sweep.

    Every solve starts from the same initial point.  Solver failures are
    recorded per parameter and do not stop the experiment.
    """
    cfg = cfg or SolverConfig()
    lambdas = [float(l) for l in lambdas]
    if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise InvalidArgumentError("the lambda grid must be strictly increasing")
    if init is None:
        if grid is None:
            raise InvalidArgumentError("plateau experiment needs init or grid")
        init = default_trajectory(prob, grid)
    entries = []
    for lam in lambdas:
        try:
            sol = minimize_at_lambda(prob, lam, cfg, init=init.copy())
            entries.append(PlateauEntry(lam, sol.phi_lambda, sol.objective,
                                        sol.penalty, sol.status))
        except Exception as exc:  # keep sweeping; record the failure
            entries.append(PlateauEntry(lam, math.nan, math.nan, math.nan,
                                        f"error: {exc}"))
    detected = False
    plateau_lambda = None
    plateau_value = None
    values = np.array([e.value for e in entries])
    feas = np.array([e.residual_norm < cfg.tol_feas for e in entries])
    for k in range(len(entries) - 1):
        window = values[k:]
        if np.all(feas[k:]) and np.all(np.isfinite(window)) and (
            window.max() - window.min() < cfg.tol_plateau
        ):
            detected = True
            plateau_lambda = lambdas[k]
            plateau_value = float(values[-1])
            break
    return PlateauReport(
        entries=entries,
        detected=detected,
        plateau_lambda=plateau_lambda,
        plateau_value=plateau_value,
        lambda_star=None if certificate is None else certificate.lambda_star,
        tol_plateau=cfg.tol_plateau,
        tol_feas=cfg.tol_feas,
    )
