"""Run configuration, batch execution, and persistent outputs.

A run is described by a small JSON document (problem id, grid size, norm
exponents, solver overrides, optional certificate request and penalty sweep)
and produces a ``report.json`` with the full iteration trace, a
``trajectory.csv`` with the final trajectory, and a ``certificate.json``
when requested.  All numeric output is serialized with 17 significant
digits, so values survive a round trip exactly.  Timing is isolated in a
single ``timing`` field; removing it makes reports of identical runs
byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .catalog import catalog_entry, catalog_get
from .certificates import build_certificate, exactness_plateau_experiment
from .errors import ConfigError
from .model import Trajectory, make_uniform_grid, reconstruct_states
from .solver import SolverConfig, Solution, default_trajectory, penalty_continuation

_CONFIG_KEYS = {
    "problem", "N", "p", "q", "solver", "certificate", "plateau_lambdas",
    "out_dir", "seed", "cert_budget",
}


@dataclass
class RunConfig:
    """Declarative description of one run."""

    problem: str
    N: int = 200
    p: float = 2.0
    q: float = 2.0
    solver: dict = field(default_factory=dict)
    certificate: bool = False
    plateau_lambdas: Optional[list] = None
    out_dir: Optional[str] = None
    seed: int = 0
    cert_budget: int = 4096

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        unknown = set(self.solver) - {f.name for f in dataclasses.fields(SolverConfig)}
        if unknown:
            raise ConfigError(f"unknown solver options: {sorted(unknown)}")


def load_run_config(path) -> RunConfig:
    """Parse a JSON run configuration.

    Raises
    ------
    ConfigError
        On malformed JSON (with line information) or unknown keys.
    """
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top-level config must be an object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {sorted(unknown)}")
    if "problem" not in raw:
        raise ConfigError(f"{path}: config requires a 'problem' id")
    return RunConfig(**raw)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(traj: Trajectory, x: np.ndarray, path) -> None:
    """Write node rows ``t, x_1..x_d, z_1..z_d, u_1..u_m``.

    Interval samples ``z`` and ``u`` are blank on the final node row.
    """
    d = traj.z.shape[1]
    m = 0 if traj.u is None else traj.u.shape[1]
    header = (
        ["t"]
        + [f"x{j+1}" for j in range(d)]
        + [f"z{j+1}" for j in range(d)]
        + [f"u{j+1}" for j in range(m)]
    )
    lines = [",".join(header)]
    N = traj.grid.N
    for i in range(N + 1):
        row = [_fmt(traj.grid.nodes[i])]
        row += [_fmt(v) for v in x[i]]
        if i < N:
            row += [_fmt(v) for v in traj.z[i]]
            row += [_fmt(v) for v in traj.u[i]] if m else []
        else:
            row += [""] * (d + m)
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trajectory_csv(path):
    """Read back a trajectory file; returns ``(t, x, z, u)`` arrays.

    ``u`` is ``None`` when the file has no control columns.
    """
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    d = sum(1 for h in header if h.startswith("x"))
    m = sum(1 for h in header if h.startswith("u"))
    rows = [ln.split(",") for ln in lines[1:]]
    t = np.array([float(r[0]) for r in rows])
    x = np.array([[float(v) for v in r[1 : 1 + d]] for r in rows])
    z = np.array([[float(v) for v in r[1 + d : 1 + 2 * d]] for r in rows[:-1]])
    u = (
        np.array([[float(v) for v in r[1 + 2 * d :]] for r in rows[:-1]])
        if m
        else None
    )
    return t, x, z, u


def _certificate_dict(cert) -> dict:
    return {
        "L": cert.L,
        "M": cert.M,
        "omega": cert.omega,
        "a": cert.a,
        "lambda0": cert.lambda0,
        "lambda_star": cert.lambda_star,
        "provenance": cert.provenance,
    }


def _solution_dict(sol: Solution) -> dict:
    return {
        "status": sol.status,
        "objective": sol.objective,
        "penalty": sol.penalty,
        "phi_lambda": sol.phi_lambda,
        "lambda": sol.lam,
        "eps": sol.eps,
        "n_iterations": sol.n_iterations,
        "lambda_star": sol.lambda_star,
        "exceeded_lambda_star": sol.exceeded_lambda_star,
        "outer_trace": sol.outer_trace,
    }


def _plateau_dict(rep) -> dict:
    return {
        "detected": rep.detected,
        "plateau_lambda": rep.plateau_lambda,
        "plateau_value": rep.plateau_value,
        "lambda_star": rep.lambda_star,
        "tol_plateau": rep.tol_plateau,
        "tol_feas": rep.tol_feas,
        "entries": [dataclasses.asdict(e) for e in rep.entries],
    }


@dataclass
class RunReport:
    """Everything a run produced, JSON-serializable."""

    mode: str
    problem: str
    config: dict
    version: str
    records: list = field(default_factory=list)
    solution: Optional[dict] = None
    certificate: Optional[dict] = None
    plateau: Optional[dict] = None
    timing: dict = field(default_factory=dict)
    trajectory: Optional[Trajectory] = None
    states: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "problem": self.problem,
            "config": self.config,
            "version": self.version,
            "records": self.records,
            "solution": self.solution,
            "certificate": self.certificate,
            "plateau": self.plateau,
            "timing": self.timing,
        }


def run(config: RunConfig, mode: str = "solve") -> RunReport:
    """Execute a run: optional certificate pipeline, then solve or sweep."""
    if mode not in ("solve", "certify", "plateau"):
        raise ConfigError(f"unknown mode {mode!r}")
    entry = catalog_entry(config.problem)
    prob = catalog_get(config.problem, p=config.p, q=config.q)
    grid = make_uniform_grid(prob.horizon, config.N)
    cfg = SolverConfig(**config.solver)
    t_start = time.perf_counter()

    cert = None
    if config.certificate or mode == "certify":
        if entry.cert_constants is None:
            raise ConfigError(
                f"problem {config.problem!r} carries no certificate constants"
            )
        cert = build_certificate(
            prob,
            entry.cert_constants,
            u_box=entry.cert_u_box,
            delta=entry.cert_delta,
            budget=config.cert_budget,
            seed=config.seed,
        )

    report = RunReport(
        mode=mode,
        problem=config.problem,
        config=dataclasses.asdict(config),
        version=__version__,
        certificate=None if cert is None else _certificate_dict(cert),
    )

    if mode == "solve":
        init = default_trajectory(prob, grid)
        sol = penalty_continuation(prob, cfg, init=init, certificate=cert)
        x = reconstruct_states(sol.trajectory, prob.x0)
        report.records = sol.records
        report.solution = _solution_dict(sol)
        report.trajectory = sol.trajectory
        report.states = x
        report.timing = {
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "iteration_wall": sol.wall_times,
            "total_wall": time.perf_counter() - t_start,
        }
    elif mode == "plateau":
        lambdas = config.plateau_lambdas or [0.1, 1.0, 10.0, 100.0]
        rep = exactness_plateau_experiment(
            prob, lambdas, cfg, grid=grid, certificate=cert
        )
        report.plateau = _plateau_dict(rep)
        report.timing = {
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "iteration_wall": [],
            "total_wall": time.perf_counter() - t_start,
        }
    else:  # certify only
        report.timing = {
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "iteration_wall": [],
            "total_wall": time.perf_counter() - t_start,
        }
    return report


def write_outputs(report: RunReport, out_dir) -> dict:
    """Persist ``report.json`` plus trajectory and certificate files.

    Returns the paths written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    paths["report"] = report_path
    if report.trajectory is not None:
        traj_path = out / "trajectory.csv"
        write_trajectory_csv(report.trajectory, report.states, traj_path)
        paths["trajectory"] = traj_path
    if report.certificate is not None:
        cert_path = out / "certificate.json"
        cert_path.write_text(json.dumps(report.certificate, indent=2) + "\n")
        paths["certificate"] = cert_path
    return paths
