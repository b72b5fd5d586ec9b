"""Command-line interface.

Subcommands: ``list`` prints the problem catalog; ``solve``, ``certify`` and
``plateau`` take a JSON run configuration.  Exit codes: 0 for a clean run
ending feasible-stationary, 2 for stationary-infeasible, 1 for errors or a
solve that did not converge.
"""

from __future__ import annotations

import argparse
import sys

from .catalog import catalog_list
from .errors import CatalogKeyError, ConfigError, InvalidArgumentError
from .runio import load_run_config, run, write_outputs


def _add_run_command(sub, name: str, help_text: str):
    sp = sub.add_parser(name, help=help_text)
    sp.add_argument("config", help="path to a JSON run configuration")
    sp.add_argument("--out", default=None, help="output directory override")
    sp.add_argument("--seed", type=int, default=None, help="random seed override")
    sp.add_argument("--grid", type=int, default=None, help="interval count override")
    sp.add_argument(
        "--lambda",
        dest="lam",
        type=float,
        default=None,
        help="initial penalty parameter override",
    )
    return sp


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exactpen",
        description="Penalty-based reduction and solution of free-endpoint "
        "trajectory optimization problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list the built-in problems")
    _add_run_command(sub, "solve", "run penalty continuation on a problem")
    _add_run_command(sub, "certify", "compute the exactness certificate constants")
    _add_run_command(sub, "plateau", "sweep the penalty parameter and detect the plateau")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for entry in catalog_list():
            cert = " [certificate]" if entry["certificate"] else ""
            print(f"{entry['id']}: {entry['description']}{cert}")
        return 0
    try:
        config = load_run_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.grid is not None:
            config.N = args.grid
        if args.lam is not None:
            config.solver = dict(config.solver, lambda_init=args.lam)
        if args.out is not None:
            config.out_dir = args.out
        report = run(config, mode=args.command)
        if config.out_dir is not None:
            paths = write_outputs(report, config.out_dir)
            for kind, path in paths.items():
                print(f"wrote {kind}: {path}")
    except (ConfigError, CatalogKeyError, InvalidArgumentError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.command == "solve":
        sol = report.solution
        print(
            f"status={sol['status']} objective={sol['objective']:.9g} "
            f"penalty={sol['penalty']:.3g} lambda={sol['lambda']:g}"
        )
        if sol["status"] == "feasible-stationary":
            return 0
        if sol["status"] == "stationary-infeasible":
            return 2
        return 1
    if args.command == "certify":
        cert = report.certificate
        print(
            f"L={cert['L']:.6g} M={cert['M']:.6g} omega={cert['omega']:.6g} "
            f"a={cert['a']:.6g} lambda0={cert['lambda0']:.6g} "
            f"lambda_star={cert['lambda_star']:.6g}"
        )
        return 0
    # plateau
    plateau = report.plateau
    if plateau["detected"]:
        print(
            f"plateau detected at lambda={plateau['plateau_lambda']:g} "
            f"value={plateau['plateau_value']:.9g}"
        )
    else:
        print("no plateau detected on the given grid")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
