"""Command line front end for convergence studies."""

from __future__ import annotations

import argparse
import sys

from .harness import ConfigError, HarnessError, RunConfig, run_study


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncvem",
        description=(
            "Run a convergence study for a nonconforming virtual element "
            "discretization of a fourth order problem."
        ),
    )
    parser.add_argument("--space", choices=("c1nc", "c1mod", "c1c0"), default="c1nc")
    parser.add_argument("--order", type=int, choices=(2, 3, 4), default=2)
    parser.add_argument(
        "--problem", choices=("perturbation", "varcoef"), default="perturbation"
    )
    parser.add_argument("--eps", type=float, default=1.0, help="perturbation parameter")
    parser.add_argument(
        "--mesh",
        default="simplex",
        help="mesh family: simplex, hex, or file:<path>",
    )
    parser.add_argument(
        "--levels",
        default="4,8,16,32",
        help="comma separated refinement levels (ignored for file meshes)",
    )
    parser.add_argument("--tol", type=float, default=1e-10, help="solver tolerance")
    parser.add_argument("--out", default="study.csv", help="CSV output path")
    parser.add_argument(
        "--dump-matrix", default=None, help="write the last assembled matrix here"
    )
    return parser


def _config_from_args(args) -> RunConfig:
    mesh_family = args.mesh
    mesh_path = None
    if mesh_family.startswith("file:"):
        mesh_family, mesh_path = "file", args.mesh[5:]
    try:
        levels = tuple(int(part) for part in args.levels.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse levels {args.levels!r}: {exc}") from exc
    if mesh_family == "file":
        levels = (0,)
    return RunConfig(
        space=args.space,
        order=args.order,
        problem=args.problem,
        eps=args.eps,
        mesh_family=mesh_family,
        mesh_path=mesh_path,
        levels=levels,
        tol=args.tol,
        output=args.out,
        dump_matrix_path=args.dump_matrix,
    ).validated()


def _print_table(records) -> None:
    print(
        f"{'level':>6} {'h':>12} {'dofs':>8} {'energy':>12} {'eoc':>6} "
        f"{'cg':>7} {'sec':>8}"
    )
    for r in records:
        eoc = f"{r.energy_eoc:6.2f}" if r.energy_eoc is not None else "   ---"
        print(
            f"{r.level:>6} {r.h:12.4e} {r.dofs:>8} {r.energy_err:12.4e} {eoc} "
            f"{r.cg_iters:>7} {r.seconds:8.2f}"
        )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
    except ConfigError as exc:
        print(f"[config] {exc}", file=sys.stderr)
        return 2
    try:
        records = run_study(config)
    except HarnessError as exc:
        print(f"[{exc.stage}] {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"[config] {exc}", file=sys.stderr)
        return 2
    _print_table(records)
    print(f"wrote {config.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
