"""Command line entry point.

``viamr run`` drives the refinement loop, ``viamr partition`` the partition
balance study and ``viamr gap`` the 1D obstacle/Poisson comparison.  Exit
status is 0 on success, 2 on solver failure and 3 on configuration errors.
"""

import argparse
import dataclasses
import logging
import os
import sys

from .amr import UdoParams, VcesParams
from .driver import (
    STRATEGIES,
    RunConfig,
    fitted_rate,
    run_gap_study,
    run_partition_study,
    run_refinement_loop,
)
from .errors import ConfigError, InvalidArgument, SolverFailure
from .problems import ONE_D_PROBLEMS

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3

logger = logging.getLogger("viamr")


def _common(p):
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--problem", help="poisson, ball, spiral, obstacle1d or poisson1d")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--iterations", type=int)
    p.add_argument("--initial-n", type=int, dest="initial_n")
    p.add_argument("--alpha", type=float, help="VCES lower threshold")
    p.add_argument("--beta", type=float, help="VCES upper threshold")
    p.add_argument("--depth", type=int, help="UDO dilation depth")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="viamr", description="Adaptive mesh refinement around obstacle-problem free boundaries.")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="solve-tag-refine loop"))
    p = sub.add_parser("partition", help="partition balance of adaptive vs uniform meshes")
    _common(p)
    p.add_argument("--parts", type=int, default=5)
    p = sub.add_parser("gap", help="1D obstacle vs Poisson convergence sweep")
    p.add_argument("--ns", type=int, nargs="+", default=[32, 64, 128, 256])
    p.add_argument("--out")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def resolve_config(args):
    """Merge a JSON config file with command line overrides."""
    data = {}
    if args.config:
        data = RunConfig.from_json(args.config).to_dict()
    for key in ("problem", "strategy", "iterations", "initial_n"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if args.out is not None:
        data["out_dir"] = args.out
    vces = dict(data.get("vces") or dataclasses.asdict(VcesParams()))
    if args.alpha is not None:
        vces["alpha"] = args.alpha
    if args.beta is not None:
        vces["beta"] = args.beta
    udo = dict(data.get("udo") or dataclasses.asdict(UdoParams()))
    if args.depth is not None:
        udo["depth"] = args.depth
    data["vces"], data["udo"] = vces, udo
    return RunConfig.from_dict(data)


def _print_records(records):
    print("iter  vertices     cells  newton  l2_error    1-jaccard   hausdorff   decision")
    for r in records:
        print(f"{r.iteration:4d}  {r.vertices:8d}  {r.cells:8d}  {r.solver_iterations:6d}  "
              f"{r.l2_error:.4e}  {r.one_minus_jaccard:.4e}  {r.hausdorff:.4e}  {r.decision}")


def _cmd_run(args):
    config = resolve_config(args)
    if config.problem in ONE_D_PROBLEMS:
        ns = [config.initial_n * 2 ** k for k in range(config.iterations)]
        if min(ns) < 2:
            raise ConfigError("1D sweeps need initial_n >= 2")
        return _gap(ns, config.out_dir)
    records = run_refinement_loop(config)
    _print_records(records)
    if config.out_dir:
        print(f"wrote {os.path.join(config.out_dir, 'convergence.csv')}")
    return EXIT_OK


def _cmd_partition(args):
    config = resolve_config(args)
    study = run_partition_study(config, args.parts)
    for tag, rep, cells in (("adaptive", study.adaptive, study.adaptive_cells),
                            ("uniform", study.uniform, study.uniform_cells)):
        print(f"{tag} mesh, {cells} cells, inactive-ratio spread {rep.spread:.4f}")
        for row in rep.rows():
            print(f"  part {row['part']}: active {row['active']:6d}  "
                  f"inactive {row['inactive']:6d}  ratio {row['ratio']:.3f}")
    return EXIT_OK


def _gap(ns, out):
    rows = run_gap_study(ns, out_dir=out)
    print("     n   obstacle_l2   gap          poisson_l2")
    for r in rows:
        print(f"{r.n:6d}   {r.obstacle_l2:.4e}   {r.gap:.4e}   {r.poisson_l2:.4e}")
    if len(rows) > 1:
        n = [r.n for r in rows]
        print(f"fitted rates: obstacle {fitted_rate(n, [r.obstacle_l2 for r in rows]):.3f}, "
              f"poisson {fitted_rate(n, [r.poisson_l2 for r in rows]):.3f}")
    return EXIT_OK


def _cmd_gap(args):
    if min(args.ns) < 2:
        raise ConfigError("mesh sizes must be at least 2")
    return _gap(args.ns, args.out)


COMMANDS = {"run": _cmd_run, "partition": _cmd_partition, "gap": _cmd_gap}


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, InvalidArgument) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
