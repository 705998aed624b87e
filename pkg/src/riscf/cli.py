"""Command line front end for the experiment sweeps."""

from __future__ import annotations

import argparse
import sys

from .errors import RiscfError
from .experiments import (
    emit_results,
    run_convergence_experiment,
    run_csi_sweep,
    run_distance_sweep,
    run_power_sweep,
    run_user_sweep,
)
from .scenario import SystemConfig, default_geometry, load_config_file, resolve_schemes

DEFAULT_GRIDS = {
    "sweep-power": "-10,0,10,20",
    "sweep-users": "2,4,6,8",
    "sweep-distance": "15,30,45,60,75",
    "sweep-csi": "0,0.1,0.2,0.3,0.4",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with 'system' and 'geometry' sections")
    p.add_argument("--seed", type=int, default=0, help="first seed (default 0)")
    p.add_argument("--seeds", type=int, default=3, help="number of seeds (default 3)")
    p.add_argument("--scheme", default="all", help="scheme name or 'all'")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--ris-bits", type=int, choices=(0, 1, 2), default=None,
                   help="override phase resolution of the proposed scheme (0 = continuous)")
    p.add_argument("--emit-plot-data", action="store_true",
                   help="also write per-iteration trace CSVs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riscf",
        description="RIS-assisted wideband cell-free downlink precoding experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("converge", "optimize every scheme at one operating point"),
        ("sweep-power", "sweep the per-AP power budget in dBm"),
        ("sweep-users", "sweep the number of users"),
        ("sweep-distance", "sweep the user cluster center along the street"),
        ("sweep-csi", "sweep the channel estimation error level"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name in DEFAULT_GRIDS:
            p.add_argument("--grid", default=DEFAULT_GRIDS[name],
                           help=f"comma-separated sweep values (default {DEFAULT_GRIDS[name]})")
    return parser


def _schemes_for(args) -> tuple[str, ...]:
    schemes = resolve_schemes(args.scheme)
    if args.ris_bits is not None and args.scheme == "proposed":
        schemes = ({0: "proposed", 1: "proposed-1bit", 2: "proposed-2bit"}[args.ris_bits],)
    return schemes


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg, geom = load_config_file(args.config)
        else:
            cfg, geom = SystemConfig(), None
        if geom is None:
            geom = default_geometry(cfg.A, cfg.R)
        seeds = list(range(args.seed, args.seed + args.seeds))
        schemes = _schemes_for(args)

        if args.command == "converge":
            result = run_convergence_experiment(cfg, geom, seeds, schemes)
        else:
            grid = [float(v) for v in args.grid.split(",") if v != ""]
            runner = {
                "sweep-power": run_power_sweep,
                "sweep-users": run_user_sweep,
                "sweep-distance": run_distance_sweep,
                "sweep-csi": run_csi_sweep,
            }[args.command]
            result = runner(cfg, geom, grid, seeds, schemes)

        paths = emit_results(result, args.out, emit_traces=args.emit_plot_data)
        for p in paths:
            print(p)
        return 0
    except RiscfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
