"""Command line: one subcommand per experiment kind, plus ``catalog list``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import morse, simplicial
from .config import KINDS, POTENTIALS, from_mapping, load_batch, parse_schedule
from .errors import ConfigError, WittenMorseError
from .harness import exit_code, run_batch

log = logging.getLogger("wittenmorse")


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wittenmorse",
                                     description="Morse theory and Witten Laplacian experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("-v", "--verbose", action="store_true", help="log timing to stderr")
        p.add_argument("--config", help="TOML file of record")
        p.add_argument("--t-schedule", dest="schedule", type=parse_schedule,
                       help="comma-separated t (or lambda) values, e.g. 0,1,2,5")
        p.add_argument("--grid", type=int, help="torus grid points per axis")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=_seed, help="solver seed")
        p.add_argument("--complex", help="catalog complex name")
        p.add_argument("--off", dest="off_path", help="OFF file with the complex")
        p.add_argument("--function", help="catalog Morse function")
        p.add_argument("--name", help="experiment id (file stem of the reports)")
        p.add_argument("--workers", type=int, default=1,
                       help="experiments run concurrently in a batch file")
        if kind == "semiclassical":
            p.add_argument("--potential", choices=POTENTIALS)
        if kind == "susy-pairing":
            p.add_argument("--low-lying", action="store_true", default=None,
                           help="count low-lying eigenvalues at t > 0")
    cat = sub.add_parser("catalog", help="catalog operations")
    cat.add_argument("action", choices=["list"])
    cat.add_argument("-v", "--verbose", action="store_true")
    return parser


def _catalog_list(stream) -> int:
    print("complexes:", file=stream)
    for name, entry in sorted(simplicial.CATALOG.items()):
        params = ", ".join(f"{k}={v}" for k, v in entry.params.items())
        print(f"  {name:<12} {entry.description}" + (f" ({params})" if params else ""), file=stream)
    print("morse functions:", file=stream)
    for name, spec in sorted(morse.CATALOG.items()):
        print(f"  {name:<18} on {spec.manifold}, betti {tuple(spec.betti)}", file=stream)
    return 0


def _configs(args):
    kind = args.command
    if args.config:
        configs = load_batch(args.config, kind)
    else:
        table = {}
        if kind == "semiclassical" and args.potential:
            table["semiclassical"] = {"potential": args.potential}
        configs = [from_mapping(table, kind)]
    overrides = {"schedule": args.schedule, "grid": args.grid, "seed": args.seed,
                 "function": args.function, "name": args.name,
                 "low_lying": getattr(args, "low_lying", None)}
    if args.complex or args.off_path:
        # a mesh given on the command line replaces the file's mesh
        overrides.update(complex=args.complex, off_path=args.off_path)
    out = []
    for cfg in configs:
        if args.complex or args.off_path:
            cfg = replace(cfg, complex=None, off_path=None)
        if kind == "semiclassical" and args.potential and args.config:
            raise ConfigError("set the potential in the config file", "potential")
        out.append(cfg.with_overrides(**overrides))
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    if args.command == "catalog":
        return _catalog_list(sys.stdout)
    try:
        configs = _configs(args)
        results = run_batch(configs, args.out, workers=max(1, args.workers))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except WittenMorseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    rows = []
    for cfg, r, csv_path, json_path in results:
        rows.extend(r)
        bad = sum(x.verdict != "pass" for x in r)
        print(f"{cfg.experiment_id}: {len(r)} rows, {bad} not passing -> {csv_path}, {json_path}")
        for x in r:
            if x.verdict != "pass":
                print(f"  {x.verdict}: {x.message or x.values}", file=sys.stderr)
    return exit_code(rows)


if __name__ == "__main__":
    sys.exit(main())
