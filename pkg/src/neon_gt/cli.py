"""Command-line entry point: ``validate``, ``design``, ``simulate``, ``sweep``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import List, Optional

from .harness import (
    ExperimentConfig,
    cells_to_json,
    constraint_report,
    fixed_design,
    rows_to_csv,
    run_experiment,
    sweep,
)
from .tree_design import design_to_dict

# CLI flag -> ExperimentConfig field
FLAG_FIELDS = {
    "scheme": "scheme", "n": "n", "k": "k", "c": "c", "b": "b", "epsilon": "epsilon",
    "eta": "eta", "zeta": "zeta", "lam": "lam", "c_prime": "c_prime",
    "c_double_prime": "c_double_prime", "r": "r", "rho": "rho", "rho_prime": "rho_prime",
    "beta": "beta", "omega": "omega", "trials": "trials", "seed": "seed",
    "defective_model": "defective_model", "workers": "workers",
}
_FIELD_TYPES = {
    "scheme": str, "defective_model": str, "n": int, "k": int, "c": int, "b": int,
    "c_prime": int, "r": int, "trials": int, "seed": int, "workers": int,
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config document")
    p.add_argument("--scheme", choices=["noiseless", "fpc", "bsc", "bac"])
    p.add_argument("--n", type=int, help="number of items N (power of two)")
    p.add_argument("--k", type=int, help="defective bound K")
    p.add_argument("--c", type=int, help="circles per item C")
    p.add_argument("--b", type=int, help="block-overflow exponent b")
    p.add_argument("--lambda", dest="lam", type=float, help="blocks factor (overrides C*e^(b+2))")
    p.add_argument("--zeta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--c-prime", dest="c_prime", type=int, help="repetitions C'")
    p.add_argument("--c-double-prime", dest="c_double_prime", type=float, help="BAC chain factor C''")
    p.add_argument("--r", type=int, help="subtree depth per decoding step")
    p.add_argument("--rho", type=float, help="0 -> 1 flip probability")
    p.add_argument("--rho-prime", dest="rho_prime", type=float, help="1 -> 0 flip probability")
    p.add_argument("--beta", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--defective-model", dest="defective_model", choices=["exact", "at-most"])
    p.add_argument("--defectives", help="explicit comma-separated defective ids")
    p.add_argument("--workers", type=int)
    p.add_argument("--reuse-design", action="store_true", default=None)
    p.add_argument("--independent-blocks", action="store_true", default=None,
                   help="redraw the local design per block")
    p.add_argument("--strict", action="store_true", default=None)
    p.add_argument("--out", type=Path)
    p.add_argument("--format", choices=["csv", "json"], default="csv")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for flag, name in FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[name] = value
    if args.defectives:
        overrides["defectives"] = tuple(int(x) for x in args.defectives.split(","))
    if args.reuse_design:
        overrides["reuse_design"] = True
    if args.independent_blocks:
        overrides["shared_local"] = False
    if args.strict:
        overrides["strict"] = True
    return replace(cfg, **overrides)


def _parse_grid(items: List[str]) -> dict:
    known = {f.name for f in fields(ExperimentConfig)}
    grid = {}
    for item in items:
        key, _, values = item.partition("=")
        key = key.strip().replace("-", "_")
        key = FLAG_FIELDS.get(key, key)
        if key not in known:
            raise SystemExit(f"unknown grid field {key!r}")
        cast = _FIELD_TYPES.get(key, float)
        grid[key] = [cast(v) for v in values.split(",") if v]
    return grid


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        out.write_text(text)


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="neon-gt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("validate", "print the constraint report"),
        ("design", "emit a serialized design"),
        ("simulate", "run one Monte Carlo experiment"),
        ("sweep", "run a parameter grid"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)
        if name == "sweep":
            p.add_argument("--grid", action="append", default=[], metavar="FIELD=v1,v2",
                           help="sweep axis; repeat for a cartesian product")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = config_from_args(args)

    if args.command == "validate":
        params = cfg.build_params()
        report = constraint_report(params)
        doc = {"parameters": params.to_dict(), "constraints": report.to_dict(),
               "all_satisfied": report.all_satisfied}
        _emit(json.dumps(doc, indent=2, sort_keys=True), args.out)
        if cfg.strict and not report.all_satisfied:
            return 2
        return 0

    if args.command == "design":
        design = fixed_design(cfg)
        _emit(json.dumps(design_to_dict(design)), args.out)
        return 0

    if args.command == "simulate":
        report = run_experiment(cfg)
        if args.format == "csv":
            _emit(rows_to_csv([report.row()]), args.out)
        else:
            _emit(json.dumps(report.to_dict(include_trials=True), indent=2, sort_keys=True), args.out)
        return 0

    grid = _parse_grid(args.grid)
    if not grid:
        raise SystemExit("sweep needs at least one --grid axis")
    cells = sweep(cfg, grid)
    if args.format == "csv":
        _emit(rows_to_csv([c.row() for c in cells]), args.out)
    else:
        _emit(cells_to_json(cells), args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
