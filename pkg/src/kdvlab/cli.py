"""Command-line entry point: ``kdvlab {list,sample,evolve,test,experiment}``.

Exit status: 0 when every verdict is as expected, 1 on an unexpected
verdict, 2 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import ensemble_io
from .errors import KdvLabError
from .experiments import DESCRIPTIONS, OUTDIR_ENV, REGISTRY, load_config, run_experiment
from .field import GridField
from .flows import FlowSpec, evolve
from .samplers import (
    WeightedEnsemble,
    bridge_ensemble,
    lattice_gaussian_ensemble,
    sample_p04_importance,
    sample_p04_pcn,
    white_noise_ensemble,
)
from .stats import two_sample_report, whiteness_report

log = logging.getLogger("kdvlab")

MEASURES = ("white_noise", "white_noise_full", "bridge", "p04_importance", "p04_pcn", "lattice")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI config file (key = value, sections per experiment)")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--outdir", help=f"output directory (default ${OUTDIR_ENV} or ./runs)")
    parser.add_argument("--n", type=int, help="grid size")
    parser.add_argument("--m", type=int, help="ensemble size")
    parser.add_argument("--quiet", action="store_true", help="only report errors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kdvlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list", help="list registered experiments")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("experiment", help="run a registered experiment")
    p.add_argument("id", help="experiment id, e.g. E1")
    p.add_argument("--label", help="run label (default seed<seed>)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key; repeatable")
    _common(p)

    p = sub.add_parser("sample", help="draw an ensemble and write it to a container")
    p.add_argument("--measure", choices=MEASURES, default="white_noise")
    p.add_argument("--modes", type=int, default=8, help="white-noise band limit")
    p.add_argument("--out", required=True, help="binary ensemble path")
    p.add_argument("--csv", help="also export as CSV")
    _common(p)

    p = sub.add_parser("evolve", help="evolve every member of an ensemble")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--flow", required=True,
                   choices=("zk_lattice", "alpha_lattice", "airy", "kdv", "mkdv", "burgers_viscous"))
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--T", type=float, required=True, dest="t_final")
    p.add_argument("--alpha", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--diagnostics", help="write invariant diagnostics CSV here")
    _common(p)

    p = sub.add_parser("test", help="whiteness or two-sample report for stored ensembles")
    p.add_argument("--input", required=True)
    p.add_argument("--against", help="second ensemble for a two-sample test")
    p.add_argument("--k-max", type=int, default=8)
    p.add_argument("--csv", help="write the report as CSV")
    _common(p)
    return parser


def _sample(args) -> WeightedEnsemble:
    n = args.n or 64
    m = args.m or 1000
    seed = 0 if args.seed is None else args.seed
    if args.measure == "white_noise":
        return white_noise_ensemble(m, n, args.modes, seed)
    if args.measure == "white_noise_full":
        return white_noise_ensemble(m, n, args.modes, seed, mean_zero=False)
    if args.measure == "bridge":
        return bridge_ensemble(m, n, seed)
    if args.measure == "p04_importance":
        return sample_p04_importance(m, n, seed)
    if args.measure == "p04_pcn":
        return sample_p04_pcn(m, n, burn_in=1000, beta=0.25, rng=seed, chains=4, thin=20)
    return lattice_gaussian_ensemble(m, n, seed)


def _run(args) -> int:
    if args.command == "list":
        for key, desc in DESCRIPTIONS.items():
            print(f"{key:4s} {desc}")
        return 0

    if args.command == "experiment":
        overrides = {"seed": args.seed, "n": args.n, "m": args.m, "outdir": args.outdir, "label": args.label}
        for item in args.set:
            key, sep, value = item.partition("=")
            if not sep:
                raise KdvLabError(f"--set expects KEY=VALUE, got {item!r}")
            overrides[key.strip()] = value.strip()
        cfg = load_config(args.id, args.config, overrides)
        status, run_dir, result = run_experiment(cfg)
        if not args.quiet:
            for rep in result.reports:
                exp = result.expected.get(rep.name, True)
                print(f"{rep.name}: {'PASS' if rep.passed else 'FAIL'} "
                      f"(expected {'PASS' if exp else 'FAIL'})")
            print(f"results written to {run_dir}")
        return status

    if args.command == "sample":
        ens = _sample(args)
        ensemble_io.write_ensemble(ens, args.out)
        if args.csv:
            ensemble_io.write_ensemble_csv(ens, args.csv)
        log.info("wrote %d members (n=%d, measure=%s) to %s", len(ens), ens.n, ens.measure, args.out)
        return 0

    if args.command == "evolve":
        ens = ensemble_io.read_ensemble(args.input)
        spec = FlowSpec(args.flow, args.dt, alpha=args.alpha, eps=args.eps)
        final, diag = evolve(ens.members, spec, args.t_final)
        out = WeightedEnsemble(GridField(ens.members.grid, np.asarray(final.values)), ens.log_weights,
                               f"{ens.measure}+{args.flow}", ens.master_seed)
        ensemble_io.write_ensemble(out, args.out)
        if args.diagnostics:
            diag.to_csv(args.diagnostics)
        log.info("evolved %d members to t=%g", len(ens), args.t_final)
        return 0

    if args.command == "test":
        e0 = ensemble_io.read_ensemble(args.input)
        if args.against:
            report = two_sample_report(e0, ensemble_io.read_ensemble(args.against), args.k_max)
        else:
            report = whiteness_report(e0, args.k_max)
        if not args.quiet:
            sys.stdout.write(report.to_text())
        if args.csv:
            with open(args.csv, "w") as fh:
                fh.write(report.to_csv())
        return 0 if report.passed else 1

    raise KdvLabError(f"unknown command {args.command}")  # pragma: no cover


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s")
    if getattr(args, "outdir", None) is None and os.environ.get(OUTDIR_ENV):
        args.outdir = os.environ[OUTDIR_ENV]
    try:
        return _run(args)
    except (KdvLabError, ValueError, OSError) as exc:
        log.error("error: %s", exc)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
