"""Command-line experiment runner: ``run``, ``validate``, ``oracle-check``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .harness import (
    PRESETS,
    ExperimentSpec,
    apply_preset,
    load_config,
    parse_beam_arg,
    run_experiment,
    run_oracle_check,
)
from .scenario import ConfigError, ScenarioConfig


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="upsense", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a Monte Carlo sweep and write CSV results")
    run_p.add_argument("--config", help="experiment config file (key = value)")
    run_p.add_argument("--preset", choices=sorted(PRESETS), help="named sweep preset")
    run_p.add_argument("--snr", help="comma-separated SNR sweep in dB, overrides config")
    run_p.add_argument("--trials", type=int, help="trials per SNR point")
    run_p.add_argument("--seed", type=int, help="root RNG seed")
    run_p.add_argument("--out", help="output directory")
    run_p.add_argument(
        "--beam", help="reference beam: bartlett|ns|hybrid:RHO|sinr|mvdr"
    )
    run_p.add_argument("--workers", type=int, default=1, help="parallel trial workers")
    run_p.add_argument("--resume", action="store_true", help="reuse completed trials")

    val_p = sub.add_parser("validate", help="check a config file and exit")
    val_p.add_argument("--config", required=True)

    orc_p = sub.add_parser(
        "oracle-check",
        help="verify the FFT-evaluated spectrum against the direct noise-subspace form",
    )
    orc_p.add_argument("--snapshots", type=int, default=10)
    orc_p.add_argument("--grid", type=int, default=64)
    orc_p.add_argument("--seed", type=int, default=7)
    orc_p.add_argument("--tol", type=float, default=1e-9)
    return p


def _spec_from_args(args) -> ExperimentSpec:
    spec = load_config(args.config) if args.config else ExperimentSpec()
    if args.preset:
        spec = apply_preset(spec, args.preset)
    if args.snr:
        spec = replace(spec, snr_sweep_db=tuple(float(t) for t in args.snr.split(",")))
    if args.trials is not None:
        spec = replace(spec, trials=args.trials)
    if args.beam:
        design, rho = parse_beam_arg(args.beam)
        spec = replace(spec, beam_design=design, **({"rho": rho} if rho is not None else {}))
    if args.seed is not None:
        spec = replace(spec, scenario=replace(spec.scenario, rng_seed=args.seed))
    if args.out:
        spec = replace(spec, output_dir=args.out)
    return spec


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            spec = _spec_from_args(args)
            paths = run_experiment(spec, workers=args.workers, resume=args.resume)
            for name in sorted(paths):
                print(f"wrote {paths[name]}")
            return 0
        if args.command == "validate":
            spec = load_config(args.config)
            print(
                f"OK: {len(spec.snr_sweep_db)} SNR points x {spec.trials} trials, "
                f"beam={spec.beam_design}, n_r={spec.scenario.n_r}, k={spec.scenario.k}"
            )
            return 0
        if args.command == "oracle-check":
            devs = run_oracle_check(
                ScenarioConfig(), n_snapshots=args.snapshots, grid=args.grid, seed=args.seed
            )
            worst = max(devs)
            for i, d in enumerate(devs):
                print(f"snapshot {i}: max relative deviation {d:.3e}")
            ok = worst <= args.tol
            print(f"{'PASS' if ok else 'FAIL'}: worst {worst:.3e} (tolerance {args.tol:g})")
            return 0 if ok else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
