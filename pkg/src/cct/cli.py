"""Command line interface.

    cct <outlier-detect|label-screen|select|two-sample-test|simulate>
        --config PATH [--seed N --alpha F --reps N --output PATH --threads N]

Exit codes: 0 success, 1 configuration error, 2 runtime error.  The env var
``CCT_THREADS`` overrides ``--threads``.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .dataio import DataFormatError, emit_report, write_dataset_csv
from .harness import (
    PROCEDURES,
    ConfigError,
    parse_config,
    run_experiment,
)
from .scenarios import gen_a1, gen_a2, gen_a3, gen_b1, gen_b3, gen_c3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cct", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in PROCEDURES + ("simulate",):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--output", default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--format", choices=("json", "csv"), default=None)
    return parser


def _simulate(cfg) -> int:
    rng = np.random.default_rng(cfg.seed)
    out = cfg.output or f"{cfg.scenario}.csv"
    if cfg.scenario in ("a1", "b1"):
        gen = gen_a1 if cfg.scenario == "a1" else gen_b1
        sample = gen(cfg.n, True, rng)
        extra = {"outlier": sample.outlier.astype(int)}
        write_dataset_csv(out, sample.covariates, sample.responses, extra=extra)
        print(f"wrote {out}")
    elif cfg.scenario == "a2":
        sample = gen_a2(cfg.n, rng)
        extra = {
            f"violates{k}": sample.violations[:, k].astype(int)
            for k in range(sample.violations.shape[1])
        }
        write_dataset_csv(out, sample.covariates, sample.responses, extra=extra)
        print(f"wrote {out}")
    elif cfg.scenario in ("a3", "b3", "c3"):
        gen = {"a3": gen_a3, "b3": gen_b3, "c3": gen_c3}[cfg.scenario]
        s1, s2 = gen(cfg.n, cfg.m, cfg.hypothesis, rng)
        base, ext = os.path.splitext(out)
        for tag, s in (("1", s1), ("2", s2)):
            path = f"{base}_sample{tag}{ext or '.csv'}"
            write_dataset_csv(path, s.covariates, s.responses)
            print(f"wrote {path}")
    else:
        raise ConfigError(f"cannot simulate scenario {cfg.scenario!r}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    # CLI-flag overrides
    for name, attr in (
        ("seed", "seed"),
        ("alpha", "alpha"),
        ("output", "output"),
        ("format", "format"),
        ("threads", "threads"),
    ):
        val = getattr(args, name)
        if val is not None:
            setattr(cfg, attr, val)
    if args.reps is not None:
        cfg.replications = args.reps
    env_threads = os.environ.get("CCT_THREADS")
    if env_threads is not None:
        try:
            cfg.threads = int(env_threads)
        except ValueError:
            print(f"config error: CCT_THREADS={env_threads!r} is not an integer", file=sys.stderr)
            return 1

    try:
        if args.command == "simulate":
            return _simulate(cfg)
        if cfg.procedure != args.command:
            raise ConfigError(
                f"config declares procedure {cfg.procedure!r} but the "
                f"{args.command!r} subcommand was invoked"
            )
        cfg.validate()
        report = run_experiment(cfg)
    except (ConfigError, DataFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2

    for key, (mean, se) in report.aggregates.items():
        print(f"{key}: {mean:.6g} (se {se:.3g})")
    if cfg.output:
        emit_report(report, cfg.output, cfg.format)
        print(f"wrote {cfg.output}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
