"""Command-line entry point: ``gibbs-lab <experiment> --seed S [options]``."""
from __future__ import annotations

import argparse
import sys

from .harness import ENV_OUT_DIR, EXPERIMENTS, ConfigError, ExperimentConfig, load_config_file, run

EXIT_CONFIG_ERROR = 2

_FLAGS = (
    ("--seed", "seed", "mandatory master seed"),
    ("--beta", "beta", "single beta (experiments that use one)"),
    ("--beta-grid", "beta_grid", "comma-separated beta values"),
    ("--n-modes", "n_modes", "Fourier truncation N (default: experiment rule)"),
    ("--K", "cutoff_K", "cutoff constant K"),
    ("--p", "power_p", "power p in {3, 4}"),
    ("--sign", "sign", "+1 focusing, -1 defocusing"),
    ("--n", "n", "Monte Carlo sample count"),
    ("--stream", "stream", "RNG stream"),
    ("--workers", "workers", "worker processes"),
    ("--out-dir", "out_dir", f"output directory (default ${ENV_OUT_DIR} or ./results)"),
    ("--emit", "emit", "json, csv or both"),
    ("--t-final", "t_final", "KdV final time"),
    ("--dt", "dt", "KdV time step"),
    ("--coupling", "coupling", "KdV coupling kappa in u_t + u_xxx + kappa u u_x = 0"),
    ("--lambdas", "lambdas", "comma-separated tail thresholds"),
    ("--q-values", "q_values", "comma-separated moment orders"),
    ("--r", "r", "exponential moment parameter"),
    ("--M", "M", "frequency cut M"),
    ("--test-mode", "test_mode", "Fourier mode of the characteristic-functional test function"),
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gibbs-lab", description=__doc__)
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="key = value file; its entries override flags")
    for flag, dest, text in _FLAGS:
        parser.add_argument(flag, dest=dest, default=None, help=text)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = {dest: getattr(args, dest) for _, dest, _ in _FLAGS if getattr(args, dest) is not None}
    if args.config:
        values.update(load_config_file(args.config))
    values["experiment"] = args.experiment
    if "seed" not in values:
        raise ConfigError("seed is a non-negative integer and mandatory", "pass --seed or set seed in --config")
    return ExperimentConfig.from_dict(values)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = run(config_from_args(args))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    for check in result.checks:
        print(check.line())
    for path in result.paths:
        print(f"wrote {path}")
    return result.status


if __name__ == "__main__":
    sys.exit(main())
