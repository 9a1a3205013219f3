"""Command-line entry point: one subcommand per study, file-driven.

Usage: ``ctxkit <subcommand> --config <path> --out <dir> [--seed N]``.
Exit codes: 0 on success, 2 for configuration problems (unreadable or
invalid config/input files, schema violations), 3 for numerical or domain
failures raised while running.
"""

from __future__ import annotations

import dataclasses
import sys

import click

from .errors import ConfigError, CtxkitError
from .experiments import SUBCOMMANDS, load_config, run_experiment

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_DESCRIPTIONS = {
    "spectrum": "Eigenvalue curve of a context's dual kernel.",
    "tau": "Model-selection curve tau_d over candidate dimensions.",
    "probe": "Linear-probe error of learned features against a target.",
    "mix": "Compose kernels: convolve, convex combination, hedge, or concat.",
    "stkr": "Spectrally transformed kernel regression on a graph.",
    "labelprop": "Label propagation over a graph.",
    "grw": "Reweighted gradient training (ERM / IW / group DRO).",
    "doro": "Outlier-robust distributionally robust training.",
    "kappa": "Complexity measure of masking contexts.",
}


@click.group()
def main() -> None:
    """Batch toolkit for contexture analysis: every run is a config file in,
    a directory of deterministic reports out."""


def _execute(name: str, config_path: str, out_dir: str, seed: int | None) -> None:
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=seed)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        run_experiment(name, cfg, out_dir)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (CtxkitError, ArithmeticError) as exc:
        click.echo(f"run failed: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)
    click.echo(out_dir)


def _register(name: str) -> None:
    @main.command(name=name, help=_DESCRIPTIONS[name])
    @click.option(
        "--config",
        "config_path",
        required=True,
        type=click.Path(),
        help="Path to the experiment config JSON.",
    )
    @click.option(
        "--out",
        "out_dir",
        required=True,
        type=click.Path(file_okay=False),
        help="Directory for report files.",
    )
    @click.option(
        "--seed", type=int, default=None, help="Override the config seed."
    )
    def _command(config_path: str, out_dir: str, seed: int | None) -> None:
        _execute(name, config_path, out_dir, seed)

    _command.__name__ = name


for _name in SUBCOMMANDS:
    _register(_name)


if __name__ == "__main__":
    main()
