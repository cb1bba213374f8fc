"""``coopnet`` command line."""
from __future__ import annotations

import math
import sys
from pathlib import Path

import click
import numpy as np

from ..simnet.config import ConfigError
from .runner import RunResult, run_experiment, summarize
from .spec import SCALES, load_spec
from .verify import run_checks


def _load(spec_file: str, scale: str):
    try:
        return load_spec(spec_file, scale)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


def _progress(res: RunResult) -> None:
    label = "-" if res.value is None else res.value
    click.echo(f"  value={label} seed={res.seed} done", err=True)


def _print_summary(results) -> None:
    for value, by_metric in summarize(results).items():
        click.echo(f"[{'-' if value is None else value}]")
        for name in sorted(by_metric):
            s = by_metric[name]
            click.echo(f"  {name:<28} mean={s['mean']:.6g} std={s['std']:.3g} n={s['n']}")


scale_option = click.option("--scale", type=click.Choice(SCALES), default="desk", show_default=True)


@click.group()
def main():
    """Simulate and measure reputation-based peer selection."""


@main.command()
@click.argument("spec_file", type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (default: results/<name>).")
@click.option("--seed", type=int, default=None, help="First seed; repetitions count up from it.")
@scale_option
def run(spec_file, out_dir, seed, scale):
    """Run an experiment file and write CSV and JSON results."""
    spec = _load(spec_file, scale)
    out = Path(out_dir) if out_dir else Path("results") / spec.name
    try:
        results = run_experiment(spec, scale, seed, out, _progress)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    _print_summary(results)
    click.echo(f"wrote {out / (spec.name + '.csv')} and {out / (spec.name + '.json')}")


@main.command()
@click.argument("spec_file", type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--seed", type=int, default=None)
@scale_option
def heatmap(spec_file, out_dir, seed, scale):
    """Run an experiment with the heat map output and print the mean matrix."""
    spec = _load(spec_file, scale)
    if "heatmap" not in spec.outputs:
        spec.outputs = [*spec.outputs, "heatmap"]
    out = Path(out_dir) if out_dir else Path("results") / spec.name
    try:
        results = run_experiment(spec, scale, seed, out, _progress)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    for value in spec.points:
        mats = [np.array(r.info["heatmap"], dtype=float) for r in results if r.value == value]
        mean = np.mean(mats, axis=0)
        np.savetxt(out / f"heatmap-{'-' if value is None else value}.csv", mean, delimiter=",", fmt="%.6f")
        if value is not None:
            click.echo(f"{spec.parameter} = {value}")
        click.echo("      " + "".join(f"{j:>6}" for j in range(mean.shape[1])))
        for i, row in enumerate(mean):
            cells = "".join("     ." if math.isnan(x) else f"{x:6.3f}" for x in row)
            click.echo(f"{i:>5} {cells}")
    _print_summary(results)


@main.command()
def verify():
    """Run the built-in invariant and oracle checks."""
    ok = run_checks(lambda name, passed: click.echo(f"{'PASS' if passed else 'FAIL'}  {name}"))
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
