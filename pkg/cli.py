#!/usr/bin/env python3
"""CLI for planning experiment assignments from .pln design programs."""

import logging
import sys
from pathlib import Path

import click
import pandas as pd
from dotenv import load_dotenv

from planner.assign import ALLOW_UNEVEN, STRICT
from planner.errors import InvalidLevel, PlanetError, VerifyError
from planner.pipeline import Pipeline, load_config, resolve_timeout, setup_logging
from tools.tables import assignment_frame, plans_frame, read_plans, to_csv_text, write_csv
from tools.verify import report

logger = logging.getLogger(__name__)

VERIFY_FAILED = 6


def _emit(text: str, out):
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
        click.echo(f"Wrote {path}", err=True)
    else:
        click.echo(text, nl=False)


def _fail(error: PlanetError):
    logger.error(str(error))
    click.echo(f"error {error}", err=True)
    sys.exit(error.exit_code)


def _pipeline(ctx, spec_path) -> Pipeline:
    return Pipeline.from_file(spec_path, ctx.obj['config'])


@click.group()
@click.option('--config', '-c', default='config.yaml', help='Path to config file')
@click.option('--log-level', default=None, help='Override the configured log level')
@click.pass_context
def cli(ctx, config, log_level):
    """Plan and assign experiment conditions from a design program."""
    load_dotenv()
    settings = load_config(config)
    setup_logging(log_level or settings.get('log_level', 'INFO'), settings.get('log_file'))
    ctx.ensure_object(dict)
    ctx.obj['config'] = settings


@cli.command()
@click.argument('spec_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--seed', type=click.IntRange(min=0), default=0, show_default=True, help='Random seed')
@click.option('--out', '-o', type=click.Path(dir_okay=False), default=None, help='plans.csv path (default stdout)')
@click.option('--nest-mode', type=click.Choice(['kron', 'scoped']), default=None, help='How nest is solved')
@click.option('--timeout', type=float, default=None, help='Solver budget in seconds (0 = none)')
@click.pass_context
def solve(ctx, spec_path, seed, out, nest_mode, timeout):
    """Solve the assigned design and write its plan table."""
    try:
        pipeline = _pipeline(ctx, spec_path)
        plans = pipeline.solve(seed, nest_mode, resolve_timeout(timeout, ctx.obj['config']))
    except PlanetError as e:
        _fail(e)
    _emit(to_csv_text(plans_frame(plans)), out)


@cli.command()
@click.argument('spec_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--seed', type=click.IntRange(min=0), default=None,
              help='Random seed (required unless the assign directive names one)')
@click.option('--out', '-o', type=click.Path(dir_okay=False), default=None,
              help='assignment.csv path (default stdout); plans.csv is written beside it')
@click.option('--policy', type=click.Choice(['strict', 'allow-uneven']), default=None,
              help='What to do when units do not divide evenly over plans')
@click.option('--nest-mode', type=click.Choice(['kron', 'scoped']), default=None, help='How nest is solved')
@click.option('--timeout', type=float, default=None, help='Solver budget in seconds (0 = none)')
@click.pass_context
def assign(ctx, spec_path, seed, out, policy, nest_mode, timeout):
    """Assign every unit a plan."""
    try:
        pipeline = _pipeline(ctx, spec_path)
        if seed is None:
            seed = pipeline.program.assign.seed
        if seed is None:
            raise click.UsageError("assign needs --seed or a 'seed' in the assign directive")
        chosen = {'strict': STRICT, 'allow-uneven': ALLOW_UNEVEN}.get(policy) if policy else None
        plans, table = pipeline.assign(seed, chosen, nest_mode, resolve_timeout(timeout, ctx.obj['config']))
    except PlanetError as e:
        _fail(e)
    warnings = [w.message for w in table.warnings]
    for message in warnings:
        click.echo(f"warning: {message}", err=True)
    if out:
        write_csv(plans_frame(plans), Path(out).parent / "plans.csv")
    _emit(to_csv_text(assignment_frame(table), warnings), out)


@cli.command()
@click.argument('plans_csv', type=click.Path(exists=True, dir_okay=False))
@click.argument('spec_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--out', '-o', type=click.Path(dir_okay=False), default=None, help='JSON report path (default stdout)')
@click.pass_context
def verify(ctx, plans_csv, spec_path, out):
    """Check a plan table against a design; exit 0 only if every check passes."""
    try:
        pipeline = _pipeline(ctx, spec_path)
        rd = pipeline.resolve()
        plans = read_plans(Path(plans_csv), pipeline.output_order)
        result = report(plans, rd, pipeline.output_order)
    except (VerifyError, InvalidLevel) as e:
        logger.error(str(e))
        click.echo(f"error {e}", err=True)
        sys.exit(VERIFY_FAILED)
    except PlanetError as e:
        _fail(e)
    _emit(result.to_json() + "\n", out)
    if not result.passed:
        for check in result.failures():
            click.echo(f"failed {check.name} ({check.variable}): {check.detail}", err=True)
        sys.exit(VERIFY_FAILED)


@cli.command('enumerate')
@click.argument('spec_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--count-only', is_flag=True, help='Print the number of matrices only')
@click.option('--limit', type=click.IntRange(min=1), default=None, help='Stop after N matrices')
@click.option('--out', '-o', type=click.Path(dir_okay=False), default=None, help='Output path (default stdout)')
@click.pass_context
def enumerate_cmd(ctx, spec_path, count_only, limit, out):
    """List every plan matrix the design allows, or count them."""
    try:
        pipeline = _pipeline(ctx, spec_path)
        if count_only:
            _emit(f"{pipeline.count(limit)}\n", out)
            return
        frames = []
        for index, matrix in enumerate(pipeline.enumerate(limit)):
            frame = plans_frame(matrix)
            frame.insert(0, 'matrix', index)
            frames.append(frame)
    except PlanetError as e:
        _fail(e)
    if not frames:
        _emit("", out)
        return
    _emit(to_csv_text(pd.concat(frames, ignore_index=True)), out)


if __name__ == '__main__':
    cli()
