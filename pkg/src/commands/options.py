"""Options and error handling shared by the CLI verbs."""

import functools
import logging
from pathlib import Path

import click

from src.config import configure_logging, settings
from src.errors import SimulationError
from src.models.scenario import Scenario, load_scenario

logger = logging.getLogger(__name__)


def out_option(fn):
    return click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None,
                        help='Output directory (default $SMC_OUT_DIR or ./out).')(fn)


def quiet_option(fn):
    return click.option('--quiet', is_flag=True, help='Only log warnings and errors.')(fn)


def scenario_options(fn):
    """--seed, --step, --regularize and --jobs"""
    fn = click.option('--jobs', type=click.IntRange(min=1), default=None,
                      help='Worker processes for multi-run scenarios (default $SMC_JOBS).')(fn)
    fn = click.option('--regularize', 'epsilon', type=float, default=None,
                      help='Boundary-layer width; switches to the regularized closed loop.')(fn)
    fn = click.option('--step', type=float, default=None, help='Integration step h.')(fn)
    fn = click.option('--seed', type=click.IntRange(min=0, max=2 ** 64 - 1), default=None,
                      help='Unsigned 64-bit seed for random initial conditions.')(fn)
    return fn


def reports_errors(fn):
    """Log a SimulationError, echo it to stderr and exit with its code"""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        configure_logging(quiet=kwargs.get('quiet', False))
        try:
            return fn(*args, **kwargs)
        except SimulationError as e:
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"error: {e}", err=True)
            raise SystemExit(e.exit_code)

    return wrapper


def resolve_out(out_dir) -> Path:
    return Path(out_dir or settings.out_dir)


def resolve_jobs(jobs) -> int:
    return jobs if jobs is not None else max(settings.jobs, 1)


def load_with_overrides(config, seed=None, step=None, epsilon=None) -> Scenario:
    scenario = load_scenario(config)
    if step is not None and step <= 0.0:
        raise click.BadParameter(f"step must be positive, got {step}", param_hint='--step')
    return scenario.with_overrides(seed=seed, step=step, epsilon=epsilon)
