import logging

import click

from src.commands.options import (
    load_with_overrides,
    out_option,
    quiet_option,
    reports_errors,
    resolve_jobs,
    resolve_out,
    scenario_options,
)
from src.runner import run_scenario

logger = logging.getLogger(__name__)


@click.command('sim')
@click.argument('config', type=click.Path(dir_okay=False))
@out_option
@scenario_options
@quiet_option
@reports_errors
def sim_cmd(config, out_dir, seed, step, epsilon, jobs, quiet):
    """Simulate every initial condition of a scenario file"""
    scenario = load_with_overrides(config, seed, step, epsilon)
    result = run_scenario(scenario, resolve_out(out_dir), resolve_jobs(jobs))
    for run in result.runs:
        reach = 'never' if run.summary.reaching_time is None else f"{run.summary.reaching_time:.6g}"
        click.echo(f"run {run.index}: reaching time {reach}, terminal error "
                   f"{run.summary.terminal_error:.3e}, max drift {run.summary.max_drift:.3e}"
                   + (f" [{run.error}]" if run.error else ''))
    if result.exit_code:
        raise SystemExit(result.exit_code)
