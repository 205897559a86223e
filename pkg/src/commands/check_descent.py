import logging

import click

from src.commands.options import load_with_overrides, out_option, quiet_option, reports_errors, resolve_out
from src.descent import TARGETS, check_descent
from src.output import write_json

logger = logging.getLogger(__name__)


@click.command('check-descent')
@click.argument('config', type=click.Path(dir_okay=False))
@click.option('--target', 'targets', type=click.Choice(TARGETS), multiple=True,
              help='Restrict to one or more targets (default: all).')
@out_option
@quiet_option
@reports_errors
def check_descent_cmd(config, targets, out_dir, quiet):
    """Check that a scenario's maps are constant along orbits of its group action"""
    scenario = load_with_overrides(config)
    report = check_descent(scenario, list(targets) or None)
    write_json(report, resolve_out(out_dir) / f"{scenario.name}_descent.json")
    for check in report['checks']:
        click.echo(f"{check['target']}/{check['name']}: {check['status']} "
                   f"(max violation {check['max_violation']:.3e})")
