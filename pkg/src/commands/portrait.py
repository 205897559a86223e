import csv
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
from src.output import EMBED_COLUMNS, fmt, trajectory_header, trajectory_rows, write_json
from src.portrait import phase_portrait

logger = logging.getLogger(__name__)


@click.command('portrait')
@click.argument('config', type=click.Path(dir_okay=False))
@out_option
@scenario_options
@quiet_option
@reports_errors
def portrait_cmd(config, out_dir, seed, step, epsilon, jobs, quiet):
    """Grid runs, switching-set overlays and equilibrium labels for a quotient scenario"""
    scenario = load_with_overrides(config, seed, step, epsilon)
    result = phase_portrait(scenario, resolve_jobs(jobs))
    out = resolve_out(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    closed = result.closed_loop

    path = out / f"{scenario.name}_portrait.csv"
    with path.open('w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(['run'] + trajectory_header(result.runs[0].trajectory) + EMBED_COLUMNS)
        for run in result.runs:
            traj = run.trajectory
            for row, sample in zip(trajectory_rows(traj, prefix=[str(run.index)]), traj.samples):
                c = closed.quotient.canonicalize(sample.x)
                writer.writerow(row + [fmt(v) for v in closed.embed(c[0], c[1])])
    logger.info(f"Wrote {path}")
    write_json(result.metadata(scenario), out / f"{scenario.name}_portrait.json")

    for eq in result.equilibria:
        click.echo(f"equilibrium {eq.point}: {eq.label}")
