import logging

import click

from src.commands.options import quiet_option, reports_errors
from src.embedding import cylinder_embed, mobius_embed
from src.geometry import cylinder, mobius_bundle
from src.output import read_quotient_csv, write_embedding_csv

logger = logging.getLogger(__name__)

EMBEDDINGS = {
    'mobius': (mobius_bundle, mobius_embed),
    'cylinder': (cylinder, cylinder_embed),
}


@click.command('embed')
@click.argument('manifold', type=click.Choice(sorted(EMBEDDINGS)))
@click.argument('csv_in', type=click.Path(dir_okay=False))
@click.argument('csv_out', type=click.Path(dir_okay=False))
@quiet_option
@reports_errors
def embed_cmd(manifold, csv_in, csv_out, quiet):
    """Map the theta/omega columns of a CSV into R^3"""
    quotient_fn, embed = EMBEDDINGS[manifold]
    data = read_quotient_csv(csv_in)
    write_embedding_csv(data['t'], data['x'], quotient_fn(), embed, csv_out)
    click.echo(f"embedded {len(data['t'])} rows into {csv_out}")
