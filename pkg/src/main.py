import click
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from src.commands.check_descent import check_descent_cmd
from src.commands.embed import embed_cmd
from src.commands.portrait import portrait_cmd
from src.commands.sim import sim_cmd


@click.group()
@click.version_option('1.0.0', prog_name='smc-manifolds')
def cli():
    """Sliding-mode control on manifolds: simulations, phase portraits and descent checks.

    Exit codes: 0 success, 2 configuration error, 3 runtime budget or degeneracy.
    """


# Register verbs
cli.add_command(sim_cmd)
cli.add_command(portrait_cmd)
cli.add_command(check_descent_cmd)
cli.add_command(embed_cmd)


if __name__ == '__main__':
    cli()
