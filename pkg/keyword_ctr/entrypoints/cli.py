"""
The ``kctr`` executable: every pipeline step as a subcommand.
"""
import click

from keyword_ctr import __version__
from keyword_ctr.entrypoints import (ablation, bench, build_graph, evaluate, generate_data,
                                     scenario_test, train)

SUBCOMMANDS = (generate_data, build_graph, train, evaluate, scenario_test, bench, ablation)


@click.group('kctr')
@click.version_option(__version__)
def cli():
    """Keyword paper recommendation CTR pipeline."""


for _module in SUBCOMMANDS:
    cli.add_command(_module.main)


def main(argv=None):
    return cli.main(args=argv, prog_name='kctr')


if __name__ == '__main__':
    main()
