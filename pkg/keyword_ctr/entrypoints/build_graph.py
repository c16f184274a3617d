import logging
import os

import click

from keyword_ctr import command, settings
from keyword_ctr.datagen import read_generated, write_generated
from keyword_ctr.dataset import prepare_dataset, write_prepared
from keyword_ctr.manifest import RunManifest, input_digests, write_manifest
from keyword_ctr.settings import config_digest

LOG = logging.getLogger(__name__)


def format_statistics(stats):
    width = max(len(k) for k in stats)
    return '\n'.join('{:<{}}  {:>8}'.format(k, width, v) for k, v in stats.items())


@command('build-graph')
@click.option('--data', required=True, type=click.Path(exists=True, file_okay=False),
              help='Directory written by generate-data.')
@click.option('--out', type=click.Path(file_okay=False), default=None,
              help='Directory for graph.json, events.jsonl and split.json (default: --data).')
@click.option('--seed', type=int, default=None, help='Train/test shuffle seed (default: [train] seed).')
def main(data, out, seed):
    """Split the log at the graph window, build the graph and print dataset statistics."""
    out = out or data
    seed = settings.SEED if seed is None else seed
    fraction = float(settings.SPLIT_FRACTION)

    generated = read_generated(data)
    digest = config_digest({'generator': config_digest(generated.config),
                            'split-fraction': fraction, 'seed': seed})
    manifest = RunManifest('build-graph', digest, seed, input_digests([data]))

    dataset = prepare_dataset(generated, split_fraction=fraction, seed=seed)
    if os.path.abspath(out) != os.path.abspath(data):
        # prepared files are read back next to the generated ones
        write_generated(generated, out)
    outputs = write_prepared(dataset, out)

    click.echo(format_statistics(dataset.statistics()))
    write_manifest(manifest.finish(outputs), os.path.join(out, 'graph.json'))


if __name__ == '__main__':
    main()
