import logging

import click

from keyword_ctr import command, settings
from keyword_ctr.datagen import generate_dataset, write_generated
from keyword_ctr.manifest import RunManifest, write_manifest
from keyword_ctr.settings import config_digest

LOG = logging.getLogger(__name__)


@command('generate-data')
@click.option('--out', required=True, type=click.Path(file_okay=False),
              help='Directory to write the generated dataset to.')
@click.option('--seed', type=int, default=None, help='Generator seed (default: [generator] seed).')
def main(out, seed):
    """Generate a synthetic interaction log with titles, features and scenarios."""
    cfg = settings.generator_config(seed=seed)
    manifest = RunManifest('generate-data', config_digest(cfg), cfg.seed)

    data = generate_dataset(cfg)
    outputs = write_generated(data, out)
    LOG.info('Wrote {} files to {}'.format(len(outputs), out))

    write_manifest(manifest.finish(outputs), out)


if __name__ == '__main__':
    main()
