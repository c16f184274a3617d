import logging
import os

import click

from keyword_ctr import command, settings
from keyword_ctr.dataset import read_prepared
from keyword_ctr.entrypoints.train import HEADS
from keyword_ctr.evaluate import ablation_csv, format_ablation_table, run_ablation
from keyword_ctr.manifest import RunManifest, input_digests, write_manifest
from keyword_ctr.settings import config_digest

LOG = logging.getLogger(__name__)


@command('ablation')
@click.option('--data', required=True, type=click.Path(exists=True, file_okay=False),
              help='Prepared dataset directory.')
@click.option('--out', type=click.Path(dir_okay=False), default=None,
              help='Write the comparison table as CSV here.')
@click.option('--seed', type=int, default=None, help='Training seed (default: [train] seed).')
@click.option('--head', type=click.Choice(HEADS), default=None,
              help='CTR head shared by all variants (default: [model] head).')
def main(data, out, seed, head):
    """Train and evaluate the base, f, g and g&f variants."""
    cfg = settings.model_config(head=head, seed=seed)
    manifest = RunManifest('ablation', config_digest(cfg), cfg.seed, input_digests([data]))

    dataset = read_prepared(data)
    rows = run_ablation(cfg, dataset, eval_batch_size=int(settings.EVAL_BATCH_SIZE))
    click.echo(format_ablation_table(rows))

    outputs = []
    if out:
        with open(out, 'w', newline='') as f:
            f.write(ablation_csv(rows))
        outputs.append(out)
    write_manifest(manifest.finish(outputs), out or os.path.join(data, 'ablation'))


if __name__ == '__main__':
    main()
