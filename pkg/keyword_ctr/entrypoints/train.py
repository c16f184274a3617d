import logging
import os

import click

from keyword_ctr import HeadKind, Variant, command, settings
from keyword_ctr.dataset import read_prepared
from keyword_ctr.manifest import RunManifest, input_digests, write_manifest
from keyword_ctr.settings import config_digest
from keyword_ctr.train import train

LOG = logging.getLogger(__name__)

VARIANTS = [v.value for v in Variant]
HEADS = [h.value for h in HeadKind] + ['attention-seq', 'gru-seq']


def metrics_path_for(out):
    return os.path.splitext(out)[0] + '.metrics.csv'


@command('train')
@click.option('--data', required=True, type=click.Path(exists=True, file_okay=False),
              help='Prepared dataset directory (generate-data + build-graph).')
@click.option('--out', required=True, type=click.Path(dir_okay=False),
              help='Checkpoint file to write (.npz).')
@click.option('--metrics', type=click.Path(dir_okay=False), default=None,
              help='Per-epoch metrics CSV (default: <out without extension>.metrics.csv).')
@click.option('--seed', type=int, default=None, help='Training seed (default: [train] seed).')
@click.option('--variant', type=click.Choice(VARIANTS), default=None,
              help='Ablation variant (default: [model] variant).')
@click.option('--head', type=click.Choice(HEADS), default=None,
              help='CTR head (default: [model] head).')
@click.option('--workers', type=int, default=1, show_default=True,
              help='Threads sharing each mini-batch.')
def main(data, out, metrics, seed, variant, head, workers):
    """Train a model and keep the checkpoint with the best test AUC."""
    cfg = settings.model_config(variant=variant, head=head, seed=seed)
    metrics = metrics or metrics_path_for(out)
    manifest = RunManifest('train', config_digest(cfg), cfg.seed, input_digests([data]))

    dataset = read_prepared(data)
    result = train(cfg, dataset, checkpoint_path=out, metrics_path=metrics, workers=workers,
                   eval_batch_size=int(settings.EVAL_BATCH_SIZE))
    click.echo('best epoch {} test AUC {:.5f}'.format(result.best_epoch, result.best_auc))

    write_manifest(manifest.finish([out, metrics]), out)


if __name__ == '__main__':
    main()
