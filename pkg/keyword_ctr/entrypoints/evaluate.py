import logging

import click

from keyword_ctr import command, settings
from keyword_ctr.dataset import read_prepared
from keyword_ctr.evaluate import evaluate, metrics_csv
from keyword_ctr.manifest import RunManifest, input_digests, write_manifest
from keyword_ctr.model import load_checkpoint
from keyword_ctr.settings import config_digest

LOG = logging.getLogger(__name__)


@command('evaluate')
@click.option('--ckpt', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Checkpoint written by train.')
@click.option('--data', required=True, type=click.Path(exists=True, file_okay=False),
              help='Prepared dataset directory the checkpoint was trained on.')
@click.option('--out', type=click.Path(dir_okay=False), default=None,
              help='Write a metric,value CSV here.')
def main(ckpt, data, out):
    """Report test AUC and LogLoss of a checkpoint."""
    dataset = read_prepared(data)
    model = load_checkpoint(ckpt, dataset)
    manifest = RunManifest('evaluate', config_digest(model.config), model.config.seed,
                           input_digests([ckpt, data]))

    report = evaluate(model, dataset.test, batch_size=int(settings.EVAL_BATCH_SIZE),
                      workers=int(settings.EVAL_WORKERS))
    click.echo('AUC {:.5f}  LogLoss {:.5f}  ({} examples)'
               .format(report.auc, report.logloss, report.n_examples))

    outputs = []
    if out:
        with open(out, 'w', newline='') as f:
            f.write(metrics_csv(report.rows()))
        outputs.append(out)
    write_manifest(manifest.finish(outputs), out or '{}.evaluate'.format(ckpt))


if __name__ == '__main__':
    main()
