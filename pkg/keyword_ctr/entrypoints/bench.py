import logging

import click

from keyword_ctr import command, settings
from keyword_ctr.dataset import read_prepared
from keyword_ctr.evaluate import latency_benchmark, metrics_csv
from keyword_ctr.manifest import RunManifest, input_digests, write_manifest
from keyword_ctr.model import load_checkpoint
from keyword_ctr.settings import config_digest

LOG = logging.getLogger(__name__)


@command('bench')
@click.option('--ckpt', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Checkpoint written by train.')
@click.option('--data', required=True, type=click.Path(exists=True, file_okay=False),
              help='Prepared dataset directory the checkpoint was trained on.')
@click.option('--out', type=click.Path(dir_okay=False), default=None,
              help='Write a metric,value CSV here.')
@click.option('--requests', type=int, default=None,
              help='Number of timed requests, at least 100 (default: [eval] bench-requests).')
@click.option('--concurrency', type=int, default=None,
              help='Concurrent requests (default: [eval] bench-concurrency).')
@click.option('--candidates', type=int, default=None,
              help='Papers scored per request (default: [eval] bench-candidates).')
@click.option('--seed', type=int, default=0, show_default=True, help='Request sampling seed.')
def main(ckpt, data, out, requests, concurrency, candidates, seed):
    """Time in-process scoring of (user, keyword) requests."""
    requests = int(settings.BENCH_REQUESTS) if requests is None else requests
    concurrency = int(settings.BENCH_CONCURRENCY) if concurrency is None else concurrency
    candidates = int(settings.BENCH_CANDIDATES) if candidates is None else candidates

    dataset = read_prepared(data)
    model = load_checkpoint(ckpt, dataset)
    manifest = RunManifest('bench', config_digest(model.config), seed, input_digests([ckpt, data]))

    summary = latency_benchmark(model, dataset.test or dataset.train, n_requests=requests,
                                concurrency=concurrency, candidates=candidates, seed=seed)
    click.echo('head {}: p50 {:.3f} ms  p95 {:.3f} ms  mean {:.3f} ms  ({} requests x {} candidates)'
               .format(model.config.head.value, summary.p50, summary.p95, summary.mean,
                       requests, candidates))

    outputs = []
    if out:
        with open(out, 'w', newline='') as f:
            f.write(metrics_csv(summary.rows()))
        outputs.append(out)
    write_manifest(manifest.finish(outputs), out or '{}.bench'.format(ckpt))


if __name__ == '__main__':
    main()
