"""
Training loop: seeded mini-batches, reverse-mode gradients, Adam.
"""
import csv
import dataclasses
import logging
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from keyword_ctr import ContractError, DivergenceError, NumericalError, UndefinedMetricError
from keyword_ctr import numerics as nx
from keyword_ctr.ctr import logloss
from keyword_ctr.evaluate import auc
from keyword_ctr.model import CtrModel, save_checkpoint

LOG = logging.getLogger(__name__)

EpochMetrics = namedtuple('EpochMetrics', 'epoch train_loss test_auc test_logloss')
METRICS_HEADER = EpochMetrics._fields


@dataclasses.dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kwargs):
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, **kwargs)


def adam_step(state, params, grads, lr):
    """
    One bias-corrected Adam update of ``params`` in place.

    Every gradient is checked before any parameter moves, so a non-finite
    gradient leaves both the parameters and the optimizer state untouched.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None or g.shape != p.shape or state.m[name].shape != p.shape:
            raise ContractError('gradient for {!r} is missing or has the wrong shape'.format(name))
        if not np.all(np.isfinite(g)):
            raise NumericalError(name, 'non-finite gradient, step aborted')

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def batch_gradients(model, batch, workers=1):
    """
    Mean log loss of ``batch`` and its gradients.

    With ``workers`` > 1 the batch is cut into contiguous shards whose
    gradients are summed in shard order, weighted by shard size.
    """
    if workers <= 1 or len(batch) < 2 * workers:
        record, loss, _ = model.loss(batch)
        return float(loss.value), nx.forward_backward(record, loss)

    bounds = np.linspace(0, len(batch), workers + 1).astype(int)
    shards = [batch[a:b] for a, b in zip(bounds[:-1], bounds[1:])]

    def run(shard):
        record, loss, _ = model.loss(shard)
        return float(loss.value), nx.forward_backward(record, loss)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, shards))

    n = float(len(batch))
    total_loss = 0.0
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    for shard, (loss, shard_grads) in zip(shards, results):
        w = len(shard) / n
        total_loss += w * loss
        for k, g in shard_grads.items():
            grads[k] += w * g
    return total_loss, grads


def _test_metrics(model, examples, batch_size):
    if not examples:
        return float('nan'), float('nan')
    scores = model.score(examples, batch_size=batch_size)
    labels = [e.label for e in examples]
    try:
        test_auc = auc(scores, labels)
    except UndefinedMetricError as e:
        LOG.warning('Test AUC undefined: %s', e)
        test_auc = float('nan')
    return test_auc, logloss(scores, labels)


@dataclasses.dataclass
class TrainResult:
    model: CtrModel
    history: list
    best_epoch: int
    best_auc: float


def train(cfg, dataset, checkpoint_path=None, metrics_path=None, workers=1, eval_batch_size=512):
    """
    Train a model for ``cfg.epochs`` epochs and keep the parameters of the
    epoch with the best test AUC (the initialization when ``epochs`` is 0).

    :returns: :class:`TrainResult` whose model holds the selected parameters
    """
    cfg.validate()
    if not dataset.train:
        raise ContractError('training set is empty')
    model = CtrModel.initialize(cfg, dataset)
    state = AdamState.for_params(model.params)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(3)[2])

    LOG.info('Training variant=%s head=%s on %d examples (%d test), %d epochs',
             cfg.variant.value, cfg.head.value, len(dataset.train), len(dataset.test), cfg.epochs)

    history = []
    best_epoch, best_auc, best = 0, float('-inf'), model.snapshot()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(dataset.train))
        total, seen = 0.0, 0
        for step, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = [dataset.train[i] for i in order[start:start + cfg.batch_size]]
            try:
                loss, grads = batch_gradients(model, batch, workers)
                adam_step(state, model.params, grads, cfg.learning_rate)
            except NumericalError as e:
                raise DivergenceError(e.operation, 'training diverged at epoch {} step {} '
                                      '(last mean loss {:.6g}): {}'
                                      .format(epoch, step, total / max(seen, 1), e))
            model.invalidate()
            total += loss * len(batch)
            seen += len(batch)
            LOG.debug('epoch %d step %d loss %.6f', epoch, step, loss)

        test_auc, test_logloss = _test_metrics(model, dataset.test, eval_batch_size)
        metrics = EpochMetrics(epoch, total / seen, test_auc, test_logloss)
        history.append(metrics)
        LOG.info('epoch {}: train_loss={:.5f} test_auc={:.5f} test_logloss={:.5f}'.format(*metrics))

        if test_auc > best_auc:
            best_epoch, best_auc, best = epoch, test_auc, model.snapshot()

    if cfg.epochs and best_epoch == 0:
        LOG.warning('Test AUC never defined; keeping the last epoch')
        best_epoch, best = cfg.epochs, model.snapshot()
    model.restore(best)

    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path)
    if metrics_path is not None:
        write_metrics_csv(history, metrics_path)
    return TrainResult(model, history, best_epoch, best_auc if np.isfinite(best_auc) else float('nan'))


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_metrics_csv(history, path):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(METRICS_HEADER)
        for row in history:
            writer.writerow([_fmt(x) for x in row])


def read_metrics_csv(path):
    with open(path, 'r', newline='') as f:
        rows = list(csv.reader(f))
    if not rows or tuple(rows[0]) != METRICS_HEADER:
        raise ContractError('{} is not a metrics log'.format(path))
    return [EpochMetrics(int(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in rows[1:]]
