"""
Offline evaluation: AUC / LogLoss, the fusion-weight scenario test, the
ablation comparison and an in-process latency benchmark.
"""
import csv
import dataclasses
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import stats

from keyword_ctr import ContractError, UndefinedMetricError, Variant
from keyword_ctr.ctr import logloss
from keyword_ctr.datagen import Scenario
from keyword_ctr.dataset import Example
from keyword_ctr.graph import NodeType

LOG = logging.getLogger(__name__)

# (scenario, low, high); S1 is closed at both ends, the others half-open
SCENARIO_BINS = (
    (Scenario.S1, 0.5, 1.0),
    (Scenario.S2, 0.1, 0.5),
    (Scenario.S3, 0.0, 0.1),
)


def auc(scores, labels):
    """
    Probability that a random positive outscores a random negative, ties
    counting one half, from the rank-sum statistic.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ContractError('scores and labels must be equal-length vectors')
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError('AUC needs both classes ({} positive, {} negative)'
                                   .format(n_pos, n_neg))
    ranks = stats.rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclasses.dataclass(frozen=True)
class MetricsReport:
    auc: float
    logloss: float
    n_examples: int

    def rows(self):
        return [('auc', self.auc), ('logloss', self.logloss), ('n_examples', self.n_examples)]


def metrics_report(scores, labels):
    if len(labels) < 1:
        raise ContractError('cannot report metrics of an empty set')
    return MetricsReport(auc(scores, labels), logloss(scores, labels), len(labels))


def evaluate(model, examples, batch_size=512, workers=1):
    """Score ``examples`` through the model's variant pipeline."""
    examples = list(examples)
    scores = model.score(examples, batch_size=batch_size, workers=workers)
    report = metrics_report(scores, [e.label for e in examples])
    LOG.info('AUC %.5f, LogLoss %.5f over %d examples', report.auc, report.logloss, report.n_examples)
    return report


def bin_for_gamma(gamma):
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ContractError('fusion weight {} is outside [0, 1]'.format(gamma))
    if gamma >= 0.5:
        return Scenario.S1
    if gamma >= 0.1:
        return Scenario.S2
    return Scenario.S3


def batch_gammas(gammas, batch_size):
    """Replace every example's weight by the mean over its consecutive test batch."""
    gammas = np.asarray(gammas, dtype=np.float64)
    out = np.empty_like(gammas)
    for start in range(0, len(gammas), batch_size):
        out[start:start + batch_size] = gammas[start:start + batch_size].mean()
    return out


@dataclasses.dataclass(frozen=True)
class ScenarioBin:
    scenario: Scenario
    low: float
    high: float
    count: int
    share: float
    report: MetricsReport = None
    reason: str = ''

    @property
    def defined(self):
        return self.report is not None


@dataclasses.dataclass
class ScenarioReport:
    bins: list
    assignments: list
    batch_mode: bool = False

    def __getitem__(self, scenario):
        for b in self.bins:
            if b.scenario is scenario:
                return b
        raise KeyError(scenario)

    def spread(self):
        """max - min AUC over the defined bins."""
        values = [b.report.auc for b in self.bins if b.defined]
        return max(values) - min(values) if values else float('nan')

    def agreement(self, examples, sidecar):
        """Share of examples whose bin matches the generator's scenario label."""
        pairs = [(a, sidecar.get(e.record)) for a, e in zip(self.assignments, examples)]
        pairs = [(a, s) for a, s in pairs if s is not None]
        if not pairs:
            raise ContractError('no example has a ground-truth scenario')
        return sum(a is s for a, s in pairs) / len(pairs)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator='\n')
        writer.writerow(['scenario', 'gamma_low', 'gamma_high', 'count', 'share', 'auc', 'logloss', 'status'])
        for b in self.bins:
            writer.writerow([b.scenario.value, repr(b.low), repr(b.high), b.count, repr(float(b.share)),
                             repr(b.report.auc) if b.defined else '',
                             repr(b.report.logloss) if b.defined else '',
                             'ok' if b.defined else b.reason])
        return buf.getvalue()

    def format_table(self):
        lines = ['{:<4} {:<12} {:>7} {:>7} {:>8} {:>8}  {}'.format(
            'bin', 'gamma', 'count', 'share', 'AUC', 'LogLoss', 'histogram')]
        for b in self.bins:
            span = '[{}, {}{}'.format(b.low, b.high, ']' if b.scenario is Scenario.S1 else ')')
            metric = ('{:>8.4f} {:>8.4f}'.format(b.report.auc, b.report.logloss) if b.defined
                      else '{:>8} {:>8}'.format('-', '-'))
            lines.append('{:<4} {:<12} {:>7} {:>7.1%} {}  {}'.format(
                b.scenario.value, span, b.count, b.share, metric, '#' * int(round(b.share * 40))))
        return '\n'.join(lines)


def scenario_test(model, examples, batch_mode=False, batch_size=512, workers=1, gammas=None):
    """
    Bin test examples by fusion weight and report metrics per bin.

    Weights come from the model's enhanced embeddings (the raw table for
    variants without propagation), one per example or, in ``batch_mode``, the
    mean of each consecutive batch of ``batch_size`` examples.

    Pass ``gammas`` (one weight per example, usually taken from another
    model's :meth:`score_with_gamma`) to score ``model`` on a fixed
    partition, so that several variants are compared bin for bin.
    """
    examples = list(examples)
    if not examples:
        raise ContractError('scenario test needs at least one example')
    if gammas is None:
        scores, gammas = model.score_with_gamma(examples, batch_size=batch_size, workers=workers)
    else:
        gammas = np.asarray(gammas, dtype=np.float64)
        if gammas.shape != (len(examples),):
            raise ContractError('expected {} fusion weights, got shape {}'.format(len(examples), gammas.shape))
        scores = model.score(examples, batch_size=batch_size, workers=workers)
    if batch_mode:
        gammas = batch_gammas(gammas, batch_size)
    labels = np.array([e.label for e in examples])
    assignments = [bin_for_gamma(g) for g in gammas]

    bins = []
    for scenario, low, high in SCENARIO_BINS:
        members = np.array([a is scenario for a in assignments])
        count = int(members.sum())
        share = count / len(examples)
        report, reason = None, ''
        if count == 0:
            reason = 'empty'
        else:
            try:
                report = metrics_report(scores[members], labels[members])
            except UndefinedMetricError:
                reason = 'single-class'
        if report is None:
            LOG.warning('Scenario %s undefined (%s, %d examples)', scenario.value, reason, count)
        bins.append(ScenarioBin(scenario, low, high, count, share, report, reason))
    return ScenarioReport(bins, assignments, batch_mode)


@dataclasses.dataclass(frozen=True)
class LatencySummary:
    p50: float
    p95: float
    mean: float
    samples: tuple
    candidates: int
    concurrency: int

    def rows(self):
        return [('p50_ms', self.p50), ('p95_ms', self.p95), ('mean_ms', self.mean),
                ('requests', len(self.samples)), ('candidates', self.candidates),
                ('concurrency', self.concurrency)]


def latency_benchmark(model, examples, n_requests=100, concurrency=1, candidates=100, seed=0):
    """
    Time end-to-end scoring of one (user, keyword) request against a
    candidate set of ``candidates`` papers, ``n_requests`` times.

    Enhanced embeddings are computed once before timing, as a server would
    keep them. Latencies are reported in milliseconds.
    """
    if n_requests < 100:
        raise ContractError('latency benchmark needs at least 100 requests')
    if concurrency < 1 or candidates < 1:
        raise ContractError('concurrency and candidate count must be positive')
    examples = list(examples)
    if not examples:
        raise ContractError('latency benchmark needs example queries')

    rng = np.random.default_rng(seed)
    n_papers = model.graph.counts[NodeType.PAPER]
    requests = []
    for i in range(n_requests):
        q = examples[int(rng.integers(len(examples)))]
        papers = rng.integers(n_papers, size=candidates)
        requests.append([Example(-1, q.user, q.keyword, int(p), 0, q.ts) for p in papers])

    model.enhanced_embeddings()

    def serve(batch):
        start = time.perf_counter()
        model.score(batch, batch_size=len(batch))
        return (time.perf_counter() - start) * 1000.0

    if concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            samples = list(pool.map(serve, requests))
    else:
        samples = [serve(r) for r in requests]

    samples = np.array(samples)
    summary = LatencySummary(float(np.percentile(samples, 50)), float(np.percentile(samples, 95)),
                             float(samples.mean()), tuple(samples), candidates, concurrency)
    LOG.info('Latency over %d requests x %d candidates: p50 %.3f ms, p95 %.3f ms, mean %.3f ms',
             n_requests, candidates, summary.p50, summary.p95, summary.mean)
    return summary


@dataclasses.dataclass(frozen=True)
class AblationRow:
    variant: Variant
    auc: float
    logloss: float
    improvement: float  # AUC gain over base, percent


def ablation_rows(reports):
    """
    Comparison rows from ``{variant: MetricsReport}`` in the order base, f,
    g, g&f, with the relative AUC improvement over ``base``.
    """
    if Variant.BASE not in reports:
        raise ContractError('ablation needs the base variant')
    base = reports[Variant.BASE].auc
    return [AblationRow(v, reports[v].auc, reports[v].logloss, (reports[v].auc - base) / base * 100.0)
            for v in Variant if v in reports]


def run_ablation(cfg, dataset, variants=tuple(Variant), eval_batch_size=512, workers=1):
    """Train and evaluate every variant with otherwise identical settings."""
    from keyword_ctr.train import train

    reports = {}
    for variant in variants:
        result = train(cfg.replace(variant=variant), dataset, workers=workers,
                       eval_batch_size=eval_batch_size)
        reports[variant] = evaluate(result.model, dataset.test, batch_size=eval_batch_size)
    return ablation_rows(reports)


def ablation_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(['variant', 'auc', 'logloss', 'auc_improvement_pct'])
    for r in rows:
        writer.writerow([r.variant.value, repr(r.auc), repr(r.logloss), repr(r.improvement)])
    return buf.getvalue()


def format_ablation_table(rows):
    lines = ['{:<8} {:>8} {:>8} {:>9}'.format('variant', 'AUC', 'LogLoss', 'vs base')]
    for r in rows:
        lines.append('{:<8} {:>8.4f} {:>8.4f} {:>+8.2f}%'.format(r.variant.value, r.auc, r.logloss,
                                                               r.improvement))
    return '\n'.join(lines)


def metrics_csv(rows):
    """``metric,value`` CSV of a report's rows."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(['metric', 'value'])
    for name, value in rows:
        writer.writerow([name, repr(value) if isinstance(value, float) else value])
    return buf.getvalue()
