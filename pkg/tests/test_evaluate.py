import csv
import io

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from keyword_ctr import ContractError, HeadKind, UndefinedMetricError, Variant
from keyword_ctr.datagen import Scenario
from keyword_ctr.dataset import Example
from keyword_ctr.evaluate import (MetricsReport, ablation_csv, ablation_rows, auc, batch_gammas, bin_for_gamma,
                                  evaluate, format_ablation_table, latency_benchmark, metrics_csv,
                                  metrics_report, scenario_test)
from keyword_ctr.model import CtrModel, ModelConfig


def pair_count_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


class FixedModel:
    """Scores and fusion weights decided up front."""

    def __init__(self, scores, gammas):
        self.scores = np.asarray(scores, dtype=float)
        self.gammas = np.asarray(gammas, dtype=float)

    def score_with_gamma(self, examples, batch_size=512, workers=1):
        return self.scores[:len(examples)], self.gammas[:len(examples)]

    def score(self, examples, batch_size=512, workers=1):
        return self.scores[:len(examples)]


def examples_with_labels(labels):
    return [Example(i, 0, 'graph', 0, y, i) for i, y in enumerate(labels)]


class TestAuc:

    def test_hand_example(self):
        scores = [0.9, 0.6, 0.2, 0.3, 0.7, 0.1]
        labels = [1, 1, 0, 0, 0, 0]
        assert auc(scores, labels) == 0.875

    def test_ties_count_half(self):
        assert auc([0.5, 0.5], [1, 0]) == 0.5

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            auc([0.1, 0.2], [1, 1])

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            auc([0.1, 0.2], [1])

    def test_matches_pair_counting(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(2, 200))
            # coarse scores so ties happen
            scores = np.round(rng.random(n), 1)
            labels = rng.integers(0, 2, size=n)
            labels[0], labels[1] = 0, 1
            assert auc(scores, labels) == pytest.approx(pair_count_auc(scores, labels), abs=1e-12)


class TestMetrics:

    def test_constant_predictions(self):
        report = metrics_report([0.5] * 4, [1, 0, 1, 0])
        assert report.auc == 0.5
        assert report.logloss == pytest.approx(np.log(2.0), abs=1e-12)
        assert report.n_examples == 4

    def test_empty(self):
        with pytest.raises(ContractError):
            metrics_report([], [])

    def test_evaluate_uses_model_scores(self):
        examples = examples_with_labels([1, 0, 1, 0])
        report = evaluate(FixedModel([0.9, 0.1, 0.8, 0.2], [0.5] * 4), examples)
        assert report.auc == 1.0

    @pytest.mark.parametrize('seed', [1, 2, 3, 4, 5])
    def test_untrained_model_is_near_chance(self, default_dataset, seed):
        model = CtrModel.initialize(ModelConfig(seed=seed), default_dataset)
        assert 0.4 <= evaluate(model, default_dataset.test).auc <= 0.6

    def test_metrics_csv(self):
        text = metrics_csv(MetricsReport(0.75, 0.5, 8).rows())
        assert list(csv.reader(io.StringIO(text))) == [
            ['metric', 'value'], ['auc', '0.75'], ['logloss', '0.5'], ['n_examples', '8']]


class TestScenarioBins:

    @pytest.mark.parametrize('gamma, scenario', [
        (1.0, Scenario.S1),
        (0.5, Scenario.S1),
        (0.4999, Scenario.S2),
        (0.1, Scenario.S2),
        (0.0999, Scenario.S3),
        (0.0, Scenario.S3),
    ])
    def test_boundaries(self, gamma, scenario):
        assert bin_for_gamma(gamma) is scenario

    @pytest.mark.parametrize('gamma', [-0.01, 1.01])
    def test_out_of_range(self, gamma):
        with pytest.raises(ContractError):
            bin_for_gamma(gamma)

    def test_batch_gammas(self):
        assert_allclose(batch_gammas([0.0, 1.0, 0.2, 0.4, 0.9], 2), [0.5, 0.5, 0.3, 0.3, 0.9])


class TestScenarioTest:

    def test_everything_in_s1(self):
        examples = examples_with_labels([1, 0, 1, 0])
        report = scenario_test(FixedModel([0.9, 0.1, 0.6, 0.4], [0.7] * 4), examples)
        assert report[Scenario.S1].share == 1.0
        assert report[Scenario.S1].report.auc == 1.0
        assert not report[Scenario.S2].defined
        assert report[Scenario.S2].reason == 'empty'
        assert report.spread() == 0.0

    def test_single_class_bin(self):
        examples = examples_with_labels([1, 1, 1, 0])
        report = scenario_test(FixedModel([0.9, 0.8, 0.7, 0.1], [0.7, 0.7, 0.05, 0.05]), examples)
        assert report[Scenario.S1].reason == 'single-class'
        assert report[Scenario.S3].report.auc == 1.0

    def test_batch_mode(self):
        examples = examples_with_labels([1, 0, 1, 0])
        model = FixedModel([0.9, 0.1, 0.6, 0.4], [0.9, 0.2, 0.05, 0.05])
        assert report_bins(scenario_test(model, examples)) == [Scenario.S1, Scenario.S2, Scenario.S3,
                                                               Scenario.S3]
        assert report_bins(scenario_test(model, examples, batch_mode=True, batch_size=2)) == [
            Scenario.S1, Scenario.S1, Scenario.S3, Scenario.S3]

    def test_agreement_with_sidecar(self):
        examples = examples_with_labels([1, 0, 1, 0])
        report = scenario_test(FixedModel([0.9, 0.1, 0.6, 0.4], [0.9, 0.2, 0.05, 0.6]), examples)
        sidecar = {0: Scenario.S1, 1: Scenario.S2, 2: Scenario.S2}
        assert report.agreement(examples, sidecar) == pytest.approx(2 / 3)

    def test_csv(self):
        examples = examples_with_labels([1, 0, 1, 0])
        report = scenario_test(FixedModel([0.9, 0.1, 0.6, 0.4], [0.7] * 4), examples)
        rows = list(csv.DictReader(io.StringIO(report.to_csv())))
        assert [r['scenario'] for r in rows] == ['S1', 'S2', 'S3']
        assert rows[0]['status'] == 'ok'
        assert rows[1]['auc'] == ''
        assert 'S1' in report.format_table()

    def test_no_examples(self):
        with pytest.raises(ContractError):
            scenario_test(FixedModel([], []), [])

    def test_fixed_partition(self):
        examples = examples_with_labels([1, 0, 1, 0])
        model = FixedModel([0.9, 0.1, 0.6, 0.4], [0.05] * 4)
        report = scenario_test(model, examples, gammas=[0.9, 0.9, 0.2, 0.2])
        assert report_bins(report) == [Scenario.S1, Scenario.S1, Scenario.S2, Scenario.S2]
        assert report[Scenario.S1].report.auc == 1.0
        assert not report[Scenario.S3].defined

    def test_fixed_partition_needs_one_weight_per_example(self):
        examples = examples_with_labels([1, 0, 1, 0])
        with pytest.raises(ContractError):
            scenario_test(FixedModel([0.9, 0.1, 0.6, 0.4], [0.7] * 4), examples, gammas=[0.9, 0.1])

    def test_generated_requests_fill_several_bins(self, default_dataset):
        model = CtrModel.initialize(ModelConfig(seed=1), default_dataset)
        report = scenario_test(model, default_dataset.test)
        assert sum(1 for b in report.bins if b.count) >= 2
        s1 = [e for e, a in zip(default_dataset.test, report.assignments) if a is Scenario.S1]
        assert np.mean([default_dataset.scenarios[e.record] is Scenario.S1 for e in s1]) >= 0.8


def report_bins(report):
    return list(report.assignments)


class TestLatency:

    @pytest.fixture
    def model(self, hand_dataset):
        cfg = ModelConfig(dim=4, layers=1, behavior_length=4, head=HeadKind.ATTN, variant=Variant.GF,
                          hidden=(4,), attention_hidden=3)
        return CtrModel.initialize(cfg, hand_dataset)

    @pytest.mark.parametrize('concurrency', [1, 2])
    def test_summary(self, model, hand_dataset, concurrency):
        summary = latency_benchmark(model, hand_dataset.test, n_requests=100, concurrency=concurrency,
                                    candidates=8)
        assert len(summary.samples) == 100
        assert 0 < summary.p50 <= summary.p95
        assert dict(summary.rows())['requests'] == 100

    def test_more_candidates_are_not_faster(self, tiny_dataset):
        cfg = ModelConfig(dim=32, layers=1, behavior_length=50, head=HeadKind.ATTN, variant=Variant.GF,
                          hidden=(32, 16), attention_hidden=16)
        model = CtrModel.initialize(cfg, tiny_dataset)
        narrow = latency_benchmark(model, tiny_dataset.test, n_requests=100, candidates=200)
        wide = latency_benchmark(model, tiny_dataset.test, n_requests=100, candidates=400)
        assert wide.mean >= narrow.mean

    def test_too_few_requests(self, model, hand_dataset):
        with pytest.raises(ContractError):
            latency_benchmark(model, hand_dataset.test, n_requests=99)


class TestAblation:

    reports = {
        Variant.BASE: MetricsReport(0.6, 0.6, 10),
        Variant.F: MetricsReport(0.63, 0.58, 10),
        Variant.G: MetricsReport(0.66, 0.57, 10),
        Variant.GF: MetricsReport(0.69, 0.55, 10),
    }

    def test_rows(self):
        rows = ablation_rows(self.reports)
        assert [r.variant for r in rows] == [Variant.BASE, Variant.F, Variant.G, Variant.GF]
        assert rows[0].improvement == 0.0
        assert rows[3].improvement == pytest.approx(15.0)

    def test_needs_base(self):
        with pytest.raises(ContractError):
            ablation_rows({Variant.F: self.reports[Variant.F]})

    def test_outputs(self):
        rows = ablation_rows(self.reports)
        lines = ablation_csv(rows).splitlines()
        assert lines[0] == 'variant,auc,logloss,auc_improvement_pct'
        assert lines[4].startswith('g&f,0.69,0.55,')
        assert len(format_ablation_table(rows).splitlines()) == 5
