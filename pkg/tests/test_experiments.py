"""
End-to-end experiments on the default generator configuration.

These train every compared model from scratch and take minutes; they are
deselected unless pytest runs with ``-m slow``.
"""
import dataclasses

import numpy as np
import pytest

from keyword_ctr import HeadKind, Variant
from keyword_ctr.datagen import GenConfig, generate_dataset
from keyword_ctr.dataset import prepare_dataset
from keyword_ctr.evaluate import evaluate, latency_benchmark, scenario_test
from keyword_ctr.model import CtrModel, ModelConfig
from keyword_ctr.train import train

pytestmark = pytest.mark.slow

SEEDS = (1, 2, 3)
DEFAULT_MODEL = ModelConfig(batch_size=64, epochs=12)


@pytest.fixture(scope='module')
def compared(default_dataset):
    """
    Test report and scenario report of base and g&f for every seed. Both
    variants are binned by the g&f model's fusion weights.
    """
    test = default_dataset.test
    results = {}
    for seed in SEEDS:
        models = {variant: train(DEFAULT_MODEL.replace(variant=variant, seed=seed), default_dataset).model
                  for variant in (Variant.BASE, Variant.GF)}
        _, gammas = models[Variant.GF].score_with_gamma(test)
        for variant, model in models.items():
            results[variant, seed] = (evaluate(model, test), scenario_test(model, test, gammas=gammas))
    return results


def mean_over_seeds(compared, variant, value):
    return float(np.mean([value(*compared[variant, seed]) for seed in SEEDS]))


def test_full_model_beats_base(compared):
    gf = mean_over_seeds(compared, Variant.GF, lambda report, _: report.auc)
    base = mean_over_seeds(compared, Variant.BASE, lambda report, _: report.auc)
    assert gf >= 0.80
    assert gf - base >= 0.03


def test_full_model_is_stable_across_scenarios(compared):
    gf = mean_over_seeds(compared, Variant.GF, lambda _, scenarios: scenarios.spread())
    base = mean_over_seeds(compared, Variant.BASE, lambda _, scenarios: scenarios.spread())
    assert gf <= base


def test_bins_agree_with_generator_scenarios(compared, default_dataset):
    agreement = mean_over_seeds(
        compared, Variant.GF,
        lambda _, scenarios: scenarios.agreement(default_dataset.test, default_dataset.scenarios))
    assert agreement > 0.6


def small_generator(**changes):
    return dataclasses.replace(GenConfig(), users=300, papers=1500, vocabulary=200, up_events=6000,
                               kp_events=2400, ukp_events=3000, **changes)


SMALL_MODEL = ModelConfig(dim=16, layers=2, behavior_length=20, batch_size=64, epochs=5, hidden=(16, 8),
                          attention_hidden=8)


def test_shuffled_labels_give_chance_auc():
    dataset = prepare_dataset(generate_dataset(small_generator()), seed=42)
    rng = np.random.default_rng(0)
    labels = rng.permutation([e.label for e in dataset.train])
    shuffled = dataclasses.replace(dataset, train=[e._replace(label=int(y))
                                                   for e, y in zip(dataset.train, labels)])
    result = train(SMALL_MODEL, shuffled)
    assert abs(evaluate(result.model, dataset.test).auc - 0.5) < 0.06


def test_no_signal_generator_gives_chance_auc():
    dataset = prepare_dataset(generate_dataset(small_generator(sharpness=0.0)), seed=42)
    result = train(SMALL_MODEL, dataset)
    assert abs(evaluate(result.model, dataset.test).auc - 0.5) < 0.06


def test_recurrent_head_is_slower(default_dataset):
    p50 = {}
    for head in (HeadKind.MLP, HeadKind.GRU):
        model = CtrModel.initialize(DEFAULT_MODEL.replace(head=head), default_dataset)
        p50[head] = latency_benchmark(model, default_dataset.test, n_requests=100).p50
    assert p50[HeadKind.GRU] > p50[HeadKind.MLP]
