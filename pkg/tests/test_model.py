import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from keyword_ctr import ConfigError, ContractError, HeadKind, IngestionError, Variant
from keyword_ctr import numerics as nx
from keyword_ctr.dataset import Example
from keyword_ctr.embedding import multi_hop_embed
from keyword_ctr.fusion import fuse_behaviors, fuse_query
from keyword_ctr.graph import NodeType
from keyword_ctr.model import CtrModel, ModelConfig, assemble_batch, load_checkpoint, save_checkpoint

HAND_CONFIG = ModelConfig(dim=4, layers=1, behavior_length=4, learning_rate=0.01, batch_size=4, epochs=1,
                          seed=9, head=HeadKind.MLP, variant=Variant.GF, hidden=(4,), attention_hidden=3)


def hand_model(dataset, **changes):
    return CtrModel.initialize(HAND_CONFIG.replace(**changes), dataset)


def examples_of(dataset):
    return dataset.train + dataset.test


class TestModelConfig:

    def test_defaults(self):
        cfg = ModelConfig()
        assert (cfg.dim, cfg.layers, cfg.behavior_length, cfg.learning_rate) == (64, 2, 100, 0.001)
        assert cfg.head is HeadKind.ATTN and cfg.variant is Variant.GF

    @pytest.mark.parametrize('changes', [
        {'dim': 1},
        {'layers': -1},
        {'behavior_length': 0},
        {'learning_rate': 0.0},
        {'hidden': ()},
        {'variant': 'g&f'},
    ])
    def test_invalid(self, changes):
        with pytest.raises(ConfigError):
            ModelConfig(**changes).validate()

    def test_dict_round_trip(self):
        cfg = HAND_CONFIG.replace(head=HeadKind.GRU, variant=Variant.F)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestAssembleBatch:

    def test_base_adds_user_and_keyword(self, hand_dataset):
        model = hand_model(hand_dataset, variant=Variant.BASE, dim=2)
        g = hand_dataset.graph
        data = np.zeros((g.size, 2))
        data[g.offset(NodeType.USER)] = [1.0, 0.0]
        data[g.offset(NodeType.KEYWORD) + g.keyword_index('graph')] = [0.0, 1.0]
        record = nx.ComputationRecord()
        inputs = assemble_batch(Variant.BASE, [Example(0, 0, 'graph', 2, 1, 0)], model, record.constant(data))
        assert_array_equal(inputs.query.value, [[1.0, 1.0]])

    def test_base_uses_union_of_behaviors(self, hand_dataset):
        model = hand_model(hand_dataset, variant=Variant.BASE)
        record = nx.ComputationRecord()
        inputs = assemble_batch(Variant.BASE, [Example(0, 0, 'search', 0, 1, 0)], model,
                                record.constant(model.table.data))
        # H_u = [p1, p0], H_k = [p2]; newest first by timestamp
        assert inputs.fused[0].slots == (2, 1, 0, -1)

    def test_graph_and_fusion_reproduce_fusion_outputs(self, hand_dataset):
        model = hand_model(hand_dataset)
        examples = examples_of(hand_dataset)
        record = nx.ComputationRecord()
        inputs = assemble_batch(Variant.GF, examples, model, record.constant(model.table.data))

        enhanced = multi_hop_embed(hand_dataset.graph, model.table, HAND_CONFIG.layers)
        g = hand_dataset.graph
        behaviors = hand_dataset.behaviors
        for i, e in enumerate(examples):
            e_u = enhanced[g.offset(NodeType.USER) + e.user]
            e_k = enhanced[g.offset(NodeType.KEYWORD) + g.keyword_index(e.keyword)]
            assert_allclose(inputs.query.value[i], fuse_query(e_u, e_k, inputs.gamma[i]), rtol=0, atol=1e-12)
            expected = fuse_behaviors([b.paper for b in behaviors.user(e.user)],
                                      [b.paper for b in behaviors.keyword(e.keyword)], inputs.gamma[i], 4)
            assert inputs.fused[i] == expected
        assert np.all((inputs.gamma >= 0) & (inputs.gamma <= 1))

    def test_frozen_gamma(self, hand_dataset):
        model = hand_model(hand_dataset)
        record = nx.ComputationRecord()
        inputs = assemble_batch(Variant.GF, hand_dataset.train, model, record.constant(model.table.data),
                                frozen_gamma=[1.0, 0.0])
        assert_array_equal(inputs.gamma, [1.0, 0.0])
        behaviors = hand_dataset.behaviors
        for e, gamma, fused in zip(hand_dataset.train, inputs.gamma, inputs.fused):
            assert fused == fuse_behaviors([b.paper for b in behaviors.user(e.user)],
                                           [b.paper for b in behaviors.keyword(e.keyword)], gamma, 4)
        # gamma = 1 puts the query on the user vector
        assert_allclose(inputs.query.value[0], multi_hop_embed(hand_dataset.graph, model.table, 1)[0],
                        rtol=0, atol=1e-12)

    def test_empty_batch(self, hand_dataset):
        model = hand_model(hand_dataset)
        record = nx.ComputationRecord()
        with pytest.raises(ContractError):
            assemble_batch(Variant.GF, [], model, record.constant(model.table.data))

    def test_unknown_keyword(self, hand_dataset):
        model = hand_model(hand_dataset)
        record = nx.ComputationRecord()
        with pytest.raises(ContractError):
            assemble_batch(Variant.GF, [Example(0, 0, 'nowhere', 1, 1, 0)], model,
                           record.constant(model.table.data))


class TestCtrModel:

    @pytest.mark.parametrize('variant, head', [
        (Variant.GF, HeadKind.MLP),
        (Variant.GF, HeadKind.ATTN),
        (Variant.GF, HeadKind.GRU),
        (Variant.BASE, HeadKind.MLP),
        (Variant.F, HeadKind.ATTN),
        (Variant.G, HeadKind.MLP),
    ])
    def test_gradients_agree_with_finite_differences(self, hand_dataset, variant, head):
        model = hand_model(hand_dataset, variant=variant, head=head)
        examples = examples_of(hand_dataset)
        record, loss, inputs = model.loss(examples)
        analytic = nx.forward_backward(record, loss)

        gamma = inputs.gamma.copy()
        numeric = nx.finite_difference_gradient(
            lambda _: model.loss(examples, frozen_gamma=gamma)[1].value, model.params, step=1e-6)
        for name in analytic:
            assert nx.relative_error(analytic[name], numeric[name]) < 1e-4, name

    @pytest.mark.parametrize('head', list(HeadKind))
    def test_gradients_on_generated_batch(self, tiny_dataset, tiny_model_config, head):
        model = CtrModel.initialize(tiny_model_config.replace(head=head), tiny_dataset)
        examples = tiny_dataset.train[:8]
        record, loss, inputs = model.loss(examples)
        analytic = nx.forward_backward(record, loss)

        gamma = inputs.gamma.copy()
        numeric = nx.finite_difference_gradient(
            lambda _: model.loss(examples, frozen_gamma=gamma)[1].value, model.params, step=1e-6)
        for name in analytic:
            assert nx.relative_error(analytic[name], numeric[name]) < 1e-4, name

    def test_fusion_without_layers_matches_full_model_without_layers(self, hand_dataset):
        f = hand_model(hand_dataset, variant=Variant.F, layers=0)
        gf = hand_model(hand_dataset, variant=Variant.GF, layers=0)
        examples = examples_of(hand_dataset)
        assert_array_equal(f.score(examples), gf.score(examples))
        assert f.loss(examples)[1].value == gf.loss(examples)[1].value

    def test_scores_match_training_forward(self, hand_dataset):
        model = hand_model(hand_dataset, head=HeadKind.ATTN)
        examples = examples_of(hand_dataset)
        prob, _ = model.forward(nx.ComputationRecord(), examples)
        assert_allclose(model.score(examples, batch_size=3), prob.value, rtol=0, atol=1e-12)

    def test_parallel_scoring(self, hand_dataset):
        model = hand_model(hand_dataset)
        examples = examples_of(hand_dataset)
        serial = model.score_with_gamma(examples, batch_size=1)
        parallel = model.score_with_gamma(examples, batch_size=1, workers=3)
        assert_array_equal(serial[0], parallel[0])
        assert_array_equal(serial[1], parallel[1])

    def test_snapshot_restore(self, hand_dataset):
        model = hand_model(hand_dataset)
        examples = examples_of(hand_dataset)
        before = model.score(examples)
        snap = model.snapshot()
        model.table.data += 0.5
        model.invalidate()
        assert not np.array_equal(model.score(examples), before)
        model.restore(snap)
        assert_array_equal(model.score(examples), before)

    def test_initialization_is_seeded(self, hand_dataset):
        a, b = hand_model(hand_dataset), hand_model(hand_dataset)
        for name, value in a.params.items():
            assert_array_equal(value, b.params[name])
        c = hand_model(hand_dataset, seed=10)
        assert not np.array_equal(a.table.data, c.table.data)


class TestCheckpoint:

    def test_round_trip(self, hand_dataset, tmp_path):
        model = hand_model(hand_dataset, head=HeadKind.GRU)
        path = str(tmp_path / 'model.npz')
        save_checkpoint(model, path)
        again = load_checkpoint(path, hand_dataset)
        assert again.config == model.config
        assert again.feature_stats == model.feature_stats
        examples = examples_of(hand_dataset)
        assert_array_equal(again.score(examples), model.score(examples))

    def test_graph_mismatch(self, hand_dataset, tiny_dataset, tmp_path):
        path = str(tmp_path / 'model.npz')
        save_checkpoint(hand_model(hand_dataset), path)
        with pytest.raises(IngestionError):
            load_checkpoint(path, tiny_dataset)
