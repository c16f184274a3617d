"""
The end-to-end scoring model: embeddings, optional propagation, optional
query fusion, and a CTR head, wired per ablation variant.
"""
import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from keyword_ctr import ConfigError, ContractError, HeadKind, IngestionError, Variant, parse_variant
from keyword_ctr import numerics as nx
from keyword_ctr.ctr import FeatureStats, PredictionHead, encode_features, logloss_node
from keyword_ctr.embedding import EmbeddingTable, multi_hop_embed, multi_hop_node, table_from_arrays, table_meta
from keyword_ctr.fusion import PAD, distance_correlation_batch, fuse_behaviors, union_behaviors
from keyword_ctr.graph import NODE_TYPES, NodeType

LOG = logging.getLogger(__name__)

MODEL_FORMAT = 'keyword-ctr-model'
MODEL_VERSION = 2


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    dim: int = 64
    layers: int = 2
    behavior_length: int = 100
    learning_rate: float = 0.001
    batch_size: int = 1024
    epochs: int = 10
    seed: int = 42
    head: HeadKind = HeadKind.ATTN
    variant: Variant = Variant.GF
    hidden: tuple = (64, 32)
    attention_hidden: int = 32
    neighbor_cap: int = 0

    def validate(self):
        for name in ('dim', 'behavior_length', 'batch_size', 'attention_hidden'):
            if getattr(self, name) <= 0:
                raise ConfigError('model {} must be positive'.format(name))
        if self.dim < 2:
            raise ConfigError('embedding dimension must be at least 2 for distance correlation')
        for name in ('layers', 'epochs', 'neighbor_cap'):
            if getattr(self, name) < 0:
                raise ConfigError('model {} must not be negative'.format(name))
        if self.learning_rate <= 0:
            raise ConfigError('learning rate must be positive')
        if not self.hidden or min(self.hidden) <= 0:
            raise ConfigError('hidden sizes must be positive')
        if not isinstance(self.head, HeadKind) or not isinstance(self.variant, Variant):
            raise ConfigError('head and variant must be HeadKind / Variant values')
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d['head'] = self.head.value
        d['variant'] = self.variant.value
        d['hidden'] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d['head'] = HeadKind.parse(d['head'])
        d['variant'] = parse_variant(d['variant'])
        d['hidden'] = tuple(d['hidden'])
        return cls(**d).validate()


@dataclasses.dataclass
class BatchInputs:
    query: object
    target: object
    slots: object
    mask: np.ndarray
    features: object
    gamma: np.ndarray
    fused: list


def _papers(seq):
    return [item.paper for item in seq]


def assemble_batch(variant, examples, model, table, frozen_gamma=None, propagated=False):
    """
    Head inputs for ``examples`` under an ablation variant.

    ``table`` is the embedding node of a computation record. Graph variants
    propagate it first unless ``propagated`` says it already holds e*. Fusion
    variants weight the query and the behaviors by the distance correlation
    of the user and keyword vectors; the others add the two queries and use
    the recency-truncated union of both behavior sets.

    :param frozen_gamma: use these fusion weights instead of computing them
    """
    variant = parse_variant(variant)
    cfg = model.config
    g = model.graph
    if not examples:
        raise ContractError('cannot assemble an empty batch')

    emb = table
    if variant.uses_graph and not propagated:
        emb = multi_hop_node(g, table, cfg.layers, cfg.neighbor_cap)

    kw_index = [g.keyword_index(e.keyword) for e in examples]
    if any(k is None for k in kw_index):
        raise ContractError('batch contains a keyword outside the graph vocabulary')
    e_u = nx.gather(emb, g.global_indices(NodeType.USER, [e.user for e in examples]))
    e_k = nx.gather(emb, g.global_indices(NodeType.KEYWORD, kw_index))
    e_p = nx.gather(emb, g.global_indices(NodeType.PAPER, [e.paper for e in examples]))

    if frozen_gamma is not None:
        gamma = np.asarray(frozen_gamma, dtype=np.float64)
        if gamma.shape != (len(examples),):
            raise ContractError('frozen gamma must have one value per example')
    else:
        gamma = distance_correlation_batch(e_u.value, e_k.value)

    behaviors = model.behaviors
    length = cfg.behavior_length
    if variant.uses_fusion:
        col = gamma[:, None]
        query = nx.add(nx.scale(e_u, col), nx.scale(e_k, 1.0 - col))
        fused = [fuse_behaviors(_papers(behaviors.user(e.user)), _papers(behaviors.keyword(e.keyword)),
                                gamma[i], length)
                 for i, e in enumerate(examples)]
    else:
        query = nx.add(e_u, e_k)
        fused = [union_behaviors(behaviors.user(e.user), behaviors.keyword(e.keyword), length)
                 for e in examples]

    slot_papers = np.array([f.slots for f in fused], dtype=np.int64)
    mask = np.array([f.mask for f in fused], dtype=np.float64)
    slot_index = g.global_indices(NodeType.PAPER, np.where(slot_papers == PAD, 0, slot_papers))
    slots = nx.gather(emb, slot_index)

    rec = table.record
    features = rec.constant(encode_features(model.features, model.feature_stats,
                                            [e.paper for e in examples]))
    return BatchInputs(query, e_p, slots, mask, features, gamma, fused)


class CtrModel:
    """Parameters plus the data the forward pass reads (graph, behaviors, features)."""

    def __init__(self, config, graph, behaviors, features, feature_stats, table, head):
        self.config = config.validate()
        self.graph = graph
        self.behaviors = behaviors
        self.features = features
        self.feature_stats = feature_stats
        self.table = table
        self.head = head
        self._enhanced = None

        if table.data.shape != (graph.size, config.dim):
            raise ContractError('embedding table shape {} does not fit the graph ({} nodes, d={})'
                                .format(table.data.shape, graph.size, config.dim))

    @classmethod
    def initialize(cls, config, dataset):
        config.validate()
        table_seed, head_seed = np.random.SeedSequence(config.seed).spawn(2)
        stats = FeatureStats.from_papers(dataset.features, [e.paper for e in dataset.train])
        table = EmbeddingTable.initialize(dataset.graph.counts, config.dim, table_seed)
        head = PredictionHead.initialize(config.head, config.dim, config.hidden,
                                         config.attention_hidden, head_seed)
        return cls(config, dataset.graph, dataset.behaviors, dataset.features, stats, table, head)

    @property
    def params(self):
        params = {'embedding': self.table.data}
        params.update(('head.' + k, v) for k, v in self.head.params.items())
        return params

    def snapshot(self):
        return {k: v.copy() for k, v in self.params.items()}

    def restore(self, snapshot):
        for name, value in self.params.items():
            value[...] = snapshot[name]
        self.invalidate()

    def invalidate(self):
        self._enhanced = None

    def enhanced_embeddings(self):
        """e* for every node (the base table for variants without propagation)."""
        if self._enhanced is None:
            if self.config.variant.uses_graph:
                self._enhanced = multi_hop_embed(self.graph, self.table, self.config.layers,
                                                 self.config.neighbor_cap)
            else:
                self._enhanced = self.table.data.copy()
        return self._enhanced

    def forward(self, record, examples, frozen_gamma=None):
        nodes = {'embedding': record.parameter('embedding', self.table.data)}
        head_nodes = self.head.register(record)
        inputs = assemble_batch(self.config.variant, examples, self, nodes['embedding'], frozen_gamma)
        out = self.head.forward(head_nodes, inputs.query, inputs.target, inputs.slots,
                                inputs.mask, inputs.features)
        return out.prob, inputs

    def loss(self, examples, frozen_gamma=None):
        """(record, loss node, batch inputs) for one mini-batch."""
        record = nx.ComputationRecord()
        prob, inputs = self.forward(record, examples, frozen_gamma)
        return record, logloss_node(prob, [e.label for e in examples]), inputs

    def _score_batch(self, examples):
        record = nx.ComputationRecord()
        emb = record.constant(self.enhanced_embeddings())
        inputs = assemble_batch(self.config.variant, examples, self, emb, propagated=True)
        nodes = {name: record.constant(v) for name, v in self.head.params.items()}
        out = self.head.forward(nodes, inputs.query, inputs.target, inputs.slots,
                                inputs.mask, inputs.features)
        return out.prob.value, inputs.gamma

    def score_with_gamma(self, examples, batch_size=512, workers=1):
        """Click probabilities and fusion weights, in example order."""
        examples = list(examples)
        batches = [examples[i:i + batch_size] for i in range(0, len(examples), batch_size)]
        if not batches:
            return np.zeros(0), np.zeros(0)
        self.enhanced_embeddings()
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(self._score_batch, batches))
        else:
            results = [self._score_batch(b) for b in batches]
        return (np.concatenate([r[0] for r in results]), np.concatenate([r[1] for r in results]))

    def score(self, examples, batch_size=512, workers=1):
        return self.score_with_gamma(examples, batch_size, workers)[0]


def save_checkpoint(model, path):
    meta = {
        'format': MODEL_FORMAT,
        'version': MODEL_VERSION,
        'config': model.config.to_dict(),
        'feature_stats': model.feature_stats.to_dict(),
        'table': table_meta(model.table),
    }
    arrays = dict(model.params)
    with open(path, 'wb') as f:
        np.savez(f, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    LOG.info('Wrote checkpoint %s', path)


def load_checkpoint(path, dataset):
    """Rebuild a model from a checkpoint and the dataset it was trained on."""
    with np.load(path, allow_pickle=False) as f:
        meta = json.loads(str(f['meta']))
        if meta.get('format') != MODEL_FORMAT or meta.get('version') != MODEL_VERSION:
            raise IngestionError(path, 'unsupported model checkpoint')
        arrays = {k: np.array(f[k], dtype=np.float64) for k in f.files if k != 'meta'}

    config = ModelConfig.from_dict(meta['config'])
    table = table_from_arrays(meta['table'], arrays['embedding'])
    if any(table.counts[t] != dataset.graph.counts[t] for t in NODE_TYPES):
        raise IngestionError(path, 'checkpoint node counts do not match the dataset graph')
    head_params = {k[len('head.'):]: v for k, v in arrays.items() if k.startswith('head.')}
    head = PredictionHead(config.head, config.dim, config.hidden, config.attention_hidden, head_params)
    stats = FeatureStats(**meta['feature_stats'])
    return CtrModel(config, dataset.graph, dataset.behaviors, dataset.features, stats, table, head)
