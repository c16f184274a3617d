"""
Base node embeddings and parameter-free multi-hop propagation.

One layer replaces every node by the sum, over its relations, of the mean of
its neighbors' previous-layer vectors. The enhanced embedding sums layers
0..L, so the base vector itself is always part of the result.
"""
import dataclasses
import json
import logging

import numpy as np

from keyword_ctr import ContractError, IngestionError
from keyword_ctr import numerics as nx
from keyword_ctr.graph import NODE_TYPES, NodeType

LOG = logging.getLogger(__name__)

TABLE_FORMAT = 'keyword-ctr-embedding'
TABLE_VERSION = 1


@dataclasses.dataclass
class EmbeddingTable:
    dim: int
    counts: dict
    data: np.ndarray

    @classmethod
    def initialize(cls, counts, dim, seed):
        """Uniform in [-1/sqrt(d), 1/sqrt(d)], reproducible from ``seed``."""
        if dim <= 0:
            raise ContractError('embedding dimension must be positive')
        total = sum(counts[t] for t in NODE_TYPES)
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(dim)
        return cls(dim, dict(counts), rng.uniform(-bound, bound, size=(total, dim)))

    def offset(self, node_type):
        offset = 0
        for t in NODE_TYPES:
            if t is node_type:
                return offset
            offset += self.counts[t]

    def vector(self, ref):
        return self.data[self.offset(ref.node_type) + ref.index]


@dataclasses.dataclass
class LayerStack:
    layers: list

    @property
    def depth(self):
        return len(self.layers) - 1

    @property
    def enhanced(self):
        # same summation order as multi_hop_node
        total = self.layers[0]
        for layer in self.layers[1:]:
            total = total + layer
        return total


def _check(g, prev):
    prev = np.asarray(prev, dtype=np.float64)
    if prev.ndim != 2 or prev.shape[0] != g.size:
        raise ContractError('expected ({}, d) node embeddings, got {}'.format(g.size, prev.shape))
    return prev


def propagate_layer(g, prev, neighbor_cap=None):
    return np.asarray(g.mean_operator(neighbor_cap) @ _check(g, prev))


def layer_stack(g, table, layers, neighbor_cap=None):
    if layers < 0:
        raise ContractError('number of layers must not be negative')
    data = table.data if isinstance(table, EmbeddingTable) else table
    stack = [_check(g, data)]
    for _ in range(layers):
        stack.append(propagate_layer(g, stack[-1], neighbor_cap))
    return LayerStack(stack)


def multi_hop_embed(g, table, layers, neighbor_cap=None):
    """Enhanced embeddings e* = sum of layers 0..L for every node."""
    return layer_stack(g, table, layers, neighbor_cap).enhanced


def multi_hop_node(g, table_node, layers, neighbor_cap=None):
    """:func:`multi_hop_embed` on a computation record, so gradients reach the table."""
    if layers < 0:
        raise ContractError('number of layers must not be negative')
    _check(g, table_node.value)
    op = g.mean_operator(neighbor_cap)
    total = current = table_node
    for _ in range(layers):
        current = nx.sparse_matmul(op, current)
        total = nx.add(total, current)
    return total


def table_meta(table):
    return {
        'format': TABLE_FORMAT,
        'version': TABLE_VERSION,
        'dim': table.dim,
        'counts': {t.value: table.counts[t] for t in NODE_TYPES},
    }


def save_table(table, path):
    with open(path, 'wb') as f:
        np.savez(f, meta=np.array(json.dumps(table_meta(table), sort_keys=True)), embedding=table.data)


def table_from_arrays(meta, data):
    if meta.get('format') != TABLE_FORMAT or meta.get('version') != TABLE_VERSION:
        raise IngestionError(meta, 'unsupported embedding checkpoint')
    counts = {NodeType(k): v for k, v in meta['counts'].items()}
    if data.shape != (sum(counts.values()), meta['dim']):
        raise IngestionError(meta, 'embedding array has shape {}'.format(data.shape))
    return EmbeddingTable(meta['dim'], counts, np.array(data, dtype=np.float64))


def load_table(path):
    with np.load(path, allow_pickle=False) as f:
        return table_from_arrays(json.loads(str(f['meta'])), f['embedding'])
