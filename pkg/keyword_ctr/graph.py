"""
The user / keyword / paper graph.

Nodes are typed and indexed per type; edges are undirected and stored per
relation so that propagation can aggregate each relation separately. The
graph is immutable once built.
"""
import enum
import json
import logging
import re
from collections import namedtuple
from functools import lru_cache

import numpy as np
from scipy import sparse

from keyword_ctr import ContractError, IngestionError, _read_package_data

LOG = logging.getLogger(__name__)

GRAPH_FORMAT = 'keyword-ctr-graph'
GRAPH_VERSION = 1
MIN_TOKEN_LENGTH = 2

_TOKEN_RE = re.compile(r'[^\W_]+')


@enum.unique
class NodeType(enum.Enum):
    USER = 'user'
    KEYWORD = 'keyword'
    PAPER = 'paper'


# global index order: users, then keywords, then papers
NODE_TYPES = (NodeType.USER, NodeType.KEYWORD, NodeType.PAPER)


@enum.unique
class EdgeType(enum.Enum):
    UP = 'u-p'
    UK = 'u-k'
    PK = 'p-k'

    @property
    def endpoints(self):
        return _ENDPOINTS[self]


_ENDPOINTS = {
    EdgeType.UP: (NodeType.USER, NodeType.PAPER),
    EdgeType.UK: (NodeType.USER, NodeType.KEYWORD),
    EdgeType.PK: (NodeType.PAPER, NodeType.KEYWORD),
}

RELATIONS = {
    NodeType.USER: (EdgeType.UP, EdgeType.UK),
    NodeType.PAPER: (EdgeType.UP, EdgeType.PK),
    NodeType.KEYWORD: (EdgeType.UK, EdgeType.PK),
}


class NodeRef(namedtuple('NodeRef', 'node_type index')):
    __slots__ = ()

    def __repr__(self):
        return '{}:{}'.format(self.node_type.value, self.index)


@lru_cache(maxsize=1)
def load_stopwords():
    """The bundled stopword list (``data/stopwords.txt``)."""
    words = set()
    for line in _read_package_data('stopwords.txt').splitlines():
        line = line.strip()
        if line and not line.startswith('#'):
            words.add(line.lower())
    return frozenset(words)


def tokenize_title(title, stopwords=None):
    """
    Split a title into keyword tokens.

    Lowercases, splits on non-alphanumeric characters, drops stopwords and
    tokens shorter than two characters, and keeps the first occurrence of
    each remaining token in order.
    """
    if stopwords is None:
        stopwords = load_stopwords()
    seen = set()
    tokens = []
    for token in _TOKEN_RE.findall(title.lower()):
        if len(token) < MIN_TOKEN_LENGTH or token in stopwords or token in seen:
            continue
        seen.add(token)
        tokens.append(token)
    return tokens


class HeteroGraph:
    """
    Typed undirected graph with per-relation adjacency.

    :param users: number of user nodes
    :param keywords: keyword vocabulary; node index is the position in the
        sorted vocabulary
    :param papers: number of paper nodes
    :param edges: mapping from :class:`EdgeType` to (a, b) index pairs in the
        relation's endpoint order, e.g. (user, paper) for u-p
    """

    def __init__(self, users, keywords, papers, edges):
        keywords = sorted(set(keywords))
        self.counts = {
            NodeType.USER: int(users),
            NodeType.KEYWORD: len(keywords),
            NodeType.PAPER: int(papers),
        }
        self.keywords = tuple(keywords)
        self._keyword_index = {k: i for i, k in enumerate(self.keywords)}

        self._offsets = {}
        total = 0
        for node_type in NODE_TYPES:
            self._offsets[node_type] = total
            total += self.counts[node_type]
        self.size = total

        self._edges = {}
        self._adjacency = {}
        for edge_type in EdgeType:
            left, right = edge_type.endpoints
            pairs = sorted(set((int(a), int(b)) for a, b in edges.get(edge_type, ())))
            for a, b in pairs:
                if not (0 <= a < self.counts[left] and 0 <= b < self.counts[right]):
                    raise ContractError('{} edge ({}, {}) out of range'.format(edge_type.value, a, b))
            self._edges[edge_type] = tuple(pairs)

            forward = [[] for _ in range(self.counts[left])]
            backward = [[] for _ in range(self.counts[right])]
            for a, b in pairs:
                forward[a].append(b)
                backward[b].append(a)
            self._adjacency[left, edge_type] = tuple(tuple(sorted(n)) for n in forward)
            self._adjacency[right, edge_type] = tuple(tuple(sorted(n)) for n in backward)

        self._operators = {}

    def __repr__(self):
        return '<HeteroGraph users={} keywords={} papers={} edges={}>'.format(
            self.counts[NodeType.USER], self.counts[NodeType.KEYWORD],
            self.counts[NodeType.PAPER], {t.value: len(e) for t, e in self._edges.items()})

    def keyword_index(self, keyword):
        return self._keyword_index.get(keyword)

    def offset(self, node_type):
        return self._offsets[node_type]

    def global_index(self, ref):
        if not 0 <= ref.index < self.counts[ref.node_type]:
            raise ContractError('{!r} out of range'.format(ref))
        return self._offsets[ref.node_type] + ref.index

    def global_indices(self, node_type, indices):
        return self._offsets[node_type] + np.asarray(indices, dtype=np.int64)

    def edges(self, edge_type):
        return self._edges[edge_type]

    def neighbor_indices(self, node_type, index, edge_type):
        if edge_type not in RELATIONS[node_type]:
            raise ContractError('{} nodes have no {} relation'.format(node_type.value, edge_type.value))
        return self._adjacency[node_type, edge_type][index]

    def mean_operator(self, neighbor_cap=None):
        """
        Sparse ``size x size`` operator whose product with a node-embedding
        matrix gives, per node, the sum over its relations of the mean
        neighbor embedding. Relations without neighbors contribute nothing.

        ``neighbor_cap`` keeps only the first ``cap`` neighbors (by index) of
        each relation. This is an approximation for stress tests.
        """
        cap = neighbor_cap or None
        if cap not in self._operators:
            rows, cols, vals = [], [], []
            for node_type in NODE_TYPES:
                base = self._offsets[node_type]
                for edge_type in RELATIONS[node_type]:
                    other = edge_type.endpoints[1] if edge_type.endpoints[0] is node_type \
                        else edge_type.endpoints[0]
                    other_base = self._offsets[other]
                    for i, nbrs in enumerate(self._adjacency[node_type, edge_type]):
                        if cap is not None:
                            nbrs = nbrs[:cap]
                        if not nbrs:
                            continue
                        w = 1.0 / len(nbrs)
                        rows.extend([base + i] * len(nbrs))
                        cols.extend(other_base + j for j in nbrs)
                        vals.extend([w] * len(nbrs))
            op = sparse.csr_matrix((vals, (rows, cols)), shape=(self.size, self.size),
                                   dtype=np.float64)
            op.sort_indices()
            self._operators[cap] = op
        return self._operators[cap]


def neighbors(g, i, t):
    """Sorted t-type neighbors of node ``i``."""
    other = t.endpoints[1] if t.endpoints[0] is i.node_type else t.endpoints[0]
    return [NodeRef(other, j) for j in g.neighbor_indices(i.node_type, i.index, t)]


def build_graph(user_paper, user_keyword, paper_titles, users, stopwords=None):
    """
    Build the graph from click pairs, user-added keywords and paper titles.

    :param user_paper: iterable of (user, paper) click/search pairs
    :param user_keyword: iterable of (user, keyword text) additions
    :param paper_titles: mapping paper id -> title; paper ids must be 0..N-1
    :param users: number of users
    """
    papers = len(paper_titles)
    for p in paper_titles:
        if not 0 <= p < papers:
            raise IngestionError({'paper': p}, 'paper ids must be contiguous from 0')

    title_tokens = {p: tokenize_title(paper_titles[p], stopwords) for p in range(papers)}

    added = []
    for user, keyword in user_keyword:
        if not 0 <= user < users:
            raise IngestionError({'type': 'uk', 'user': user, 'keyword': keyword}, 'unknown user')
        keyword = (keyword or '').strip().lower()
        if not keyword:
            raise IngestionError({'type': 'uk', 'user': user, 'keyword': keyword}, 'empty keyword')
        added.append((user, keyword))

    vocab = set(k for _, k in added)
    for tokens in title_tokens.values():
        vocab.update(tokens)
    index = {k: i for i, k in enumerate(sorted(vocab))}

    up = []
    for user, paper in user_paper:
        if not 0 <= user < users:
            raise IngestionError({'type': 'up', 'user': user, 'paper': paper}, 'unknown user')
        if not 0 <= paper < papers:
            raise IngestionError({'type': 'up', 'user': user, 'paper': paper}, 'unknown paper')
        up.append((user, paper))

    edges = {
        EdgeType.UP: up,
        EdgeType.UK: [(u, index[k]) for u, k in added],
        EdgeType.PK: [(p, index[k]) for p, tokens in title_tokens.items() for k in tokens],
    }
    g = HeteroGraph(users, vocab, papers, edges)
    LOG.info('Built %r', g)
    return g


def graph_statistics(g):
    return {
        'users': g.counts[NodeType.USER],
        'keywords': g.counts[NodeType.KEYWORD],
        'papers': g.counts[NodeType.PAPER],
        'edges_u-p': len(g.edges(EdgeType.UP)),
        'edges_u-k': len(g.edges(EdgeType.UK)),
        'edges_p-k': len(g.edges(EdgeType.PK)),
    }


# JSON Lines and graph files

def write_jsonl(path, records):
    with open(path, 'w', encoding='utf-8') as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, separators=(',', ':')))
            f.write('\n')


def read_jsonl(path):
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except ValueError as e:
                raise IngestionError('{}:{}'.format(path, lineno), 'invalid JSON ({})'.format(e))


def read_events(path):
    """
    Read graph-window events: ``{"type": "up"|"uk", "user", "paper", "keyword", "ts"}``.

    Returns (user_paper pairs, user_keyword pairs).
    """
    user_paper, user_keyword = [], []
    for record in read_jsonl(path):
        kind = record.get('type')
        try:
            user = int(record['user'])
            int(record['ts'])
            if kind == 'up':
                user_paper.append((user, int(record['paper'])))
            elif kind == 'uk':
                keyword = record['keyword']
                if not isinstance(keyword, str):
                    raise TypeError('keyword must be text')
                user_keyword.append((user, keyword))
            else:
                raise IngestionError(record, 'unknown event type {!r}'.format(kind))
        except (KeyError, TypeError, ValueError) as e:
            raise IngestionError(record, 'malformed event ({})'.format(e))
    return user_paper, user_keyword


def read_titles(path):
    titles = {}
    for record in read_jsonl(path):
        try:
            titles[int(record['paper'])] = str(record['title'])
        except (KeyError, TypeError, ValueError) as e:
            raise IngestionError(record, 'malformed title ({})'.format(e))
    return titles


def save_graph(g, path):
    doc = {
        'format': GRAPH_FORMAT,
        'version': GRAPH_VERSION,
        'counts': {t.value: g.counts[t] for t in NODE_TYPES},
        'keywords': list(g.keywords),
        'edges': {t.value: [list(e) for e in g.edges(t)] for t in EdgeType},
    }
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(doc, f, sort_keys=True, separators=(',', ':'))


def load_graph(path):
    with open(path, 'r', encoding='utf-8') as f:
        doc = json.load(f)
    if doc.get('format') != GRAPH_FORMAT or doc.get('version') != GRAPH_VERSION:
        raise IngestionError(path, 'unsupported graph file {}/{}'.format(
            doc.get('format'), doc.get('version')))
    counts = doc['counts']
    if len(doc['keywords']) != counts['keyword']:
        raise IngestionError(path, 'keyword count does not match vocabulary')
    edges = {t: [tuple(e) for e in doc['edges'][t.value]] for t in EdgeType}
    return HeteroGraph(counts['user'], doc['keywords'], counts['paper'], edges)
