"""
Click-through-rate heads and the log loss.

Every head scores (fused query, target paper, behavior sequence, paper
features). They differ in how the behavior sequence is pooled:

``mlp``
    masked mean of the behavior embeddings
``attn``
    target-aware attention over the behaviors (DIN style)
``gru``
    a gated recurrent pass over the behaviors, oldest to newest, whose final
    state is gated against the target. This is a simplified stand-in for
    interest-evolution models, without their auxiliary loss.

The tower input is the query, the target, the pooled vector, the elementwise
products query * target and pooled * target, and the paper features. An MLP
with a sigmoid output maps it to a click probability.
"""
import dataclasses
import logging
from collections import namedtuple

import numpy as np

from keyword_ctr import ContractError, HeadKind
from keyword_ctr import numerics as nx

LOG = logging.getLogger(__name__)

FEATURE_DIM = 2
CLIP = 1e-7

HeadOutput = namedtuple('HeadOutput', 'prob attention')


@dataclasses.dataclass(frozen=True)
class FeatureStats:
    citation_mean: float
    citation_std: float
    year_min: int
    year_max: int

    @classmethod
    def from_papers(cls, features, papers):
        """Statistics over the distinct ``papers`` (the training split)."""
        papers = np.unique(np.asarray(list(papers), dtype=np.int64))
        if not len(papers):
            raise ContractError('feature statistics need at least one paper')
        c = np.log1p(features.citations[papers].astype(np.float64))
        y = features.years[papers]
        return cls(float(c.mean()), float(c.std()), int(y.min()), int(y.max()))

    def to_dict(self):
        return dataclasses.asdict(self)


def encode_features(features, stats, papers):
    """
    Dense (n, 2) features: z-scored log(1 + citations) and the publication
    year scaled to [0, 1] by the training range.
    """
    papers = np.asarray(papers, dtype=np.int64)
    c = np.log1p(features.citations[papers].astype(np.float64))
    std = stats.citation_std if stats.citation_std > 1e-12 else 1.0
    z = (c - stats.citation_mean) / std
    span = stats.year_max - stats.year_min
    if span > 0:
        year = (features.years[papers] - stats.year_min) / float(span)
    else:
        year = np.zeros(len(papers))
    return np.stack([z, year], axis=-1).astype(np.float64)


class PredictionHead:
    """
    Parameters and forward pass of one head kind.

    :param kind: :class:`HeadKind`
    :param dim: embedding dimension d
    :param hidden: hidden sizes of the output MLP
    :param attention_hidden: hidden size of the attention scorer (attn only)
    """

    def __init__(self, kind, dim, hidden=(64, 32), attention_hidden=32, params=None):
        self.kind = kind
        self.dim = dim
        self.hidden = tuple(hidden)
        self.attention_hidden = attention_hidden
        self.params = params if params is not None else {
            name: np.zeros(shape) for name, shape, _ in self.layout()}
        for name, shape, _ in self.layout():
            if self.params[name].shape != shape:
                raise ContractError('head parameter {} has shape {}, expected {}'
                                    .format(name, self.params[name].shape, shape))

    @classmethod
    def initialize(cls, kind, dim, hidden=(64, 32), attention_hidden=32, seed=0):
        """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer."""
        head = cls(kind, dim, hidden, attention_hidden)
        rng = np.random.default_rng(seed)
        for name, shape, fan_in in head.layout():
            bound = 1.0 / np.sqrt(fan_in)
            head.params[name] = rng.uniform(-bound, bound, size=shape)
        return head

    def layout(self):
        """(name, shape, fan_in) for every parameter, in a fixed order."""
        d = self.dim
        layers = []
        if self.kind is HeadKind.ATTN:
            a = self.attention_hidden
            layers += [('attn.w0', (3 * d, a), 3 * d), ('attn.b0', (a,), 3 * d),
                       ('attn.w1', (a, 1), a), ('attn.b1', (1,), a)]
        elif self.kind is HeadKind.GRU:
            for gate in 'zrn':
                layers += [('gru.w' + gate, (d, d), d), ('gru.u' + gate, (d, d), d),
                           ('gru.b' + gate, (d,), d)]
            layers += [('gru.att_w', (3 * d, 1), 3 * d), ('gru.att_b', (1,), 3 * d)]

        width = 5 * d + FEATURE_DIM
        for i, h in enumerate(self.hidden):
            layers += [('mlp.w{}'.format(i), (width, h), width), ('mlp.b{}'.format(i), (h,), width)]
            width = h
        layers += [('mlp.out_w', (width, 1), width), ('mlp.out_b', (1,), width)]
        return layers

    def register(self, record, prefix='head.'):
        return {name: record.parameter(prefix + name, self.params[name]) for name, _, _ in self.layout()}

    def forward(self, p, query, target, slots, mask, features):
        """
        :param p: parameter nodes from :meth:`register`
        :param query: (B, d) node
        :param target: (B, d) node
        :param slots: (B, l_h, d) node of behavior embeddings
        :param mask: (B, l_h) array, 1 for real behaviors
        :param features: (B, 2) node
        """
        mask = np.asarray(mask, dtype=np.float64)
        batch, length, d = slots.shape
        rec = slots.record
        masked = nx.multiply(slots, rec.constant(mask[..., None]))
        attention = None

        if self.kind is HeadKind.MLP:
            inv = 1.0 / np.maximum(mask.sum(axis=1), 1.0)
            pooled = nx.multiply(nx.reduce_sum(masked, axis=1), rec.constant(inv[:, None]))

        elif self.kind is HeadKind.ATTN:
            tgt = nx.broadcast_to(nx.reshape(target, (batch, 1, d)), (batch, length, d))
            inp = nx.concat([masked, tgt, nx.multiply(masked, tgt)])
            hid = nx.relu(nx.add(nx.matmul(inp, p['attn.w0']), p['attn.b0']))
            score = nx.reshape(nx.add(nx.matmul(hid, p['attn.w1']), p['attn.b1']), (batch, length))
            attention = nx.masked_softmax(score, mask > 0)
            weighted = nx.multiply(masked, nx.reshape(attention, (batch, length, 1)))
            pooled = nx.reduce_sum(weighted, axis=1)

        elif self.kind is HeadKind.GRU:
            h = rec.constant(np.zeros((batch, d)))
            # slots are newest first, padding last
            for t in reversed(range(length)):
                m = mask[:, t:t + 1]
                if not m.any():
                    continue
                x = nx.take(masked, t, axis=1)
                z = nx.sigmoid(nx.add(nx.add(nx.matmul(x, p['gru.wz']), nx.matmul(h, p['gru.uz'])),
                                      p['gru.bz']))
                r = nx.sigmoid(nx.add(nx.add(nx.matmul(x, p['gru.wr']), nx.matmul(h, p['gru.ur'])),
                                      p['gru.br']))
                n = nx.tanh(nx.add(nx.add(nx.matmul(x, p['gru.wn']),
                                          nx.matmul(nx.multiply(r, h), p['gru.un'])),
                                   p['gru.bn']))
                h_new = nx.add(nx.multiply(nx.scale(z, -1.0, 1.0), n), nx.multiply(z, h))
                h = nx.add(nx.multiply(h_new, rec.constant(m)), nx.multiply(h, rec.constant(1.0 - m)))
            gate = nx.sigmoid(nx.add(nx.matmul(nx.concat([h, target, nx.multiply(h, target)]),
                                               p['gru.att_w']), p['gru.att_b']))
            pooled = nx.multiply(h, gate)

        else:
            raise ContractError('unknown head kind {!r}'.format(self.kind))

        x = nx.concat([query, target, pooled, nx.multiply(query, target), nx.multiply(pooled, target), features])
        for i in range(len(self.hidden)):
            x = nx.relu(nx.add(nx.matmul(x, p['mlp.w{}'.format(i)]), p['mlp.b{}'.format(i)]))
        logit = nx.add(nx.matmul(x, p['mlp.out_w']), p['mlp.out_b'])
        return HeadOutput(nx.sigmoid(nx.reshape(logit, (batch,))), attention)


def predict(head, e_q, e_p, behaviors, mask, features):
    """
    Click probability for one example (1-d inputs) or a batch.

    ``behaviors`` are the enhanced embeddings of the fused sequence, shape
    (l_h, d) or (B, l_h, d), with ``mask`` marking real entries.
    """
    single = np.ndim(e_q) == 1
    arrays = [np.asarray(a, dtype=np.float64) for a in (e_q, e_p, behaviors, mask, features)]
    if single:
        arrays = [a[None] for a in arrays]
    e_q, e_p, behaviors, mask, features = arrays

    rec = nx.ComputationRecord()
    out = head.forward(head.register(rec), rec.constant(e_q), rec.constant(e_p),
                       rec.constant(behaviors), mask, rec.constant(features))
    probs = out.prob.value
    return float(probs[0]) if single else probs


def attention_weights(head, e_q, e_p, behaviors, mask, features):
    """Per-slot attention weights of an ``attn`` head, shape (B, l_h)."""
    if head.kind is not HeadKind.ATTN:
        raise ContractError('only attention heads have attention weights')
    rec = nx.ComputationRecord()
    out = head.forward(head.register(rec), rec.constant(e_q), rec.constant(e_p),
                       rec.constant(behaviors), mask, rec.constant(features))
    return out.attention.value


def logloss(preds, labels):
    """Mean binary cross-entropy with predictions clipped to [1e-7, 1 - 1e-7]."""
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.shape != labels.shape or preds.size < 1:
        raise ContractError('logloss needs equal, non-empty prediction and label arrays')
    p = np.clip(preds, CLIP, 1.0 - CLIP)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)))


def logloss_node(prob, labels):
    """:func:`logloss` on a computation record."""
    labels = np.asarray(labels, dtype=np.float64)
    if prob.shape != labels.shape or labels.size < 1:
        raise ContractError('logloss needs equal, non-empty prediction and label arrays')
    rec = prob.record
    p = nx.clip(prob, CLIP, 1.0 - CLIP)
    pos = nx.multiply(nx.log(p), rec.constant(labels))
    neg = nx.multiply(nx.log(nx.scale(p, -1.0, 1.0)), rec.constant(1.0 - labels))
    return nx.scale(nx.reduce_mean(nx.add(pos, neg)), -1.0)
