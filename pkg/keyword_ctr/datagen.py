"""
Synthetic interaction logs shaped like a keyword paper recommendation service.

A latent topic model plants the signal: every user has a topic mixture, every
paper and every vocabulary word one topic. Titles are sampled from the paper's
topic words. Keyword recommendation clicks depend on a scenario-dependent mix
of user affinity and keyword relevance, which is what the fusion layer has to
recover. Requests inside the user's strongest topic are mostly typed with the
user's own profile keyword. Everything is a pure function of :class:`GenConfig`.
"""
import dataclasses
import enum
import json
import logging
import os
from collections import namedtuple

import numpy as np
from scipy import special

from keyword_ctr import ConfigError, ContractError, IngestionError, SplitError
from keyword_ctr.graph import load_stopwords, read_jsonl, tokenize_title, write_jsonl

LOG = logging.getLogger(__name__)

_SYLLABLES = (
    'ba', 'bel', 'co', 'dar', 'de', 'fi', 'gan', 'ho', 'ka', 'kel', 'lo', 'lum', 'ma',
    'mir', 'ne', 'nor', 'pa', 'pel', 'qua', 'ri', 'ros', 'sa', 'sen', 'ta', 'tor', 'u',
    'va', 'ven', 'xi', 'zo',
)
_FILLERS = ('for', 'of', 'the', 'a', 'on', 'with', 'via', 'and', 'in', 'towards')

# weight of user affinity in the click score, per scenario
SCENARIO_USER_WEIGHT = {'S1': 0.7, 'S2': 0.5, 'S3': 0.2}
# Dirichlet concentration of the user topic mixtures
TOPIC_CONCENTRATION = 0.2
# share of S1 requests typed with the user's own top-topic profile keyword
OWN_KEYWORD_SHARE = 0.8


@enum.unique
class Channel(enum.Enum):
    UP = 'u-p'
    KP = 'k-p'
    UKP = 'uk-p'


@enum.unique
class Scenario(enum.Enum):
    S1 = 'S1'
    S2 = 'S2'
    S3 = 'S3'


Interaction = namedtuple('Interaction', 'record channel user keyword paper ts label')
BehaviorItem = namedtuple('BehaviorItem', 'paper ts')


class InteractionLog:
    """Timestamp-ordered interaction records of all three channels."""

    def __init__(self, records):
        records = sorted(records, key=lambda r: (r.ts, r.record))
        for r in records:
            if r.channel is Channel.UKP and not r.keyword:
                raise IngestionError(r._asdict(), 'uk-p records need a keyword')
            if r.channel is Channel.UP and r.keyword is not None:
                raise IngestionError(r._asdict(), 'u-p records carry no keyword')
            if r.label not in (0, 1):
                raise IngestionError(r._asdict(), 'label must be 0 or 1')
        self.records = tuple(records)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def channel(self, channel):
        return [r for r in self.records if r.channel is channel]

    def counts(self):
        return {c.value: sum(1 for r in self.records if r.channel is c) for c in Channel}


@dataclasses.dataclass(frozen=True)
class PaperFeatures:
    citations: np.ndarray
    years: np.ndarray

    def __len__(self):
        return len(self.citations)


@dataclasses.dataclass(frozen=True)
class GenConfig:
    users: int = 1000
    papers: int = 5000
    vocabulary: int = 400
    topics: int = 10
    up_events: int = 20000
    kp_events: int = 8000
    ukp_events: int = 10000
    keywords_per_user: int = 3
    scenario_mix: tuple = (0.5, 0.3, 0.2)
    start: int = 1643673600
    graph_window_end: int = 1648771200
    end: int = 1651363200
    noise: float = 0.02
    sharpness: float = 15.0
    year_range: tuple = (1990, 2022)
    seed: int = 42

    def validate(self):
        for name in ('users', 'papers', 'vocabulary', 'topics', 'keywords_per_user'):
            if getattr(self, name) <= 0:
                raise ConfigError('generator {} must be positive'.format(name))
        for name in ('up_events', 'kp_events', 'ukp_events'):
            if getattr(self, name) < 0:
                raise ConfigError('generator {} must not be negative'.format(name))
        if self.topics > self.vocabulary:
            raise ConfigError('more topics ({}) than vocabulary words ({})'
                              .format(self.topics, self.vocabulary))
        if self.topics > self.papers:
            raise ConfigError('more topics ({}) than papers ({})'.format(self.topics, self.papers))
        if len(self.scenario_mix) != 3 or min(self.scenario_mix) < 0 \
                or abs(sum(self.scenario_mix) - 1.0) > 1e-9:
            raise ConfigError('scenario mix must be three proportions summing to 1')
        if not self.start < self.graph_window_end < self.end:
            raise ConfigError('need start < graph-window-end < end')
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError('noise rate must be within [0, 1]')
        if self.sharpness < 0:
            raise ConfigError('sharpness must not be negative')
        if self.year_range[0] > self.year_range[1]:
            raise ConfigError('year range is empty')
        return self


@dataclasses.dataclass(frozen=True, eq=False)
class LatentTopics:
    """
    The planted topic structure of a generated dataset. Kept in memory only;
    files written by :func:`write_generated` never contain it.
    """
    paper_topic: np.ndarray
    word_topic: dict
    mixture: np.ndarray  # users x topics

    def top_topic(self, user):
        return int(np.argmax(self.mixture[user]))

    def affinities(self):
        """users x topics: squared mixture weight relative to the user's strongest topic."""
        return (self.mixture / self.mixture.max(axis=1, keepdims=True)) ** 2

    def relevance(self, keyword, paper):
        return float(self.word_topic.get(keyword) == self.paper_topic[paper])


@dataclasses.dataclass
class GeneratedDataset:
    config: GenConfig
    log: InteractionLog
    features: PaperFeatures
    titles: dict
    user_keywords: list  # (user, keyword, ts)
    scenarios: dict  # record id -> Scenario
    latent: LatentTopics = None


def _make_vocabulary(rng, size):
    stopwords = load_stopwords()
    words, seen = [], set()
    while len(words) < size:
        n = int(rng.integers(2, 5))
        word = ''.join(_SYLLABLES[i] for i in rng.integers(0, len(_SYLLABLES), size=n))
        if word in seen or word in stopwords:
            continue
        seen.add(word)
        words.append(word)
    return words


def _make_title(rng, topic_words, all_words, zipf):
    n = int(rng.integers(4, 9))
    picks = []
    for _ in range(n):
        if rng.random() < 0.05:
            picks.append(all_words[int(rng.integers(len(all_words)))])
        else:
            picks.append(topic_words[int(rng.choice(len(topic_words), p=zipf))])
    parts = []
    if rng.random() < 0.2:
        parts.append('Towards' if rng.random() < 0.5 else 'On')
    for i, word in enumerate(picks):
        parts.append(word.capitalize() if rng.random() < 0.7 else word)
        if i < len(picks) - 1 and rng.random() < 0.3:
            parts.append(_FILLERS[int(rng.integers(len(_FILLERS)))])
    return ' '.join(parts)


def generate_dataset(cfg):
    """Generate logs, paper features, titles, user keywords and the scenario sidecar."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    K = cfg.topics

    words = _make_vocabulary(rng, cfg.vocabulary)
    word_topic = {w: i % K for i, w in enumerate(words)}
    topic_words = [[w for w in words if word_topic[w] == t] for t in range(K)]

    paper_topic = rng.permutation(np.arange(cfg.papers) % K)
    titles = {}
    used = [set() for _ in range(K)]
    for p in range(cfg.papers):
        tw = topic_words[paper_topic[p]]
        zipf = 1.0 / np.arange(1, len(tw) + 1) ** 0.7
        titles[p] = _make_title(rng, tw, words, zipf / zipf.sum())
        for token in tokenize_title(titles[p]):
            if token in word_topic:
                used[word_topic[token]].add(token)
    used = [sorted(u) for u in used]
    all_used = sorted(set().union(*used))
    papers_by_topic = [np.flatnonzero(paper_topic == t) for t in range(K)]

    citations = np.floor(rng.lognormal(mean=2.0, sigma=1.2, size=cfg.papers)).astype(np.int64)
    years = rng.integers(cfg.year_range[0], cfg.year_range[1] + 1, size=cfg.papers)
    features = PaperFeatures(citations, years.astype(np.int64))

    mixture = rng.dirichlet(np.full(K, TOPIC_CONCENTRATION), size=cfg.users)
    latent = LatentTopics(paper_topic, word_topic, mixture)
    affinity = latent.affinities()
    ranked = np.argsort(-mixture, axis=1, kind='stable')

    def click(score):
        prob = special.expit(cfg.sharpness * (score - 0.5))
        label = int(rng.random() < prob)
        if rng.random() < cfg.noise:
            label = 1 - label
        return label

    def pick_word(topic):
        pool = used[topic] or all_used
        return pool[int(rng.integers(len(pool)))]

    def pick_paper(topic):
        pool = papers_by_topic[topic]
        return int(pool[int(rng.integers(len(pool)))])

    def timestamp():
        return int(rng.integers(cfg.start, cfg.end))

    # profile keywords are set during the graph window; the first one names
    # the user's strongest topic
    user_keywords, profile = [], {}
    for u in range(cfg.users):
        chosen = [pick_word(int(ranked[u, 0]))]
        for _ in range(int(rng.integers(1, cfg.keywords_per_user + 1)) - 1):
            kw = pick_word(int(rng.choice(K, p=mixture[u])))
            if kw not in chosen:
                chosen.append(kw)
        profile[u] = chosen[0]
        user_keywords.extend((u, kw, int(rng.integers(cfg.start, cfg.graph_window_end + 1))) for kw in chosen)

    events = []
    for _ in range(cfg.up_events):
        u = int(rng.integers(cfg.users))
        topic = int(rng.choice(K, p=mixture[u])) if rng.random() < 0.5 else int(rng.integers(K))
        p = pick_paper(topic)
        events.append((timestamp(), Channel.UP, u, None, p, click(affinity[u, paper_topic[p]]), None))

    for _ in range(cfg.kp_events):
        kw = all_used[int(rng.integers(len(all_used)))]
        p = pick_paper(word_topic[kw]) if rng.random() < 0.5 else int(rng.integers(cfg.papers))
        rel = float(word_topic[kw] == paper_topic[p])
        events.append((timestamp(), Channel.KP, None, kw, p, click(rel), None))

    scenario_names = [s.value for s in Scenario]
    for _ in range(cfg.ukp_events):
        u = int(rng.integers(cfg.users))
        scenario = scenario_names[int(rng.choice(3, p=cfg.scenario_mix))]
        kw = None
        if scenario == 'S1':
            k_topic = int(ranked[u, 0])
            if rng.random() < OWN_KEYWORD_SHARE:
                kw = profile[u]
        elif scenario == 'S2':
            k_topic = int(ranked[u, 1]) if K > 1 else int(ranked[u, 0])
        else:
            tail = ranked[u, K // 2:] if K > 1 else ranked[u]
            k_topic = int(tail[int(rng.integers(len(tail)))])
        if kw is None:
            kw = pick_word(k_topic)

        draw = rng.random()
        if draw < 1 / 3:
            p = pick_paper(k_topic)
        elif draw < 2 / 3:
            p = pick_paper(int(rng.choice(K, p=mixture[u])))
        else:
            p = int(rng.integers(cfg.papers))

        weight = SCENARIO_USER_WEIGHT[scenario]
        rel = float(k_topic == paper_topic[p])
        score = weight * affinity[u, paper_topic[p]] + (1.0 - weight) * rel
        events.append((timestamp(), Channel.UKP, u, kw, p, click(score), Scenario(scenario)))

    order = sorted(range(len(events)), key=lambda i: (events[i][0], i))
    records, scenarios = [], {}
    for rid, i in enumerate(order):
        ts, channel, u, kw, p, label, scenario = events[i]
        records.append(Interaction(rid, channel, u, kw, p, ts, label))
        if scenario is not None:
            scenarios[rid] = scenario

    log = InteractionLog(records)
    LOG.info('Generated %d interactions (%s), %d papers, %d users',
             len(log), log.counts(), cfg.papers, cfg.users)
    return GeneratedDataset(cfg, log, features, titles, sorted(user_keywords, key=lambda r: (r[2], r[0], r[1])),
                            scenarios, latent)


def temporal_split(log, graph_window_end, split_fraction, seed):
    """
    Split at the graph-window boundary.

    Every record at or before ``graph_window_end`` belongs to the graph and
    behavior window. uk-p records after it are shuffled with ``seed`` and split
    ``split_fraction`` / ``1 - split_fraction`` into train and test.
    """
    if not 0.0 < split_fraction < 1.0:
        raise ContractError('split fraction must be within (0, 1)')
    window = [r for r in log if r.ts <= graph_window_end]
    after = [r for r in log if r.ts > graph_window_end and r.channel is Channel.UKP]
    if not after:
        raise SplitError('no uk-p records after the graph window ends at {}'.format(graph_window_end))

    rng = np.random.default_rng(seed)
    shuffled = [after[i] for i in rng.permutation(len(after))]
    n_train = int(np.floor(len(shuffled) * split_fraction + 1e-9))
    train, test = shuffled[:n_train], shuffled[n_train:]

    leaked = leakage(window, test)
    if leaked:
        raise SplitError('{} test tuples also appear in the graph window'.format(len(leaked)))

    LOG.info('Split: %d graph-window records, %d train, %d test', len(window), len(train), len(test))
    return InteractionLog(window), train, test


def leakage(window, test):
    """(user, keyword, paper, ts) tuples shared by two record sets."""
    key = lambda r: (r.user, r.keyword, r.paper, r.ts)
    return set(map(key, window)) & set(map(key, test))


class Behaviors:
    """Recency-ordered (most recent first) behavior sequences H_u and H_k."""

    def __init__(self, by_user, by_keyword):
        self.by_user = by_user
        self.by_keyword = by_keyword

    def user(self, u):
        return self.by_user.get(u, ())

    def keyword(self, k):
        return self.by_keyword.get(k, ())


def _recency_order(items):
    # items: (ts, record, paper); newest first, each paper once
    seq, seen = [], set()
    for ts, _, paper in sorted(items, key=lambda x: (-x[0], -x[1])):
        if paper not in seen:
            seen.add(paper)
            seq.append(BehaviorItem(paper, ts))
    return tuple(seq)


def build_behaviors(log):
    """
    H_u: positive u-p and uk-p papers of each user. H_k: positive papers of
    every uk-p or k-p record whose input keyword was k. Both newest first.
    """
    users, keywords = {}, {}
    for r in log:
        if r.label != 1:
            continue
        if r.user is not None and r.channel in (Channel.UP, Channel.UKP):
            users.setdefault(r.user, []).append((r.ts, r.record, r.paper))
        if r.keyword is not None and r.channel in (Channel.UKP, Channel.KP):
            keywords.setdefault(r.keyword, []).append((r.ts, r.record, r.paper))
    return Behaviors({u: _recency_order(v) for u, v in users.items()},
                     {k: _recency_order(v) for k, v in keywords.items()})


# files

def write_generated(data, directory):
    """Write the generated dataset as JSON Lines files into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    write_jsonl(os.path.join(directory, 'interactions.jsonl'), (
        {'record': r.record, 'channel': r.channel.value, 'user': r.user, 'keyword': r.keyword,
         'paper': r.paper, 'ts': r.ts, 'label': r.label}
        for r in data.log))
    write_jsonl(os.path.join(directory, 'titles.jsonl'), (
        {'paper': p, 'title': data.titles[p]} for p in sorted(data.titles)))
    write_jsonl(os.path.join(directory, 'features.jsonl'), (
        {'paper': p, 'citations': int(c), 'year': int(y)}
        for p, (c, y) in enumerate(zip(data.features.citations, data.features.years))))
    write_jsonl(os.path.join(directory, 'user_keywords.jsonl'), (
        {'type': 'uk', 'user': u, 'paper': None, 'keyword': k, 'ts': ts}
        for u, k, ts in data.user_keywords))
    write_jsonl(os.path.join(directory, 'scenarios.jsonl'), (
        {'record': rid, 'scenario': s.value} for rid, s in sorted(data.scenarios.items())))
    with open(os.path.join(directory, 'generator.json'), 'w', encoding='utf-8') as f:
        json.dump(dataclasses.asdict(data.config), f, sort_keys=True, indent=1)
    return [os.path.join(directory, name) for name in GENERATED_FILES]


GENERATED_FILES = ('interactions.jsonl', 'titles.jsonl', 'features.jsonl', 'user_keywords.jsonl',
                   'scenarios.jsonl', 'generator.json')


def read_generated(directory):
    path = lambda name: os.path.join(directory, name)
    with open(path('generator.json'), 'r', encoding='utf-8') as f:
        raw = json.load(f)
    raw['scenario_mix'] = tuple(raw['scenario_mix'])
    raw['year_range'] = tuple(raw['year_range'])
    cfg = GenConfig(**raw)

    records = []
    for r in read_jsonl(path('interactions.jsonl')):
        try:
            records.append(Interaction(int(r['record']), Channel(r['channel']), r['user'],
                                       r['keyword'], int(r['paper']), int(r['ts']), int(r['label'])))
        except (KeyError, TypeError, ValueError) as e:
            raise IngestionError(r, 'malformed interaction ({})'.format(e))

    titles = {int(r['paper']): r['title'] for r in read_jsonl(path('titles.jsonl'))}
    feats = sorted((int(r['paper']), int(r['citations']), int(r['year']))
                   for r in read_jsonl(path('features.jsonl')))
    features = PaperFeatures(np.array([f[1] for f in feats], dtype=np.int64),
                             np.array([f[2] for f in feats], dtype=np.int64))
    user_keywords = [(int(r['user']), r['keyword'], int(r['ts']))
                     for r in read_jsonl(path('user_keywords.jsonl'))]
    scenarios = {int(r['record']): Scenario(r['scenario']) for r in read_jsonl(path('scenarios.jsonl'))}
    return GeneratedDataset(cfg, InteractionLog(records), features, titles, user_keywords, scenarios)
