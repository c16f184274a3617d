"""
From generated logs to model-ready data: split, graph, behaviors, examples.
"""
import dataclasses
import json
import logging
import os
from collections import namedtuple

from keyword_ctr import IngestionError
from keyword_ctr.datagen import Channel, InteractionLog, build_behaviors, read_generated, temporal_split
from keyword_ctr.graph import (EdgeType, build_graph, graph_statistics, load_graph, read_events, read_jsonl,
                               save_graph, write_jsonl)

LOG = logging.getLogger(__name__)

Example = namedtuple('Example', 'record user keyword paper label ts')


@dataclasses.dataclass
class Dataset:
    graph: object
    behaviors: object
    features: object
    train: list
    test: list
    scenarios: dict
    graph_window_end: int
    split_fraction: float
    seed: int
    window_counts: dict
    events: list = dataclasses.field(default_factory=list)

    def statistics(self):
        stats = graph_statistics(self.graph)
        for channel, n in sorted(self.window_counts.items()):
            stats['window_{}'.format(channel)] = n
        stats['train_uk-p'] = len(self.train)
        stats['test_uk-p'] = len(self.test)
        return stats


def graph_events(window, user_keywords, graph_window_end):
    """
    Graph-input events of the window: every positive click or search of a
    known user as ``up`` and every user-added keyword as ``uk``.
    """
    events = [
        {'type': 'up', 'user': r.user, 'paper': r.paper, 'keyword': None, 'ts': r.ts}
        for r in window
        if r.label == 1 and r.user is not None and r.channel in (Channel.UP, Channel.UKP)
    ]
    events.extend(
        {'type': 'uk', 'user': u, 'paper': None, 'keyword': k, 'ts': ts}
        for u, k, ts in user_keywords if ts <= graph_window_end)
    events.sort(key=lambda e: (e['ts'], e['type'], e['user'], e['paper'] or 0, e['keyword'] or ''))
    return events


def _examples(records, graph):
    examples, dropped = [], 0
    for r in records:
        if graph.keyword_index(r.keyword) is None:
            dropped += 1
            continue
        examples.append(Example(r.record, r.user, r.keyword, r.paper, r.label, r.ts))
    if dropped:
        LOG.warning('Dropped %d examples whose keyword is not in the graph vocabulary', dropped)
    return examples


def prepare_dataset(generated, graph_window_end=None, split_fraction=0.8, seed=42):
    if graph_window_end is None:
        graph_window_end = generated.config.graph_window_end
    window, train, test = temporal_split(generated.log, graph_window_end, split_fraction, seed)

    events = graph_events(window, generated.user_keywords, graph_window_end)
    graph = build_graph(
        [(e['user'], e['paper']) for e in events if e['type'] == 'up'],
        [(e['user'], e['keyword']) for e in events if e['type'] == 'uk'],
        generated.titles, users=generated.config.users)

    return Dataset(
        graph=graph,
        behaviors=build_behaviors(window),
        features=generated.features,
        train=_examples(train, graph),
        test=_examples(test, graph),
        scenarios=generated.scenarios,
        graph_window_end=graph_window_end,
        split_fraction=split_fraction,
        seed=seed,
        window_counts=window.counts(),
        events=events,
    )


PREPARED_FILES = ('graph.json', 'events.jsonl', 'split.json')


def write_prepared(dataset, directory):
    os.makedirs(directory, exist_ok=True)
    save_graph(dataset.graph, os.path.join(directory, 'graph.json'))
    write_jsonl(os.path.join(directory, 'events.jsonl'), dataset.events)
    split = {
        'graph_window_end': dataset.graph_window_end,
        'split_fraction': dataset.split_fraction,
        'seed': dataset.seed,
        'train': [e.record for e in dataset.train],
        'test': [e.record for e in dataset.test],
    }
    with open(os.path.join(directory, 'split.json'), 'w', encoding='utf-8') as f:
        json.dump(split, f, sort_keys=True, separators=(',', ':'))
    return [os.path.join(directory, name) for name in PREPARED_FILES]


def check_graph(graph, rebuilt, path):
    """Raise unless ``graph`` has the nodes and edges of the graph rebuilt from its events."""
    if graph.counts != rebuilt.counts or graph.keywords != rebuilt.keywords:
        raise IngestionError(path, 'node sets differ from the graph rebuilt from events.jsonl')
    for edge_type in EdgeType:
        if graph.edges(edge_type) != rebuilt.edges(edge_type):
            raise IngestionError(path, '{} edges differ from the graph rebuilt from events.jsonl'.format(
                edge_type.value))


def read_prepared(directory):
    """Load a dataset written by :func:`write_prepared` next to its generated files."""
    generated = read_generated(directory)
    with open(os.path.join(directory, 'split.json'), 'r', encoding='utf-8') as f:
        split = json.load(f)
    graph = load_graph(os.path.join(directory, 'graph.json'))
    events_path = os.path.join(directory, 'events.jsonl')
    user_paper, user_keyword = read_events(events_path)
    rebuilt = build_graph(user_paper, user_keyword, generated.titles, users=generated.config.users)
    check_graph(graph, rebuilt, os.path.join(directory, 'graph.json'))

    boundary = split['graph_window_end']
    window = InteractionLog([r for r in generated.log if r.ts <= boundary])
    by_id = {r.record: r for r in generated.log}
    try:
        train = [by_id[i] for i in split['train']]
        test = [by_id[i] for i in split['test']]
    except KeyError as e:
        raise IngestionError(os.path.join(directory, 'split.json'), 'unknown record {}'.format(e))

    events = list(read_jsonl(events_path))
    return Dataset(
        graph=graph,
        behaviors=build_behaviors(window),
        features=generated.features,
        train=_examples(train, graph),
        test=_examples(test, graph),
        scenarios=generated.scenarios,
        graph_window_end=boundary,
        split_fraction=split['split_fraction'],
        seed=split['seed'],
        window_counts=window.counts(),
        events=events,
    )
