import numpy as np
import pytest

from keyword_ctr import HeadKind, Variant
from keyword_ctr.datagen import (BehaviorItem, Behaviors, Channel, GenConfig, Interaction, InteractionLog,
                                 PaperFeatures, build_behaviors, generate_dataset)
from keyword_ctr.dataset import Example, prepare_dataset
from keyword_ctr.graph import build_graph
from keyword_ctr.model import ModelConfig

TINY_GENERATOR = GenConfig(
    users=40,
    papers=120,
    vocabulary=60,
    topics=4,
    up_events=600,
    kp_events=200,
    ukp_events=400,
    keywords_per_user=2,
    seed=7,
)

TINY_TOML = """
[generator]
users = 40
papers = 120
vocabulary = 60
topics = 4
up-events = 600
kp-events = 200
ukp-events = 400
keywords-per-user = 2
seed = 7

[model]
dim = 4
layers = 1
behavior-length = 4
head = 'mlp'
hidden = [4]
attention-hidden = 3

[train]
learning-rate = 0.01
batch-size = 32
epochs = 2
seed = 3

[eval]
batch-size = 16
bench-candidates = 8
bench-requests = 100
"""


@pytest.fixture(scope='session')
def tiny_generated():
    return generate_dataset(TINY_GENERATOR)


@pytest.fixture(scope='session')
def tiny_dataset(tiny_generated):
    return prepare_dataset(tiny_generated, split_fraction=0.8, seed=11)


@pytest.fixture(scope='session')
def default_generated():
    return generate_dataset(GenConfig())


@pytest.fixture(scope='session')
def default_dataset(default_generated):
    return prepare_dataset(default_generated, split_fraction=0.8, seed=42)


@pytest.fixture
def tiny_model_config():
    return ModelConfig(dim=4, layers=1, behavior_length=4, learning_rate=0.01, batch_size=16,
                       epochs=2, seed=5, head=HeadKind.MLP, variant=Variant.GF, hidden=(4,),
                       attention_hidden=3)


@pytest.fixture
def tiny_toml(tmp_path):
    path = tmp_path / 'tiny.toml'
    path.write_text(TINY_TOML)
    return str(path)


class HandDataset:
    """Two users, two keywords, three papers, built by hand."""

    def __init__(self):
        titles = {0: 'Graph Learning', 1: 'Graph Search', 2: 'Citation Search'}
        self.graph = build_graph([(0, 0), (0, 1), (1, 2)], [(0, 'graph'), (1, 'search')], titles, users=2)
        log = InteractionLog([
            Interaction(0, Channel.UP, 0, None, 0, 10, 1),
            Interaction(1, Channel.UKP, 0, 'graph', 1, 20, 1),
            Interaction(2, Channel.KP, None, 'search', 2, 30, 1),
            Interaction(3, Channel.UP, 1, None, 2, 40, 1),
        ])
        self.behaviors = build_behaviors(log)
        self.features = PaperFeatures(np.array([0, 10, 100]), np.array([2000, 2010, 2020]))
        self.train = [Example(10, 0, 'graph', 2, 1, 50), Example(11, 1, 'search', 0, 0, 60)]
        self.test = [Example(12, 1, 'graph', 1, 1, 70), Example(13, 0, 'search', 2, 0, 80)]
        self.scenarios = {}


@pytest.fixture
def hand_dataset():
    return HandDataset()


@pytest.fixture
def empty_behaviors():
    return Behaviors({}, {})
