"""
keyword_ctr settings module.

The packaged data/settings.toml is the frozen default run configuration.
Machine-wide overrides go in ~/.config/kctr/settings.toml, per-experiment
ones in ./kctr.toml or a file given with -c/--config.
"""
import dataclasses
import hashlib
import json
import os.path

import pytoml as toml

from keyword_ctr import ConfigError, _read_package_data


def _conf_get(conf, *args, default=None):
    try:
        cur = conf
        for arg in args:
            cur = cur[arg]
        return cur
    except KeyError:
        return default


class Settings:
    def __init__(self):
        self.loads(_read_package_data('settings.toml'))

        self._try_load(os.path.expanduser('~/.config/kctr/settings.toml'))
        self._try_load('kctr.toml')

    def _try_load(self, fname):
        try:
            self.load(fname)
        except FileNotFoundError:
            pass

    def load(self, fname):
        with open(fname, 'r') as f:
            raw = f.read()
        self.loads(raw)

    def loads(self, raw):
        try:
            conf = toml.loads(raw)
        except toml.TomlError as e:
            raise ConfigError('cannot parse settings: {}'.format(e))

        # generator
        self.USERS = _conf_get(conf, 'generator', 'users', default=self.USERS)
        self.PAPERS = _conf_get(conf, 'generator', 'papers', default=self.PAPERS)
        self.VOCABULARY = _conf_get(conf, 'generator', 'vocabulary', default=self.VOCABULARY)
        self.TOPICS = _conf_get(conf, 'generator', 'topics', default=self.TOPICS)
        self.UP_EVENTS = _conf_get(conf, 'generator', 'up-events', default=self.UP_EVENTS)
        self.KP_EVENTS = _conf_get(conf, 'generator', 'kp-events', default=self.KP_EVENTS)
        self.UKP_EVENTS = _conf_get(conf, 'generator', 'ukp-events', default=self.UKP_EVENTS)
        self.KEYWORDS_PER_USER = _conf_get(conf, 'generator', 'keywords-per-user',
                                           default=self.KEYWORDS_PER_USER)
        self.SCENARIO_MIX = _conf_get(conf, 'generator', 'scenario-mix', default=self.SCENARIO_MIX)
        self.START = _conf_get(conf, 'generator', 'start', default=self.START)
        self.GRAPH_WINDOW_END = _conf_get(conf, 'generator', 'graph-window-end',
                                          default=self.GRAPH_WINDOW_END)
        self.END = _conf_get(conf, 'generator', 'end', default=self.END)
        self.NOISE = _conf_get(conf, 'generator', 'noise', default=self.NOISE)
        self.SHARPNESS = _conf_get(conf, 'generator', 'sharpness', default=self.SHARPNESS)
        self.YEAR_RANGE = _conf_get(conf, 'generator', 'year-range', default=self.YEAR_RANGE)
        self.GENERATOR_SEED = _conf_get(conf, 'generator', 'seed', default=self.GENERATOR_SEED)

        self.SPLIT_FRACTION = _conf_get(conf, 'split', 'fraction', default=self.SPLIT_FRACTION)

        # model
        self.DIM = _conf_get(conf, 'model', 'dim', default=self.DIM)
        self.LAYERS = _conf_get(conf, 'model', 'layers', default=self.LAYERS)
        self.BEHAVIOR_LENGTH = _conf_get(conf, 'model', 'behavior-length', default=self.BEHAVIOR_LENGTH)
        self.HEAD = _conf_get(conf, 'model', 'head', default=self.HEAD)
        self.HIDDEN = _conf_get(conf, 'model', 'hidden', default=self.HIDDEN)
        self.ATTENTION_HIDDEN = _conf_get(conf, 'model', 'attention-hidden', default=self.ATTENTION_HIDDEN)
        self.VARIANT = _conf_get(conf, 'model', 'variant', default=self.VARIANT)
        self.NEIGHBOR_CAP = _conf_get(conf, 'model', 'neighbor-cap', default=self.NEIGHBOR_CAP)

        # train
        self.LEARNING_RATE = _conf_get(conf, 'train', 'learning-rate', default=self.LEARNING_RATE)
        self.BATCH_SIZE = _conf_get(conf, 'train', 'batch-size', default=self.BATCH_SIZE)
        self.EPOCHS = _conf_get(conf, 'train', 'epochs', default=self.EPOCHS)
        self.SEED = _conf_get(conf, 'train', 'seed', default=self.SEED)

        # eval
        self.EVAL_BATCH_SIZE = _conf_get(conf, 'eval', 'batch-size', default=self.EVAL_BATCH_SIZE)
        self.EVAL_WORKERS = _conf_get(conf, 'eval', 'workers', default=self.EVAL_WORKERS)
        self.BENCH_CANDIDATES = _conf_get(conf, 'eval', 'bench-candidates', default=self.BENCH_CANDIDATES)
        self.BENCH_REQUESTS = _conf_get(conf, 'eval', 'bench-requests', default=self.BENCH_REQUESTS)
        self.BENCH_CONCURRENCY = _conf_get(conf, 'eval', 'bench-concurrency',
                                           default=self.BENCH_CONCURRENCY)

    def generator_config(self, seed=None):
        from keyword_ctr.datagen import GenConfig
        try:
            cfg = GenConfig(
                users=int(self.USERS),
                papers=int(self.PAPERS),
                vocabulary=int(self.VOCABULARY),
                topics=int(self.TOPICS),
                up_events=int(self.UP_EVENTS),
                kp_events=int(self.KP_EVENTS),
                ukp_events=int(self.UKP_EVENTS),
                keywords_per_user=int(self.KEYWORDS_PER_USER),
                scenario_mix=tuple(float(x) for x in self.SCENARIO_MIX),
                start=int(self.START),
                graph_window_end=int(self.GRAPH_WINDOW_END),
                end=int(self.END),
                noise=float(self.NOISE),
                sharpness=float(self.SHARPNESS),
                year_range=tuple(int(x) for x in self.YEAR_RANGE),
                seed=int(self.GENERATOR_SEED if seed is None else seed),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError('invalid [generator] settings: {}'.format(e))
        return cfg.validate()

    def model_config(self, variant=None, head=None, seed=None):
        from keyword_ctr import HeadKind, parse_variant
        from keyword_ctr.model import ModelConfig
        try:
            cfg = ModelConfig(
                dim=int(self.DIM),
                layers=int(self.LAYERS),
                behavior_length=int(self.BEHAVIOR_LENGTH),
                learning_rate=float(self.LEARNING_RATE),
                batch_size=int(self.BATCH_SIZE),
                epochs=int(self.EPOCHS),
                seed=int(self.SEED if seed is None else seed),
                head=HeadKind.parse(self.HEAD if head is None else head),
                variant=parse_variant(self.VARIANT if variant is None else variant),
                hidden=tuple(int(h) for h in self.HIDDEN),
                attention_hidden=int(self.ATTENTION_HIDDEN),
                neighbor_cap=int(self.NEIGHBOR_CAP),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError('invalid [model]/[train] settings: {}'.format(e))
        return cfg.validate()

    USERS = 1000
    PAPERS = 5000
    VOCABULARY = 400
    TOPICS = 10
    UP_EVENTS = 20000
    KP_EVENTS = 8000
    UKP_EVENTS = 10000
    KEYWORDS_PER_USER = 3
    SCENARIO_MIX = [0.5, 0.3, 0.2]
    START = 1643673600
    GRAPH_WINDOW_END = 1648771200
    END = 1651363200
    NOISE = 0.02
    SHARPNESS = 15.0
    YEAR_RANGE = [1990, 2022]
    GENERATOR_SEED = 42

    SPLIT_FRACTION = 0.8

    DIM = 64
    LAYERS = 2
    BEHAVIOR_LENGTH = 100
    HEAD = 'attn'
    HIDDEN = [64, 32]
    ATTENTION_HIDDEN = 32
    VARIANT = 'g&f'
    NEIGHBOR_CAP = 0

    LEARNING_RATE = 0.001
    BATCH_SIZE = 64
    EPOCHS = 12
    SEED = 42

    EVAL_BATCH_SIZE = 512
    EVAL_WORKERS = 1
    BENCH_CANDIDATES = 100
    BENCH_REQUESTS = 200
    BENCH_CONCURRENCY = 1


def config_digest(cfg):
    """sha256 of the canonical JSON of a GenConfig / ModelConfig (or a plain dict)."""
    if hasattr(cfg, 'to_dict'):
        raw = cfg.to_dict()
    elif isinstance(cfg, dict):
        raw = cfg
    else:
        raw = dataclasses.asdict(cfg)
    blob = json.dumps(raw, sort_keys=True, separators=(',', ':'), default=list)
    return hashlib.sha256(blob.encode('utf-8')).hexdigest()


settings = Settings()
