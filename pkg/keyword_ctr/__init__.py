import os
import enum
import logging.config
from functools import wraps
from importlib import resources

import pytoml as toml
import click


__version__ = '0.1.0'

def _read_package_data(name):
    return resources.files(__name__).joinpath('data', name).read_text(encoding='utf-8')

def _setup_logging():
    try:
        with open('logging.toml') as f:
            raw = f.read()
    except FileNotFoundError:
        try:
            with open(os.path.expanduser('~/.config/kctr/logging.toml')) as f:
                raw = f.read()
        except FileNotFoundError:
            raw = _read_package_data('logging.toml')

    conf = toml.loads(raw)
    logging.config.dictConfig(conf)
_setup_logging()


class KeywordCtrError(Exception):
    """Base class for every error the pipeline raises on purpose."""


class ContractError(KeywordCtrError, ValueError):
    """A caller broke an operation's precondition."""


class NumericalError(KeywordCtrError, ArithmeticError):
    def __init__(self, operation, message):
        super().__init__('{}: {}'.format(operation, message))
        self.operation = operation


class DivergenceError(NumericalError):
    pass


class IngestionError(KeywordCtrError):
    def __init__(self, record, message):
        super().__init__('{} (record: {})'.format(message, record))
        self.record = record


class ConfigError(KeywordCtrError):
    pass


class SplitError(KeywordCtrError):
    pass


class UndefinedMetricError(KeywordCtrError):
    pass


@enum.unique
class Variant(enum.Enum):
    BASE = 'base'
    F = 'f'
    G = 'g'
    GF = 'g&f'

    @property
    def uses_graph(self):
        return self in (Variant.G, Variant.GF)

    @property
    def uses_fusion(self):
        return self in (Variant.F, Variant.GF)


@enum.unique
class HeadKind(enum.Enum):
    MLP = 'mlp'
    ATTN = 'attn'
    GRU = 'gru'

    @classmethod
    def parse(cls, value):
        aliases = {'attention-seq': 'attn', 'gru-seq': 'gru'}
        value = aliases.get(value, value)
        try:
            return cls(value)
        except ValueError:
            raise ConfigError('unknown head kind {!r}'.format(value))


def parse_variant(value):
    if isinstance(value, Variant):
        return value
    try:
        return Variant(value)
    except ValueError:
        raise ConfigError('unknown variant {!r}'.format(value))


from .settings import settings


def _update_settings(ctx, param, value):
    for p in value:
        try:
            settings.load(p)
        except ConfigError as e:
            raise click.BadParameter(str(e), ctx=ctx, param=param)


def command(name=None):
    """
    Wrap an entrypoint as a click command sharing the ``--config`` option.

    Library errors surface as a single ``Error: <kind>: <message>`` line and
    exit status 1; click keeps exit status 2 for usage errors.
    """
    def decorator(f):
        @wraps(f)
        def guarded(*args, **kwargs):
            try:
                return f(*args, **kwargs)
            except (KeywordCtrError, OSError) as e:
                raise click.ClickException('{}: {}'.format(type(e).__name__, e))

        return click.command(name)(
        click.option('-c', '--config', help='additional configuration file', multiple=True,
                     is_eager=True, expose_value=False, callback=_update_settings,
                     type=click.Path(exists=True, dir_okay=False))(
        guarded))

    return decorator
