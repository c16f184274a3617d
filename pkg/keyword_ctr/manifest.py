"""
Run manifests: what a command read, what it wrote, and with which settings.
"""
import dataclasses
import datetime
import hashlib
import json
import logging
import os
import tempfile

from keyword_ctr import __version__

LOG = logging.getLogger(__name__)


def file_digest(path):
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            h.update(chunk)
    return h.hexdigest()


def input_digests(paths):
    """sha256 of every input file; directories are expanded to their files."""
    digests = {}
    for path in paths:
        if os.path.isdir(path):
            for name in sorted(os.listdir(path)):
                full = os.path.join(path, name)
                if os.path.isfile(full) and not name.endswith('manifest.json'):
                    digests[full] = file_digest(full)
        else:
            digests[path] = file_digest(path)
    return digests


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec='seconds')


@dataclasses.dataclass
class RunManifest:
    command: str
    config_digest: str
    seed: int
    inputs: dict = dataclasses.field(default_factory=dict)
    outputs: list = dataclasses.field(default_factory=list)
    started: str = dataclasses.field(default_factory=_now)
    finished: str = None
    version: str = __version__

    def finish(self, outputs):
        self.outputs = sorted(str(p) for p in outputs)
        self.finished = _now()
        return self

    def to_dict(self):
        return dataclasses.asdict(self)


def manifest_path(out):
    if os.path.isdir(out):
        return os.path.join(out, 'manifest.json')
    return '{}.manifest.json'.format(out)


def write_manifest(manifest, out):
    """Write ``manifest`` next to ``out``, replacing any earlier one atomically."""
    path = manifest_path(out)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix='.manifest-', suffix='.tmp', dir=directory)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8') as f:
            json.dump(manifest.to_dict(), f, sort_keys=True, indent=2)
            f.write('\n')
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise
    LOG.debug('Wrote manifest %s', path)
    return path


def read_manifest(path):
    with open(path, 'r', encoding='utf-8') as f:
        return RunManifest(**json.load(f))
