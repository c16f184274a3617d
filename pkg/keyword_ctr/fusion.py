"""
Query attentive fusion: the distance correlation between a user and a keyword
embedding decides how much each query contributes to the fused query vector
and to the fused behavior sequence.
"""
import dataclasses
import logging
import math

import numpy as np

from keyword_ctr import ContractError

LOG = logging.getLogger(__name__)

PAD = -1
# distance variances below this count as a constant vector
DEGENERATE_VARIANCE = 1e-12


@dataclasses.dataclass(frozen=True)
class FusionWeight:
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, 'gamma', min(1.0, max(0.0, float(self.gamma))))

    def __float__(self):
        return self.gamma


@dataclasses.dataclass(frozen=True)
class FusedBehavior:
    slots: tuple
    mask: tuple
    from_user: int
    from_keyword: int
    padded: int

    def __len__(self):
        return len(self.slots)


def _centered_distances(x):
    # x: (..., d) -> double-centered |x_i - x_j|, shape (..., d, d)
    a = np.abs(x[..., :, None] - x[..., None, :])
    return (a - a.mean(axis=-1, keepdims=True) - a.mean(axis=-2, keepdims=True)
            + a.mean(axis=(-2, -1), keepdims=True))


def distance_correlation_batch(x, y):
    """
    Row-wise distance correlation of two (n, d) arrays, treating the d
    coordinates of each row as paired scalar samples.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.shape[-1] < 2:
        raise ContractError('distance correlation needs equal shapes with d >= 2, got {} and {}'
                            .format(x.shape, y.shape))
    A = _centered_distances(x)
    B = _centered_distances(y)
    dcov2_xy = np.maximum((A * B).mean(axis=(-2, -1)), 0.0)
    dcov2_xx = (A * A).mean(axis=(-2, -1))
    dcov2_yy = (B * B).mean(axis=(-2, -1))
    degenerate = (dcov2_xx < DEGENERATE_VARIANCE) | (dcov2_yy < DEGENERATE_VARIANCE)
    denom = np.sqrt(np.sqrt(np.where(degenerate, 1.0, dcov2_xx * dcov2_yy)))
    gamma = np.where(degenerate, 0.0, np.sqrt(dcov2_xy) / denom)
    return np.clip(gamma, 0.0, 1.0)


def distance_correlation(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1:
        raise ContractError('distance_correlation takes two vectors')
    return FusionWeight(float(distance_correlation_batch(x[None, :], y[None, :])[0]))


def fuse_query(e_u, e_k, gamma):
    """e*_q = gamma * e*_u + (1 - gamma) * e*_k."""
    e_u = np.asarray(e_u, dtype=np.float64)
    e_k = np.asarray(e_k, dtype=np.float64)
    if e_u.shape != e_k.shape:
        raise ContractError('query vectors differ in shape: {} vs {}'.format(e_u.shape, e_k.shape))
    g = float(gamma)
    return g * e_u + (1.0 - g) * e_k


def user_quota(gamma, length):
    # the epsilon keeps products like 0.29 * 100 from flooring to 28
    return int(math.floor(float(gamma) * length + 1e-9))


def _sequence(user_items, keyword_items, length):
    slots = list(user_items) + list(keyword_items)
    padded = length - len(slots)
    return FusedBehavior(
        slots=tuple(slots) + (PAD,) * padded,
        mask=(1,) * len(slots) + (0,) * padded,
        from_user=len(user_items),
        from_keyword=len(keyword_items),
        padded=padded,
    )


def fuse_behaviors(h_u, h_k, gamma, length):
    """
    Fixed-length behavior sequence: floor(gamma * length) most recent user
    behaviors and the rest from the keyword behaviors. A source that runs
    short is backfilled from the other; what is still missing is padding.
    User items come first, then keyword items, each newest first.
    """
    if length < 1:
        raise ContractError('behavior length must be at least 1')
    quota = user_quota(gamma, length)
    take_u = min(quota, len(h_u))
    take_k = min(length - quota, len(h_k))
    shortfall = length - take_u - take_k
    extra_u = min(shortfall, len(h_u) - take_u)
    extra_k = min(shortfall - extra_u, len(h_k) - take_k)
    return _sequence(h_u[:take_u + extra_u], h_k[:take_k + extra_k], length)


def union_behaviors(h_u, h_k, length):
    """
    Behaviors without fusion: H_u and H_k merged by timestamp, each paper once,
    most recent ``length`` items. Items are ``(paper, ts)`` pairs.
    """
    if length < 1:
        raise ContractError('behavior length must be at least 1')
    merged = sorted([(ts, 0, i, p) for i, (p, ts) in enumerate(h_u)] +
                    [(ts, 1, i, p) for i, (p, ts) in enumerate(h_k)],
                    key=lambda x: (-x[0], x[1], x[2]))
    slots, from_user = [], 0
    for _, source, _, paper in merged:
        if paper in slots:
            continue
        slots.append(paper)
        from_user += source == 0
        if len(slots) == length:
            break
    padded = length - len(slots)
    return FusedBehavior(
        slots=tuple(slots) + (PAD,) * padded,
        mask=(1,) * len(slots) + (0,) * padded,
        from_user=from_user,
        from_keyword=len(slots) - from_user,
        padded=padded,
    )
