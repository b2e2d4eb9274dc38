"""Per-epoch index orderings and exact enumeration utilities.

Four strategies are supported:

* ``reshuffle``         fresh uniform permutation every epoch,
* ``shuffle-once``      one permutation drawn at epoch 1 and reused,
* ``incremental``       the identity ordering every epoch,
* ``with-replacement``  n i.i.d. uniform indices (baseline, not a bijection).

A permutation is a pure function of (seed, kind, epoch); distinct epochs
use independent substreams, so individual epochs can be regenerated out
of order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import prng
from .errors import InvalidInputError, SizeLimitError

STRATEGY_KINDS = ("reshuffle", "shuffle-once", "incremental", "with-replacement")

ENUMERATION_LIMIT = 8


@dataclass(frozen=True)
class PermutationStrategy:
    kind: str
    seed: int
    n: int

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise InvalidInputError(f"unknown strategy kind {self.kind!r}")
        if self.n < 1:
            raise InvalidInputError("n must be positive")


def next_permutation(strategy: PermutationStrategy, epoch_index: int) -> np.ndarray:
    """Index ordering for the given epoch (0-based indices, length n)."""
    if epoch_index < 1:
        raise InvalidInputError("epoch_index must be >= 1")
    n = strategy.n
    if strategy.kind == "incremental":
        return np.arange(n, dtype=np.int64)
    if strategy.kind == "shuffle-once":
        stream = prng.epoch_stream(strategy.seed, 1)
        return np.array(prng.fisher_yates(n, stream), dtype=np.int64)
    stream = prng.epoch_stream(strategy.seed, epoch_index)
    if strategy.kind == "with-replacement":
        return np.array([stream.below(n) for _ in range(n)], dtype=np.int64)
    return np.array(prng.fisher_yates(n, stream), dtype=np.int64)


def enumerate_ordered_tuples(n: int, t: int) -> list[tuple[int, ...]]:
    """All ordered t-tuples of distinct indices from range(n); n!/(n-t)! of them."""
    if not 1 <= t <= n:
        raise InvalidInputError("need 1 <= t <= n")
    if n > ENUMERATION_LIMIT:
        raise SizeLimitError(f"enumeration supports n <= {ENUMERATION_LIMIT}, got {n}")
    return list(itertools.permutations(range(n), t))


@dataclass(frozen=True)
class SamplingCheck:
    lhs: float
    rhs: float
    holds: bool


def weighted_sampling_check(vectors, weights) -> SamplingCheck:
    """Exact check of the without-replacement weighted sampling bound.

    For X_1..X_n and nonnegative weights a_1..a_t, the expectation of
    ||sum_i a_i X_{pi_i} - (sum_i a_i) Xbar||^2 over uniformly sampled
    without-replacement tuples pi is computed by full enumeration (lhs)
    and compared against ||a||^2 sigma^2 (rhs), sigma^2 being the
    population variance of the X_i.
    """
    X = np.asarray(vectors, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    a = np.asarray(weights, dtype=float)
    if a.ndim != 1 or not 1 <= a.size <= X.shape[0]:
        raise InvalidInputError("weights must be a 1-d array with 1 <= t <= n")
    if np.any(a < 0):
        raise InvalidInputError("weights must be nonnegative")
    n, t = X.shape[0], a.size
    mean = X.mean(axis=0)
    sigma2 = float(np.mean(np.sum((X - mean) ** 2, axis=1)))

    total = 0.0
    count = 0
    shifted = (np.sum(a) * mean)
    for tup in enumerate_ordered_tuples(n, t):
        dev = a @ X[list(tup)] - shifted
        total += float(dev @ dev)
        count += 1
    lhs = total / count
    rhs = float(a @ a) * sigma2
    return SamplingCheck(lhs=lhs, rhs=rhs, holds=lhs <= rhs + 1e-12 * (1.0 + rhs))
