"""Planted-structure corpus generators for tests and benchmarks."""
from __future__ import annotations

import numpy as np

from .corpus import EventCorpus


def _labels(prefix, n):
    width = len(str(max(n - 1, 0)))
    return [f"{prefix}{i:0{width}d}" for i in range(n)]


def from_matrix(matrix, timestamps=None, source_prefix="s", destination_prefix="d") -> EventCorpus:
    """Corpus from a dense count matrix.

    With ``timestamps=None`` the columns are destinations observed on a
    single day; otherwise the columns are the given ordered days and the
    corpus has no destination axis.
    """
    matrix = np.asarray(matrix, dtype=np.int64)
    i, j = np.nonzero(matrix)
    counts = matrix[i, j]
    sources = _labels(source_prefix, matrix.shape[0])
    if timestamps is None:
        return EventCorpus(sources, _labels(destination_prefix, matrix.shape[1]), [0],
                           i, j, np.zeros_like(i), counts)
    days = np.asarray(timestamps, dtype=np.int64)
    if len(days) != matrix.shape[1]:
        raise ValueError("need one timestamp per column")
    return EventCorpus(sources, (), days - days.min(), i, np.zeros_like(i), j, counts, origin=int(days.min()))


def two_block(calls_per_pair: int = 25) -> EventCorpus:
    """4x4 corpus: sources {0,1} call destinations {0,1}, sources {2,3} call {2,3}."""
    planted = np.kron(np.eye(2, dtype=np.int64), np.ones((2, 2), dtype=np.int64))
    return from_matrix(planted * calls_per_pair)


def two_regime(days: int = 20, switch: int = 10, calls_per_day: int = 5) -> EventCorpus:
    """Source A active on days 1..switch, source B on days switch+1..days."""
    mat = np.zeros((2, days), dtype=np.int64)
    mat[0, :switch] = calls_per_day
    mat[1, switch:] = calls_per_day
    return from_matrix(mat, timestamps=np.arange(1, days + 1))


def uniform(n_sources: int = 10, n_destinations: int = 10, calls: int = 200, seed: int = 0) -> EventCorpus:
    """Every call picks its source and destination uniformly at random."""
    rng = np.random.default_rng(seed)
    cells = rng.multinomial(calls, np.full(n_sources * n_destinations, 1.0 / (n_sources * n_destinations)))
    return from_matrix(cells.reshape(n_sources, n_destinations))


def constant_rate(n_sources: int = 4, days: int = 6, rate: float = 5.0, seed: int = 0) -> EventCorpus:
    """Poisson calls at the same rate for every source and day."""
    rng = np.random.default_rng(seed)
    mat = rng.poisson(rate, size=(n_sources, days))
    mat[mat.sum(axis=1) == 0, 0] += 1
    mat[0, mat.sum(axis=0) == 0] += 1
    return from_matrix(mat, timestamps=np.arange(days))


def planted_blocks(n_sources: int = 1000, n_destinations: int = 1000, calls: int = 1_000_000,
                   n_groups: int = 10, affinity: float = 0.9, seed: int = 0) -> EventCorpus:
    """Block-diagonal traffic: each source group sends ``affinity`` of its calls
    to its matching destination group, the rest uniformly elsewhere."""
    rng = np.random.default_rng(seed)
    sgroup = np.arange(n_sources) % n_groups
    dgroup = np.arange(n_destinations) % n_groups
    src = rng.integers(0, n_sources, size=calls)
    same = rng.random(calls) < affinity
    target_group = np.where(same, sgroup[src], rng.integers(0, n_groups, size=calls))
    members = [np.flatnonzero(dgroup == g) for g in range(n_groups)]
    dst = np.empty(calls, dtype=np.int64)
    for g in range(n_groups):
        sel = np.flatnonzero(target_group == g)
        dst[sel] = members[g][rng.integers(0, len(members[g]), size=len(sel))]
    flat = np.bincount(src * n_destinations + dst, minlength=n_sources * n_destinations)
    return from_matrix(flat.reshape(n_sources, n_destinations))


def planted_seasonal(n_sources: int = 20, days: int = 60, n_groups: int = 2, calls: int = 20000,
                     seed: int = 0) -> EventCorpus:
    """Source groups whose daily activity differs between working days and weekends."""
    rng = np.random.default_rng(seed)
    group = np.arange(n_sources) % n_groups
    weekend = (np.arange(days) % 7) >= 5
    rate = np.ones((n_groups, days))
    for g in range(n_groups):
        rate[g, weekend] = 0.3 + 1.4 * g
    weights = rate[group]
    weights /= weights.sum()
    mat = rng.multinomial(calls, weights.ravel()).reshape(n_sources, days)
    return from_matrix(mat, timestamps=np.arange(days))
