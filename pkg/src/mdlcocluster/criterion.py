"""Spatial and temporal coding-length criteria and their incremental deltas.

A spatial model partitions sources and destinations; a temporal model
partitions sources and cuts the ordered timestamps into contiguous
segments. Costs are natural-log description lengths (prior + likelihood).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .combinatorics import log_B, log_binomial, log_factorial, log_factorial_array
from .corpus import EventCorpus

SPATIAL = "spatial"
TEMPORAL = "temporal"
SOURCES = "sources"
DESTINATIONS = "destinations"
SEGMENTS = "segments"


class ModelError(ValueError):
    pass


class EmptyClusterMove(ModelError):
    """Raised when a move would leave its origin cluster empty."""


def _fsum(values) -> float:
    return math.fsum(np.asarray(values, dtype=np.float64).ravel().tolist())


def canonical_labels(labels) -> np.ndarray:
    """Relabel clusters 0..k-1 by first appearance; -1 (inactive) is kept."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.full(labels.shape, -1, dtype=np.int64)
    active = labels >= 0
    if active.any():
        _, first, inverse = np.unique(labels[active], return_index=True, return_inverse=True)
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(len(first))
        out[active] = rank[inverse]
    return out


class CoclusterModel:
    """Source partition plus a partition of the column axis.

    ``source_clusters`` and ``column_clusters`` hold one cluster id per
    entity (``-1`` for entities excluded from fitting). Ids are compact:
    every id in ``0..k-1`` is used.
    """

    kind: str = ""
    column_axis: str = ""

    def __init__(self, source_clusters, column_clusters, cost: float | None = None):
        self.source_clusters = np.asarray(source_clusters, dtype=np.int64).copy()
        self.column_clusters = np.asarray(column_clusters, dtype=np.int64).copy()
        self.source_clusters.setflags(write=False)
        self.column_clusters.setflags(write=False)
        self.cost = cost
        for name, labels in ((SOURCES, self.source_clusters), (self.column_axis, self.column_clusters)):
            used = np.unique(labels[labels >= 0])
            if len(used) == 0:
                raise ModelError(f"{name} partition has no clusters")
            if used[0] != 0 or used[-1] != len(used) - 1:
                missing = sorted(set(range(int(used[-1]) + 1)) - set(used.tolist()))
                raise ModelError(f"empty {name} cluster(s) {missing[:5]}")
            if (labels < -1).any():
                raise ModelError(f"invalid {name} cluster id")

    @property
    def k_sources(self) -> int:
        return int(self.source_clusters.max()) + 1

    @property
    def k_columns(self) -> int:
        return int(self.column_clusters.max()) + 1

    def labels(self, axis: str) -> np.ndarray:
        if axis == SOURCES:
            return self.source_clusters
        if axis == self.column_axis:
            return self.column_clusters
        raise ModelError(f"{self.kind} model has no axis {axis!r}")

    def canonical(self) -> "CoclusterModel":
        return type(self)(canonical_labels(self.source_clusters), canonical_labels(self.column_clusters),
                          cost=self.cost)

    def same_partition(self, other: "CoclusterModel") -> bool:
        return (self.kind == other.kind
                and np.array_equal(canonical_labels(self.source_clusters), canonical_labels(other.source_clusters))
                and np.array_equal(canonical_labels(self.column_clusters), canonical_labels(other.column_clusters)))

    def __repr__(self):
        return f"{type(self).__name__}(k_sources={self.k_sources}, k_{self.column_axis}={self.k_columns}, cost={self.cost})"


class SpatialModel(CoclusterModel):
    kind = SPATIAL
    column_axis = DESTINATIONS

    @property
    def destination_clusters(self) -> np.ndarray:
        return self.column_clusters

    @property
    def k_destinations(self) -> int:
        return self.k_columns


class TemporalModel(CoclusterModel):
    kind = TEMPORAL
    column_axis = SEGMENTS

    def __init__(self, source_clusters, time_segments, cost=None):
        super().__init__(source_clusters, time_segments, cost)
        seg = self.column_clusters
        steps = np.diff(seg)
        if seg[0] != 0 or (steps < 0).any() or (steps > 1).any():
            raise ModelError("time segments must be contiguous, ordered and non-overlapping")

    @classmethod
    def from_intervals(cls, source_clusters, intervals, n_timestamps: int, cost=None):
        """Build from ``[(first, last), ...]`` inclusive timestamp-index intervals."""
        seg = np.full(n_timestamps, -1, dtype=np.int64)
        expected = 0
        for s, (first, last) in enumerate(intervals):
            if first != expected or last < first:
                raise ModelError(f"segment {s} ({first}, {last}) is not contiguous with its predecessor")
            seg[first:last + 1] = s
            expected = last + 1
        if expected != n_timestamps:
            raise ModelError("segments do not cover all timestamps")
        return cls(source_clusters, seg, cost)

    @property
    def time_segments(self) -> np.ndarray:
        return self.column_clusters

    @property
    def k_segments(self) -> int:
        return self.k_columns

    def intervals(self) -> list[tuple[int, int]]:
        seg = self.column_clusters
        starts = np.flatnonzero(np.r_[True, np.diff(seg) != 0])
        ends = np.r_[starts[1:] - 1, len(seg) - 1]
        return [(int(a), int(b)) for a, b in zip(starts, ends)]


class Problem:
    """Raw count matrix and marginals that a model of one kind is fitted on."""

    def __init__(self, corpus: EventCorpus, kind: str):
        self.kind = kind
        self.corpus = corpus
        if kind == SPATIAL:
            self.matrix = corpus.spatial_matrix()
            self.col_active = corpus.destination_marginals > 0
        elif kind == TEMPORAL:
            self.matrix = corpus.temporal_matrix()
            self.col_active = np.ones(corpus.n_timestamps, dtype=bool)
        else:
            raise ModelError(f"unknown model kind {kind!r}")
        self.row_marginals = np.asarray(self.matrix.sum(axis=1)).ravel().astype(np.int64)
        self.col_marginals = np.asarray(self.matrix.sum(axis=0)).ravel().astype(np.int64)
        self.row_active = self.row_marginals > 0
        self.total = int(self.row_marginals.sum())
        if self.total < 1:
            raise ModelError("empty corpus")
        self.n_rows = int(self.row_active.sum())
        self.n_cols = int(self.col_active.sum())

    @cached_property
    def constant_likelihood(self) -> float:
        """Model-independent likelihood part: ln m! - per-entity factorials."""
        value = log_factorial(self.total) - _fsum(log_factorial_array(self.row_marginals))
        if self.kind == SPATIAL:
            value -= _fsum(log_factorial_array(self.col_marginals))
        return value

    def model_class(self):
        return SpatialModel if self.kind == SPATIAL else TemporalModel

    def check(self, model: CoclusterModel) -> None:
        if model.kind != self.kind:
            raise ModelError(f"expected a {self.kind} model, got {model.kind}")
        for name, labels, active in ((SOURCES, model.source_clusters, self.row_active),
                                     (model.column_axis, model.column_clusters, self.col_active)):
            if len(labels) != len(active):
                raise ModelError(f"{name} partition covers {len(labels)} entities, corpus has {len(active)}")
            if ((labels >= 0) != active).any():
                raise ModelError(f"{name} partition does not match the corpus's active entities")

    def null_model(self) -> CoclusterModel:
        rows = np.where(self.row_active, 0, -1)
        cols = np.where(self.col_active, 0, -1)
        return self.model_class()(rows, cols)

    def finest_model(self) -> CoclusterModel:
        rows = np.full(len(self.row_active), -1, dtype=np.int64)
        rows[self.row_active] = np.arange(self.n_rows)
        cols = np.full(len(self.col_active), -1, dtype=np.int64)
        cols[self.col_active] = np.arange(self.n_cols)
        return self.model_class()(rows, cols)


_problem_cache: dict[tuple[int, str], Problem] = {}


def problem_for(corpus: EventCorpus, kind: str) -> Problem:
    key = (id(corpus), kind)
    cached = _problem_cache.get(key)
    if cached is None or cached.corpus is not corpus:
        if len(_problem_cache) > 16:
            _problem_cache.clear()
        cached = _problem_cache[key] = Problem(corpus, kind)
    return cached


@dataclass
class BlockStats:
    blocks: np.ndarray        # k_sources x k_columns counts
    row_sizes: np.ndarray     # entities per source cluster
    col_sizes: np.ndarray
    row_counts: np.ndarray    # calls per source cluster
    col_counts: np.ndarray


def block_stats(model: CoclusterModel, problem: Problem) -> BlockStats:
    problem.check(model)
    rl, cl = model.source_clusters, model.column_clusters
    ks, kc = model.k_sources, model.k_columns
    coo = problem.matrix.tocoo()
    flat = rl[coo.row] * kc + cl[coo.col]
    blocks = np.bincount(flat, weights=coo.data, minlength=ks * kc).astype(np.int64).reshape(ks, kc)
    return BlockStats(
        blocks=blocks,
        row_sizes=np.bincount(rl[rl >= 0], minlength=ks),
        col_sizes=np.bincount(cl[cl >= 0], minlength=kc),
        row_counts=blocks.sum(axis=1),
        col_counts=blocks.sum(axis=0),
    )


def _cluster_prior(counts, sizes) -> float:
    return math.fsum(log_binomial(int(c) + int(n) - 1, int(n) - 1) for c, n in zip(counts, sizes))


def cost_terms(model: CoclusterModel, corpus: EventCorpus) -> tuple[float, float]:
    """Return ``(prior, likelihood)`` description lengths of a model."""
    problem = problem_for(corpus, model.kind)
    st = block_stats(model, problem)
    m, ks, kc = problem.total, model.k_sources, model.k_columns
    k = ks * kc
    prior = [math.log(problem.n_rows), log_B(problem.n_rows, ks), log_binomial(m + k - 1, k - 1),
             _cluster_prior(st.row_counts, st.row_sizes)]
    if model.kind == SPATIAL:
        prior += [math.log(problem.n_cols), log_B(problem.n_cols, kc),
                  _cluster_prior(st.col_counts, st.col_sizes)]
    else:
        prior.append(math.log(m))
    likelihood = [problem.constant_likelihood,
                  -_fsum(log_factorial_array(st.blocks)),
                  _fsum(log_factorial_array(st.col_counts)),
                  _fsum(log_factorial_array(st.row_counts))]
    return math.fsum(prior), math.fsum(likelihood)


def model_cost(model: CoclusterModel, corpus: EventCorpus) -> float:
    prior, likelihood = cost_terms(model, corpus)
    return prior + likelihood


def spatial_cost(model: SpatialModel, corpus: EventCorpus) -> float:
    """Description length of a source x destination co-clustering."""
    if model.kind != SPATIAL:
        raise ModelError("spatial_cost needs a SpatialModel")
    return model_cost(model, corpus)


def temporal_cost(model: TemporalModel, corpus: EventCorpus) -> float:
    """Description length of a source x time-segment co-clustering."""
    if model.kind != TEMPORAL:
        raise ModelError("temporal_cost needs a TemporalModel")
    return model_cost(model, corpus)


def _lf(x) -> float:
    return log_factorial(int(x))


def _g(x, y) -> np.ndarray:
    """ln C(x + y, x) elementwise."""
    return log_factorial_array(x + y) - log_factorial_array(x) - log_factorial_array(y)


def _axis_term(kind: str, axis: str, count: int, size: int) -> float:
    """Per-cluster cost terms of one axis: size prior plus ln(count!)."""
    if axis == SEGMENTS:
        return _lf(count)
    return log_binomial(count + size - 1, size - 1) + _lf(count)


def _structure_prior(problem: Problem, ks: int, kc: int) -> float:
    k = ks * kc
    value = log_B(problem.n_rows, ks) + log_binomial(problem.total + k - 1, k - 1)
    if problem.kind == SPATIAL:
        value += log_B(problem.n_cols, kc)
    return value


def merge_delta(model: CoclusterModel, axis: str, a: int, b: int, corpus: EventCorpus) -> float:
    """Cost change of merging clusters ``a`` and ``b`` of ``axis``."""
    problem = problem_for(corpus, model.kind)
    labels = model.labels(axis)
    k = int(labels.max()) + 1
    a, b = int(a), int(b)
    if a == b:
        raise ModelError("cannot merge a cluster with itself")
    if not (0 <= a < k and 0 <= b < k):
        raise ModelError(f"unknown {axis} cluster id")
    if axis == SEGMENTS and abs(a - b) != 1:
        raise ModelError(f"segments {a} and {b} are not adjacent")
    st = block_stats(model, problem)
    ks, kc = model.k_sources, model.k_columns
    if axis == SOURCES:
        rows_a, rows_b = st.blocks[a], st.blocks[b]
        sizes, counts, new_k = st.row_sizes, st.row_counts, (ks - 1, kc)
    else:
        rows_a, rows_b = st.blocks[:, a], st.blocks[:, b]
        sizes, counts, new_k = st.col_sizes, st.col_counts, (ks, kc - 1)
    delta = _structure_prior(problem, *new_k) - _structure_prior(problem, ks, kc)
    delta += _axis_term(model.kind, axis, counts[a] + counts[b], sizes[a] + sizes[b])
    delta -= _axis_term(model.kind, axis, counts[a], sizes[a]) + _axis_term(model.kind, axis, counts[b], sizes[b])
    delta -= _fsum(_g(rows_a, rows_b))
    return delta


def _element_profile(model: CoclusterModel, problem: Problem, axis: str, element: int) -> np.ndarray:
    if axis == SOURCES:
        row = problem.matrix.getrow(element).tocoo()
        return np.bincount(model.column_clusters[row.col], weights=row.data,
                           minlength=model.k_columns).astype(np.int64)
    col = problem.matrix.getcol(element).tocoo()
    return np.bincount(model.source_clusters[col.row], weights=col.data,
                       minlength=model.k_sources).astype(np.int64)


def _transfer_delta(kind, axis, st: BlockStats, src: int, dst: int, profile: np.ndarray, size: int) -> float:
    """Cost change of moving ``size`` entities with block ``profile`` from cluster src to dst."""
    if axis == SOURCES:
        blk_src, blk_dst = st.blocks[src], st.blocks[dst]
        sizes, counts = st.row_sizes, st.row_counts
    else:
        blk_src, blk_dst = st.blocks[:, src], st.blocks[:, dst]
        sizes, counts = st.col_sizes, st.col_counts
    r = int(profile.sum())
    delta = (_axis_term(kind, axis, counts[src] - r, sizes[src] - size)
             - _axis_term(kind, axis, counts[src], sizes[src])
             + _axis_term(kind, axis, counts[dst] + r, sizes[dst] + size)
             - _axis_term(kind, axis, counts[dst], sizes[dst]))
    lf = log_factorial_array
    delta -= _fsum(lf(blk_src - profile) - lf(blk_src))
    delta -= _fsum(lf(blk_dst + profile) - lf(blk_dst))
    return delta


def move_delta(model: CoclusterModel, axis: str, element: int, target: int, corpus: EventCorpus) -> float:
    """Cost change of reassigning one source or destination entity to ``target``.

    Raises EmptyClusterMove if the element is alone in its cluster.
    """
    if axis == SEGMENTS:
        raise ModelError("segments change through boundary shifts, not element moves")
    problem = problem_for(corpus, model.kind)
    labels = model.labels(axis)
    if not (0 <= element < len(labels)) or labels[element] < 0:
        raise ModelError(f"{axis} entity {element} is not assigned")
    if not (0 <= target <= labels.max()):
        raise ModelError(f"unknown {axis} cluster {target}")
    origin = int(labels[element])
    if origin == target:
        return 0.0
    st = block_stats(model, problem)
    sizes = st.row_sizes if axis == SOURCES else st.col_sizes
    if sizes[origin] == 1:
        raise EmptyClusterMove(f"moving {axis} entity {element} empties cluster {origin}")
    profile = _element_profile(model, problem, axis, element)
    return _transfer_delta(model.kind, axis, st, origin, int(target), profile, 1)


def _shift_plan(model: TemporalModel, boundary: int, direction: int) -> tuple[int, int, int]:
    """Return (timestamp index, origin segment, target segment) of a boundary shift."""
    if model.kind != TEMPORAL:
        raise ModelError("boundary shifts need a TemporalModel")
    intervals = model.intervals()
    if len(intervals) < 2:
        raise ModelError("model has a single time segment; no boundary to shift")
    if not 0 <= boundary < len(intervals) - 1:
        raise ModelError(f"boundary index {boundary} out of range")
    if direction not in (-1, 1):
        raise ModelError("direction must be -1 or +1")
    left, right = intervals[boundary], intervals[boundary + 1]
    if direction > 0:
        if right[0] == right[1]:
            raise ModelError("shift would empty the right-hand segment")
        return right[0], boundary + 1, boundary
    if left[0] == left[1]:
        raise ModelError("shift would empty the left-hand segment")
    return left[1], boundary, boundary + 1


def boundary_shift_delta(model: TemporalModel, boundary: int, direction: int, corpus: EventCorpus) -> float:
    """Cost change of moving the boundary after segment ``boundary`` one timestamp.

    ``direction=+1`` hands the first timestamp of the right segment to the
    left one; ``-1`` hands the last timestamp of the left segment to the
    right one.
    """
    stamp, origin, target = _shift_plan(model, boundary, direction)
    problem = problem_for(corpus, model.kind)
    st = block_stats(model, problem)
    profile = _element_profile(model, problem, SEGMENTS, stamp)
    return _transfer_delta(model.kind, SEGMENTS, st, origin, target, profile, 1)


def apply_merge(model: CoclusterModel, axis: str, a: int, b: int) -> CoclusterModel:
    keep, gone = min(a, b), max(a, b)
    labels = model.labels(axis).copy()
    labels[labels == gone] = keep
    labels[labels > gone] -= 1
    if axis == SOURCES:
        return type(model)(labels, model.column_clusters)
    return type(model)(model.source_clusters, labels)


def apply_move(model: CoclusterModel, axis: str, element: int, target: int) -> CoclusterModel:
    labels = model.labels(axis).copy()
    if labels[element] == target:
        return type(model)(model.source_clusters, model.column_clusters)
    if np.count_nonzero(labels == labels[element]) == 1:
        raise EmptyClusterMove(f"moving {axis} entity {element} empties its cluster")
    labels[element] = target
    if axis == SOURCES:
        return type(model)(labels, model.column_clusters)
    return type(model)(model.source_clusters, labels)


def apply_boundary_shift(model: TemporalModel, boundary: int, direction: int) -> TemporalModel:
    stamp, _, target = _shift_plan(model, boundary, direction)
    seg = model.time_segments.copy()
    seg[stamp] = target
    return TemporalModel(model.source_clusters, seg)


def null_model(corpus: EventCorpus, kind: str) -> CoclusterModel:
    return problem_for(corpus, kind).null_model()


def finest_model(corpus: EventCorpus, kind: str) -> CoclusterModel:
    return problem_for(corpus, kind).finest_model()
