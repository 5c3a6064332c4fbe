import math

import numpy as np
import pytest

import oracles
from conftest import random_model, random_spatial_matrix, random_temporal_matrix
from mdlcocluster import synth
from mdlcocluster.corpus import EventRecord, from_records
from mdlcocluster.criterion import (
    DESTINATIONS, SEGMENTS, SOURCES, EmptyClusterMove, ModelError, SpatialModel, TemporalModel, apply_boundary_shift,
    apply_merge, apply_move, boundary_shift_delta, cost_terms, merge_delta, model_cost, move_delta, null_model,
    finest_model, spatial_cost, temporal_cost,
)


def dense(corpus, kind):
    mat = corpus.spatial_matrix() if kind == "spatial" else corpus.temporal_matrix()
    return mat.toarray().tolist()


def oracle_cost(model, corpus):
    fn = oracles.spatial_cost if model.kind == "spatial" else oracles.temporal_cost
    return fn(dense(corpus, model.kind), model.source_clusters.tolist(), model.column_clusters.tolist())


# closed-form anchors

@pytest.mark.parametrize("m", [1, 2, 7, 1000])
def test_single_pair_costs_zero(m):
    corpus = from_records([EventRecord("s1", "d1", 0, m)])
    assert spatial_cost(null_model(corpus, "spatial"), corpus) == 0.0


def test_two_sources_one_destination_null_is_ln12():
    corpus = from_records([EventRecord("s1", "d1", 0), EventRecord("s2", "d1", 0)])
    assert spatial_cost(null_model(corpus, "spatial"), corpus) == pytest.approx(math.log(12), abs=1e-9)


def test_temporal_anchors():
    one = from_records([EventRecord("s1", None, 0)])
    assert temporal_cost(null_model(one, "temporal"), one) == 0.0
    two = from_records([EventRecord("s1", None, 0, 2)])
    assert temporal_cost(null_model(two, "temporal"), two) == pytest.approx(math.log(4), abs=1e-9)


def test_planted_model_is_exhaustive_minimum(two_block):
    planted = SpatialModel([0, 0, 1, 1], [0, 0, 1, 1])
    best, rows, cols = oracles.spatial_minimum(dense(two_block, "spatial"))
    assert spatial_cost(planted, two_block) == pytest.approx(best, abs=1e-9)
    assert (rows, cols) == ([0, 0, 1, 1], [0, 0, 1, 1])


def test_disjoint_periods_exhaustive_minimum():
    corpus = synth.two_regime(days=6, switch=3, calls_per_day=4)
    best, rows, segs = oracles.temporal_minimum(dense(corpus, "temporal"))
    assert (rows, segs) == ([0, 1], [0, 0, 0, 1, 1, 1])
    model = TemporalModel(rows, segs)
    assert temporal_cost(model, corpus) == pytest.approx(best, abs=1e-9)


@pytest.mark.parametrize("seed", range(40))
def test_cost_matches_oracle_on_random_models(seed):
    rng = np.random.default_rng(seed)
    kind = "spatial" if seed % 2 else "temporal"
    mat = random_spatial_matrix(seed, 5) if kind == "spatial" else random_temporal_matrix(seed, 4, 7)
    corpus = synth.from_matrix(mat) if kind == "spatial" else synth.from_matrix(mat, np.arange(mat.shape[1]))
    for _ in range(5):
        model = random_model(corpus, kind, rng)
        assert model_cost(model, corpus) == pytest.approx(oracle_cost(model, corpus), abs=1e-9)


def test_enumeration_equality_five_by_five():
    mat = random_spatial_matrix(11, 5)
    mat = np.pad(mat, ((0, 5 - mat.shape[0]), (0, 5 - mat.shape[1])))
    mat[mat.sum(axis=1) == 0, 0] += 3
    mat[0, mat.sum(axis=0) == 0] += 3
    corpus = synth.from_matrix(mat)
    best = oracles.spatial_minimum(mat.tolist())
    model = SpatialModel(best[1], best[2])
    assert spatial_cost(model, corpus) == pytest.approx(best[0], abs=1e-9)


# errors

def test_partition_corpus_mismatch(two_block):
    with pytest.raises(ModelError):
        spatial_cost(SpatialModel([0, 0, 1], [0, 0, 1, 1]), two_block)
    with pytest.raises(ModelError):
        spatial_cost(TemporalModel([0, 0, 1, 1], [0]), two_block)


def test_empty_cluster_is_rejected():
    with pytest.raises(ModelError, match="empty"):
        SpatialModel([0, 2, 2], [0])


def test_non_contiguous_segments_rejected():
    with pytest.raises(ModelError):
        TemporalModel([0], [0, 1, 0])
    with pytest.raises(ModelError):
        TemporalModel.from_intervals([0], [(0, 1), (1, 3)], 4)


# invariants

@pytest.mark.parametrize("seed", range(20))
def test_likelihood_is_nonnegative(seed):
    rng = np.random.default_rng(seed)
    corpus = synth.from_matrix(random_spatial_matrix(seed, 6))
    for _ in range(5):
        _, likelihood = cost_terms(random_model(corpus, "spatial", rng), corpus)
        assert likelihood >= -1e-9
    timeline = synth.from_matrix(random_temporal_matrix(seed), np.arange(random_temporal_matrix(seed).shape[1]))
    _, likelihood = cost_terms(random_model(timeline, "temporal", rng), timeline)
    assert likelihood >= -1e-9


@pytest.mark.parametrize("seed", range(10))
def test_relabeling_is_bit_identical(seed):
    rng = np.random.default_rng(seed)
    corpus = synth.planted_blocks(30, 25, 3000, n_groups=4, seed=seed)
    model = random_model(corpus, "spatial", rng)
    perm_s = rng.permutation(model.k_sources)
    perm_d = rng.permutation(model.k_destinations)
    relabeled = SpatialModel(perm_s[model.source_clusters], perm_d[model.destination_clusters])
    assert model_cost(relabeled, corpus) == model_cost(model, corpus)


def test_cost_is_finite_on_large_counts():
    corpus = from_records([EventRecord("a", "x", 0, 10**12), EventRecord("b", "y", 0, 3)])
    assert math.isfinite(spatial_cost(finest_model(corpus, "spatial"), corpus))


# deltas

def recompute(before, after, corpus):
    return model_cost(after, corpus) - model_cost(before, corpus)


def test_merge_is_symmetric(two_block):
    model = finest_model(two_block, "spatial")
    assert merge_delta(model, SOURCES, 0, 3, two_block) == merge_delta(model, SOURCES, 3, 0, two_block)


def test_identical_rows_merge_is_cheaper(two_block):
    model = finest_model(two_block, "spatial")
    delta = merge_delta(model, SOURCES, 0, 1, two_block)
    assert delta < 0
    after = apply_merge(model, SOURCES, 0, 1)
    assert oracle_cost(after, two_block) < oracle_cost(model, two_block)


def test_merge_errors(two_block, two_regime):
    model = finest_model(two_block, "spatial")
    with pytest.raises(ModelError):
        merge_delta(model, SOURCES, 1, 1, two_block)
    timeline = finest_model(two_regime, "temporal")
    with pytest.raises(ModelError, match="adjacent"):
        merge_delta(timeline, SEGMENTS, 0, 2, two_regime)


def random_corpus(kind, seed, max_rows, max_cols):
    if kind == "spatial":
        return synth.from_matrix(random_spatial_matrix(seed, max_rows))
    mat = random_temporal_matrix(seed, max_rows, max_cols)
    return synth.from_matrix(mat, np.arange(mat.shape[1]))


def draw(kind, seed, max_rows, max_cols, legal_ops):
    """Draw corpora and models until ``legal_ops(model)`` offers at least one operation."""
    rng = np.random.default_rng(seed)
    for attempt in range(1000):
        corpus = random_corpus(kind, seed + 7919 * attempt, max_rows, max_cols)
        model = random_model(corpus, kind, rng)
        ops = legal_ops(model)
        if ops:
            return corpus, model, ops[rng.integers(len(ops))], rng
    raise AssertionError("no legal operation drawn")


def legal_merges(model):
    ops = [(SOURCES, a, b) for a in range(model.k_sources) for b in range(model.k_sources) if a != b]
    if model.kind == "temporal":
        return ops + [(SEGMENTS, a, a + 1) for a in range(model.k_columns - 1)]
    return ops + [(DESTINATIONS, a, b) for a in range(model.k_columns) for b in range(model.k_columns) if a != b]


def legal_moves(model):
    ops = []
    for axis in ((SOURCES,) if model.kind == "temporal" else (SOURCES, DESTINATIONS)):
        labels = model.labels(axis)
        sizes = np.bincount(labels[labels >= 0])
        ops += [(axis, e, t) for e in range(len(labels)) if labels[e] >= 0 and sizes[labels[e]] > 1
                for t in range(len(sizes))]
    return ops


def legal_shifts(model):
    spans = model.intervals()
    return [(b, d) for b in range(len(spans) - 1) for d in (-1, 1)
            if spans[b + (d > 0)][1] > spans[b + (d > 0)][0]]


@pytest.mark.parametrize("seed", range(100))
def test_merge_delta_matches_recomputation(seed):
    kind = "temporal" if seed % 4 == 0 else "spatial"
    corpus, model, (axis, a, b), _ = draw(kind, seed, 7, 9, legal_merges)
    after = apply_merge(model, axis, a, b)
    assert merge_delta(model, axis, a, b, corpus) == pytest.approx(recompute(model, after, corpus), abs=1e-6)


def test_merge_deltas_compose():
    corpus = synth.planted_blocks(20, 20, 2000, n_groups=3, seed=5)
    model = start = finest_model(corpus, "spatial")
    rng = np.random.default_rng(0)
    total, steps = 0.0, 0
    while model.k_sources + model.k_destinations > 2:
        axis = SOURCES if (model.k_destinations == 1 or (model.k_sources > 1 and rng.random() < 0.5)) else DESTINATIONS
        k = model.k_sources if axis == SOURCES else model.k_destinations
        a, b = rng.choice(k, 2, replace=False)
        total += merge_delta(model, axis, a, b, corpus)
        model = apply_merge(model, axis, a, b)
        steps += 1
    assert total == pytest.approx(recompute(start, model, corpus), abs=steps * 1e-6)


def test_move_to_own_cluster_is_zero(two_block):
    model = SpatialModel([0, 0, 1, 1], [0, 0, 1, 1])
    assert move_delta(model, SOURCES, 2, 1, two_block) == 0.0


def test_move_emptying_cluster_is_signaled(two_block):
    model = SpatialModel([0, 1, 1, 1], [0, 0, 1, 1])
    with pytest.raises(EmptyClusterMove):
        move_delta(model, SOURCES, 0, 1, two_block)
    with pytest.raises(EmptyClusterMove):
        apply_move(model, SOURCES, 0, 1)


def test_moves_rejected_on_segments(two_regime):
    with pytest.raises(ModelError):
        move_delta(finest_model(two_regime, "temporal"), SEGMENTS, 0, 1, two_regime)


def test_every_move_at_planted_optimum_is_worse(two_block):
    model = SpatialModel([0, 0, 1, 1], [0, 0, 1, 1])
    for axis in (SOURCES, DESTINATIONS):
        for element in range(4):
            origin = model.labels(axis)[element]
            assert move_delta(model, axis, element, 1 - origin, two_block) > 0


@pytest.mark.parametrize("seed", range(100))
def test_move_delta_matches_recomputation(seed):
    kind = "temporal" if seed % 3 == 0 else "spatial"
    corpus, model, (axis, element, target), _ = draw(kind, seed, 8, 5, legal_moves)
    after = apply_move(model, axis, element, target)
    assert move_delta(model, axis, element, target, corpus) == pytest.approx(recompute(model, after, corpus), abs=1e-6)


def test_shift_then_reverse_sums_to_zero(two_regime):
    model = TemporalModel.from_intervals([0, 1], [(0, 9), (10, 19)], 20)
    forward = boundary_shift_delta(model, 0, 1, two_regime)
    shifted = apply_boundary_shift(model, 0, 1)
    assert shifted.intervals() == [(0, 10), (11, 19)]
    back = boundary_shift_delta(shifted, 0, -1, two_regime)
    assert forward + back == pytest.approx(0.0, abs=1e-9)
    assert forward > 0


@pytest.mark.parametrize("seed", range(50))
def test_shift_delta_matches_recomputation(seed):
    corpus, model, (b, d), _ = draw("temporal", seed, 4, 9, legal_shifts)
    after = apply_boundary_shift(model, b, d)
    assert boundary_shift_delta(model, b, d, corpus) == pytest.approx(recompute(model, after, corpus), abs=1e-6)


def test_shift_errors():
    single = from_records([EventRecord("a", None, 3, 2), EventRecord("b", None, 3)])
    with pytest.raises(ModelError):
        boundary_shift_delta(null_model(single, "temporal"), 0, 1, single)
    corpus = synth.two_regime(days=3, switch=1)
    model = TemporalModel.from_intervals([0, 1], [(0, 0), (1, 2)], 3)
    with pytest.raises(ModelError, match="empty"):
        boundary_shift_delta(model, 0, -1, corpus)
