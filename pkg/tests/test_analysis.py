import math

import numpy as np
import pytest

import oracles
from mdlcocluster import synth
from mdlcocluster.analysis import (
    DEFICIT, EXCESS, NEUTRAL, calendar_report, classify, classify_counts, cluster_map, contributions_from_blocks,
    entity_report, mi_contributions,
)
from mdlcocluster.corpus import CoordinateTable
from mdlcocluster.criterion import SpatialModel, TemporalModel, null_model
from mdlcocluster.hierarchy import coarsen
from mdlcocluster.optimizer import fit_spatial, fit_temporal


def test_independent_table_has_zero_mi():
    report = contributions_from_blocks([[1, 1], [1, 1]])
    assert report.contributions.tolist() == [[0.0, 0.0], [0.0, 0.0]]
    assert report.mutual_information == 0.0
    assert (report.labels == NEUTRAL).all()


def test_diagonal_table():
    report = contributions_from_blocks([[2, 0], [0, 2]])
    assert report.contributions[0, 0] == pytest.approx(0.5 * math.log(2), abs=1e-12)
    assert report.contributions[0, 1] == 0.0
    assert report.mutual_information == pytest.approx(math.log(2), abs=1e-12)
    assert report.labels.tolist() == [[EXCESS, NEUTRAL], [NEUTRAL, EXCESS]]


def test_single_cell_table():
    report = contributions_from_blocks([[9]])
    assert report.contributions.tolist() == [[0.0]] and report.mutual_information == 0.0


def test_bits_toggle():
    report = contributions_from_blocks([[2, 0], [0, 2]])
    assert report.in_bits().sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("observed,expected,label", [
    (0.25, 0.25, NEUTRAL), (0.0, 0.25, NEUTRAL), (0.3, 0.25, EXCESS), (0.2, 0.25, DEFICIT), (0.26, 0.25, NEUTRAL),
])
def test_classify(observed, expected, label):
    assert classify(0.0, observed, expected) == label


def test_classify_epsilon_zero_and_errors():
    assert classify(0.0, 0.2501, 0.25, epsilon=0.0) == EXCESS
    assert classify_counts(1, 2, 2, 4, epsilon=0.0) == NEUTRAL
    with pytest.raises(ValueError):
        classify(0.0, 0.1, 0.1, epsilon=-1)


@pytest.mark.parametrize("seed", range(30))
def test_contributions_sum_to_independent_mi(seed):
    rng = np.random.default_rng(seed)
    blocks = rng.poisson(rng.uniform(0, 20), size=tuple(rng.integers(1, 8, size=2)))
    if blocks.sum() == 0:
        blocks[0, 0] = 1
    report = contributions_from_blocks(blocks)
    mi = oracles.mutual_information(blocks.tolist())
    assert report.mutual_information == pytest.approx(mi, abs=1e-10)
    assert report.mutual_information >= -1e-15


@pytest.mark.parametrize("seed", range(10))
def test_zero_mi_iff_all_neutral_at_epsilon_zero(seed):
    rng = np.random.default_rng(seed)
    row, col = rng.integers(1, 5, size=3), rng.integers(1, 5, size=4)
    independent = np.outer(row, col)
    report = contributions_from_blocks(independent, epsilon=0.0)
    assert report.mutual_information == pytest.approx(0.0, abs=1e-12)
    assert (report.labels == NEUTRAL).all()
    skewed = independent.copy()
    skewed[0, 0] += 1
    report = contributions_from_blocks(skewed, epsilon=0.0)
    assert report.mutual_information > 0 and (report.labels != NEUTRAL).any()


def test_mi_on_planted_fit(two_block):
    result = fit_spatial(two_block)
    report = mi_contributions(result.model, two_block)
    assert report.blocks.tolist() == [[100, 0], [0, 100]]
    assert report.mutual_information == pytest.approx(math.log(2), abs=1e-12)


def test_mi_never_increases_along_merges():
    corpus = synth.planted_blocks(60, 50, 6000, n_groups=4, seed=6)
    dendrogram = coarsen(fit_spatial(corpus), corpus)
    values = [mi_contributions(dendrogram.model_at(n), corpus).mutual_information
              for n in range(len(dendrogram.steps) + 1)]
    assert all(b <= a + 1e-10 for a, b in zip(values, values[1:]))
    assert values[-1] == 0.0


def coords_for(names):
    return CoordinateTable({n: (40.0 + i * 0.01, 2.0 + i * 0.01) for i, n in enumerate(names)})


def test_entity_report_uniform_is_neutral():
    corpus = synth.from_matrix(np.full((3, 4), 5))
    model = SpatialModel([0, 0, 1], [0, 1, 1, 0])
    report = mi_contributions(model, corpus)
    records, skipped = entity_report(report, model, corpus, coords_for(corpus.destinations), focus=0)
    assert skipped == 0 and len(records) == 4
    assert all(r.classification == NEUTRAL for r in records)


def test_entity_report_planted(two_block):
    model = SpatialModel([0, 0, 1, 1], [0, 0, 1, 1])
    report = mi_contributions(model, two_block)
    records, _ = entity_report(report, model, two_block, coords_for(two_block.destinations), focus=0)
    assert [r.classification for r in records] == [EXCESS, EXCESS, NEUTRAL, NEUTRAL]
    assert records[0].contribution == pytest.approx(0.5 * math.log(2), abs=1e-12)
    assert records[0].size == pytest.approx(math.log1p(50))


def test_entity_report_skips_missing_coordinates(two_block):
    model = SpatialModel([0, 0, 1, 1], [0, 0, 1, 1])
    report = mi_contributions(model, two_block)
    records, skipped = entity_report(report, model, two_block, coords_for(two_block.destinations[:3]), focus=1)
    assert skipped == 1 and len(records) == 3
    with pytest.raises(ValueError):
        entity_report(report, model, two_block, None, focus=5)


def test_entity_without_calls_has_zero_size():
    corpus = synth.from_matrix([[3, 0], [2, 0]])
    model = SpatialModel([0, 0], [0, -1])
    report = mi_contributions(model, corpus)
    records, _ = entity_report(report, model, corpus, None, focus=0)
    assert records[1].size == 0.0 and records[1].cluster is None


def test_cluster_map(two_block):
    model = SpatialModel([0, 0, 1, 1], [0, 0, 1, 1])
    records, skipped = cluster_map(model, two_block, coords_for(two_block.sources[1:]))
    assert skipped == 1 and [r.cluster for r in records] == [0, 1, 1]


def test_calendar_single_cluster_is_neutral(two_regime):
    days, grid = calendar_report(null_model(two_regime, "temporal"), two_regime)
    assert len(days) == 20 and grid.shape == (1, 20)
    assert (grid == NEUTRAL).all()


def test_calendar_flips_at_boundary(two_regime):
    model = fit_temporal(two_regime).model
    days, grid = calendar_report(model, two_regime)
    assert len(days) == two_regime.n_timestamps
    first = 0 if grid[0, 0] == EXCESS else 1
    assert list(grid[first]) == [EXCESS] * 10 + [NEUTRAL] * 10
    assert list(grid[1 - first]) == [NEUTRAL] * 10 + [EXCESS] * 10


def test_calendar_needs_temporal(two_block):
    with pytest.raises(ValueError):
        calendar_report(SpatialModel([0, 0, 1, 1], [0, 0, 1, 1]), two_block)


def test_temporal_entity_report(two_regime):
    model = TemporalModel.from_intervals([0, 1], [(0, 9), (10, 19)], 20)
    report = mi_contributions(model, two_regime)
    records, _ = entity_report(report, model, two_regime, None, focus=1)
    assert [r.classification for r in records] == [NEUTRAL, EXCESS]
