"""Mutual-information contributions of biclusters and excess/deficit reports."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .corpus import CoordinateTable, EventCorpus
from .criterion import SPATIAL, CoclusterModel, TemporalModel, block_stats, problem_for

logger = logging.getLogger(__name__)

EXCESS = "excess"
DEFICIT = "deficit"
NEUTRAL = "neutral"
DEFAULT_EPSILON = 0.05


def classify(contribution: float, observed: float, expected: float, epsilon: float = DEFAULT_EPSILON) -> str:
    """Label a bicluster by how its joint probability compares to independence.

    Zero-traffic cells are neutral. ``contribution`` is accepted for
    symmetry with report rows; the decision uses the probabilities.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if observed <= 0:
        return NEUTRAL
    if observed > expected * (1 + epsilon):
        return EXCESS
    if observed < expected * (1 - epsilon):
        return DEFICIT
    return NEUTRAL


def classify_counts(joint: int, row: int, col: int, total: int, epsilon: float = DEFAULT_EPSILON) -> str:
    """Exact-arithmetic version of :func:`classify` on integer counts."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if joint <= 0:
        return NEUTRAL
    observed = int(joint) * int(total)
    expected = int(row) * int(col)
    eps = Fraction(epsilon)
    if observed > expected * (1 + eps):
        return EXCESS
    if observed < expected * (1 - eps):
        return DEFICIT
    return NEUTRAL


@dataclass
class ContributionReport:
    blocks: np.ndarray          # joint counts, source clusters x column clusters
    contributions: np.ndarray   # nats
    labels: np.ndarray          # excess / deficit / neutral
    epsilon: float

    @property
    def total(self) -> int:
        return int(self.blocks.sum())

    @property
    def joint(self) -> np.ndarray:
        return self.blocks / self.total

    @property
    def row_probabilities(self) -> np.ndarray:
        return self.blocks.sum(axis=1) / self.total

    @property
    def column_probabilities(self) -> np.ndarray:
        return self.blocks.sum(axis=0) / self.total

    @property
    def mutual_information(self) -> float:
        # MI is non-negative; a negative sum can only be rounding
        return max(math.fsum(self.contributions.ravel().tolist()), 0.0)

    def in_bits(self) -> np.ndarray:
        return self.contributions / math.log(2)

    def rows(self):
        """Yield ``(source_cluster, column_cluster, joint_count, contribution, label)``."""
        ks, kc = self.blocks.shape
        for i in range(ks):
            for j in range(kc):
                yield i, j, int(self.blocks[i, j]), float(self.contributions[i, j]), str(self.labels[i, j])


def contributions_from_blocks(blocks, epsilon: float = DEFAULT_EPSILON) -> ContributionReport:
    """Per-cell terms p(i,j) ln(p(i,j) / (p(i) p(j))) of a count table (0 ln 0 = 0)."""
    blocks = np.asarray(blocks, dtype=np.int64)
    m = int(blocks.sum())
    if m < 1:
        raise ValueError("contingency table is empty")
    rows = blocks.sum(axis=1)
    cols = blocks.sum(axis=0)
    contrib = np.zeros(blocks.shape)
    nz = blocks > 0
    i, j = np.nonzero(nz)
    b = blocks[nz].astype(np.float64)
    contrib[nz] = b / m * (np.log(b) + math.log(m) - np.log(rows[i]) - np.log(cols[j]))
    # exactly independent cells contribute exactly zero (checked in integer arithmetic)
    for a, c in zip(i.tolist(), j.tolist()):
        if int(blocks[a, c]) * m == int(rows[a]) * int(cols[c]):
            contrib[a, c] = 0.0
    labels = np.empty(blocks.shape, dtype=object)
    for a in range(blocks.shape[0]):
        for c in range(blocks.shape[1]):
            labels[a, c] = classify_counts(blocks[a, c], rows[a], cols[c], m, epsilon)
    return ContributionReport(blocks, contrib, labels, epsilon)


def mi_contributions(model: CoclusterModel, corpus: EventCorpus, epsilon: float = DEFAULT_EPSILON) -> ContributionReport:
    """Mutual-information contribution of every (source cluster, column cluster) pair."""
    stats = block_stats(model, problem_for(corpus, model.kind))
    return contributions_from_blocks(stats.blocks, epsilon)


@dataclass
class EntityRecord:
    label: str
    cluster: int | None
    contribution: float | None
    classification: str | None
    size: float
    lat: float | None = None
    lon: float | None = None


def entity_report(report: ContributionReport, model: CoclusterModel, corpus: EventCorpus,
                  coordinates: CoordinateTable | None, focus: int) -> tuple[list[EntityRecord], int]:
    """Per-entity view of one focus cluster's contributions.

    For a spatial model the focus is a source cluster and the entities are
    destinations; for a temporal model the focus is a time segment and the
    entities are sources. Entities without coordinates are skipped; the
    number skipped is returned alongside the records.
    """
    if model.kind == SPATIAL:
        if not 0 <= focus < model.k_sources:
            raise ValueError(f"no source cluster {focus}")
        names, labels = corpus.destinations, model.destination_clusters
        traffic = corpus.destination_marginals
        contrib, klass = report.contributions[focus], report.labels[focus]
    else:
        if not 0 <= focus < model.k_columns:
            raise ValueError(f"no time segment {focus}")
        names, labels = corpus.sources, model.source_clusters
        traffic = corpus.source_marginals
        contrib, klass = report.contributions[:, focus], report.labels[:, focus]
    records, skipped = [], 0
    for idx, name in enumerate(names):
        lat = lon = None
        if coordinates is not None:
            if name not in coordinates:
                skipped += 1
                continue
            lat, lon = coordinates[name]
        cluster = int(labels[idx])
        if cluster < 0:
            records.append(EntityRecord(name, None, 0.0, NEUTRAL, 0.0, lat, lon))
            continue
        records.append(EntityRecord(name, cluster, float(contrib[cluster]), str(klass[cluster]),
                                    math.log1p(int(traffic[idx])), lat, lon))
    if skipped:
        logger.warning("%d entities without coordinates skipped", skipped)
    return records, skipped


def cluster_map(model: CoclusterModel, corpus: EventCorpus, coordinates: CoordinateTable) -> tuple[list[EntityRecord], int]:
    """Source entities with their cluster only (no focus cluster)."""
    records, skipped = [], 0
    for idx, name in enumerate(corpus.sources):
        if name not in coordinates:
            skipped += 1
            continue
        lat, lon = coordinates[name]
        cluster = int(model.source_clusters[idx])
        records.append(EntityRecord(name, cluster if cluster >= 0 else None, None, None,
                                    math.log1p(int(corpus.source_marginals[idx])), lat, lon))
    return records, skipped


def calendar_report(model: TemporalModel, corpus: EventCorpus,
                    epsilon: float = DEFAULT_EPSILON) -> tuple[list[str], np.ndarray]:
    """Excess/deficit label for every (source cluster, observed day).

    Returns the day labels and a ``k_sources x n_days`` array of labels.
    """
    if not isinstance(model, TemporalModel):
        raise ValueError("calendar reports need a temporal model")
    report = mi_contributions(model, corpus, epsilon)
    days = [corpus.timestamp_label(t) for t in range(corpus.n_timestamps)]
    grid = report.labels[:, model.time_segments]
    return days, grid
