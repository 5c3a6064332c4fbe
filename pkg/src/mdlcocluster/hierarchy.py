"""Agglomerative coarsening of a fitted model down to the null model."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import EventCorpus
from .criterion import SOURCES, CoclusterModel, canonical_labels, model_cost, problem_for
from .optimizer import FitResult, MergeEngine


class CutError(ValueError):
    pass


def informativity_rate(model_cost: float, null_cost: float, best_cost: float) -> float:
    """Position of a model's cost between the null model (0) and the best model (1).

    Returns 0 when the best model is no cheaper than the null model.
    """
    if not best_cost < null_cost:
        return 0.0
    return float(model_cost - null_cost) / float(best_cost - null_cost) + 0.0


@dataclass
class MergeStep:
    axis: str
    a: int
    b: int
    cost: float
    tau: float
    k_sources: int
    k_columns: int

    @property
    def clusters(self) -> int:
        return self.k_sources * self.k_columns


@dataclass
class MergeDendrogram:
    """Merge history from the fitted model (leaves) to the null model (root).

    Cluster ids in steps refer to the leaf model's ids; a merge keeps the
    smaller id.
    """

    leaf: CoclusterModel
    best_cost: float
    null_cost: float
    steps: list[MergeStep] = field(default_factory=list)

    @property
    def kind(self) -> str:
        return self.leaf.kind

    @property
    def leaf_tau(self) -> float:
        return informativity_rate(self.best_cost, self.null_cost, self.best_cost)

    def labels_at(self, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
        """Raw (non-compact) leaf-id labels after replaying ``n_steps`` merges."""
        if not 0 <= n_steps <= len(self.steps):
            raise IndexError(f"dendrogram has {len(self.steps)} steps")
        rows = self.leaf.source_clusters.copy()
        cols = self.leaf.column_clusters.copy()
        for step in self.steps[:n_steps]:
            labels = rows if step.axis == SOURCES else cols
            labels[labels == step.b] = step.a
        return rows, cols

    def model_at(self, n_steps: int) -> CoclusterModel:
        rows, cols = self.labels_at(n_steps)
        model = type(self.leaf)(canonical_labels(rows), canonical_labels(cols))
        model.cost = self.best_cost if n_steps == 0 else self.steps[n_steps - 1].cost
        return model

    def points(self) -> list[tuple[int, float, float]]:
        """``(clusters, tau, cost)`` for the leaf model then after every merge."""
        leaf = (self.leaf.k_sources * self.leaf.k_columns, self.leaf_tau, self.best_cost)
        return [leaf] + [(s.clusters, s.tau, s.cost) for s in self.steps]


def coarsen(result: FitResult | CoclusterModel, corpus: EventCorpus, tol: float = 1e-9) -> MergeDendrogram:
    """Greedily apply the least costly merge (any axis) until the null model."""
    model = result.model if isinstance(result, FitResult) else result
    problem = problem_for(corpus, model.kind)
    best_cost = model_cost(model, corpus) if model.cost is None else model.cost
    null = problem.null_model()
    null_cost = result.null_cost if isinstance(result, FitResult) else model_cost(null, corpus)
    leaf = type(model)(model.source_clusters, model.column_clusters, cost=best_cost)
    dendrogram = MergeDendrogram(leaf, best_cost, null_cost)
    if model.k_sources == 1 and model.k_columns == 1:
        return dendrogram
    engine = MergeEngine(problem, model.source_clusters, model.column_clusters)
    engine.cost = best_cost

    def record(axis, a, b, cost, k0, k1):
        if k0 == 1 and k1 == 1:
            cost = null_cost
        dendrogram.steps.append(MergeStep(axis, int(a), int(b), float(cost),
                                          informativity_rate(cost, null_cost, best_cost), k0, k1))

    engine.run(tol, until_null=True, on_step=record)
    return dendrogram


def informativity_curve(dendrogram: MergeDendrogram) -> list[tuple[int, float]]:
    """``(number of biclusters, tau)`` along the dendrogram."""
    return [(k, tau) for k, tau, _ in dendrogram.points()]


def cut(dendrogram: MergeDendrogram, tau: float | None = None, clusters: int | None = None,
        sources: int | None = None, columns: int | None = None) -> CoclusterModel:
    """Return an intermediate model of the dendrogram.

    ``tau``: the coarsest model whose informativity rate is at least
    ``tau``. ``clusters`` (biclusters), ``sources`` or
    ``columns``: the first model whose count reaches the target.
    """
    given = [v is not None for v in (tau, clusters, sources, columns)]
    if sum(given) != 1:
        raise CutError("give exactly one of tau, clusters, sources, columns")
    if tau is not None:
        if tau > 1:
            raise CutError("target informativity rate must be <= 1")
        index = 0
        for i, step in enumerate(dendrogram.steps, start=1):
            if step.tau >= tau:
                index = i
        return dendrogram.model_at(index)
    leaf = dendrogram.leaf
    counts = [(leaf.k_sources, leaf.k_columns)] + [(s.k_sources, s.k_columns) for s in dendrogram.steps]
    if clusters is not None:
        values, target, name = [a * b for a, b in counts], clusters, "bicluster"
    elif sources is not None:
        values, target, name = [a for a, _ in counts], sources, "source cluster"
    else:
        values, target, name = [b for _, b in counts], columns, f"{leaf.column_axis} cluster"
    if target < 1:
        raise CutError("target count must be >= 1")
    for i, v in enumerate(values):
        if v == target:
            return dendrogram.model_at(i)
        if v < target:
            break
    nearest = min(values, key=lambda v: (abs(v - target), v))
    raise CutError(f"no model with {target} {name}s; nearest achievable is {nearest}")
