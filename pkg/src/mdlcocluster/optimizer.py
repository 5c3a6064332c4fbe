"""Greedy bottom-up merge optimization with element-move post-optimization."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .combinatorics import log_B_row, log_binomial, log_factorial_table
from .corpus import EventCorpus
from .criterion import (
    SEGMENTS, SOURCES, SPATIAL, TEMPORAL, CoclusterModel, ModelError, Problem,
    canonical_labels, model_cost, problem_for,
)

ProgressFn = Callable[[int, float, int, int], None]


@dataclass
class OptimizerConfig:
    seed: int = 0
    restarts: int = 4
    max_preclusters: int | None = None  # None: max(64, ceil(sqrt(m)))
    post_opt_passes: int = 2
    cost_tolerance: float = 1e-9
    threads: int = 1

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_preclusters is not None and self.max_preclusters < 1:
            raise ValueError("max_preclusters must be >= 1")
        if self.post_opt_passes < 0:
            raise ValueError("post_opt_passes must be >= 0")
        if self.cost_tolerance < 0:
            raise ValueError("cost_tolerance must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def precluster_cap(self, total: int) -> int:
        if self.max_preclusters is not None:
            return self.max_preclusters
        return max(64, math.isqrt(total - 1) + 1 if total > 0 else 1)


@dataclass
class FitResult:
    model: CoclusterModel
    cost: float
    null_cost: float
    restart_costs: list[float]
    trace: list[list[float]]
    wall_time: float = 0.0
    null_selected: bool = False

    @property
    def kind(self) -> str:
        return self.model.kind


class MergeEngine:
    """Cluster-level state supporting exact best-merge selection.

    Row clusters are sources; columns are destinations (spatial) or time
    segments (temporal). For every mergeable pair the engine keeps the
    pair-dependent part of the merge delta in a dense matrix and updates
    it incrementally after each merge.
    """

    def __init__(self, problem: Problem, row_labels: np.ndarray, col_labels: np.ndarray, table=None):
        self.problem = problem
        self.kind = problem.kind
        self.nominal_cols = problem.kind == SPATIAL
        m = problem.total
        size = m + max(problem.n_rows, problem.n_cols) + 2
        self.T = table if table is not None and len(table) >= size else log_factorial_table(size)
        self.row_labels = np.asarray(row_labels, dtype=np.int64).copy()
        self.col_labels = np.asarray(col_labels, dtype=np.int64).copy()
        k0 = int(self.row_labels.max()) + 1
        k1 = int(self.col_labels.max()) + 1
        coo = problem.matrix.tocoo()
        flat = self.row_labels[coo.row] * k1 + self.col_labels[coo.col]
        self.M = np.bincount(flat, weights=coo.data, minlength=k0 * k1).astype(np.int64).reshape(k0, k1)
        self.n0 = np.bincount(self.row_labels[self.row_labels >= 0], minlength=k0).astype(np.int64)
        self.n1 = np.bincount(self.col_labels[self.col_labels >= 0], minlength=k1).astype(np.int64)
        self.c0 = self.M.sum(axis=1)
        self.c1 = self.M.sum(axis=0)
        self.alive0 = np.ones(k0, dtype=bool)
        self.alive1 = np.ones(k1, dtype=bool)
        self.k0, self.k1 = k0, k1
        self.logB0 = log_B_row(problem.n_rows)
        self.logB1 = log_B_row(problem.n_cols) if self.nominal_cols else None
        self.cost = model_cost(self.model(), problem.corpus)
        self.D0 = self._pair_matrix(self.M, self.c0, self.n0, nominal=True)
        self.D1 = self._pair_matrix(self.M.T, self.c1, self.n1, nominal=True) if self.nominal_cols else None

    # --- per-cluster terms -------------------------------------------------
    def _phi(self, counts, sizes, nominal):
        if nominal:
            return self.T[counts + sizes - 1] - self.T[sizes - 1]
        return self.T[counts]

    def _g(self, x, y):
        T = self.T
        return T[x + y] - T[x] - T[y]

    def _g_outer(self, v):
        # the diagonal is unused (always +inf in D); keep its index in range
        total = v[:, None] + v[None, :]
        np.fill_diagonal(total, 0)
        T = self.T
        return T[total] - T[v][:, None] - T[v][None, :]

    def _pair_matrix(self, M, counts, sizes, nominal):
        k = M.shape[0]
        D = np.full((k, k), np.inf)
        phi = self._phi(counts, sizes, nominal)
        for a in range(k - 1):
            supp = np.flatnonzero(M[a])
            rest = M[a + 1:, supp]
            lik = self._g(rest, M[a, supp]).sum(axis=1)
            row = self._phi(counts[a] + counts[a + 1:], sizes[a] + sizes[a + 1:], nominal) - phi[a] - phi[a + 1:] - lik
            D[a, a + 1:] = row
            D[a + 1:, a] = row
        return D

    def _structure(self, k0, k1):
        k = k0 * k1
        value = self.logB0[k0] + log_binomial(self.problem.total + k - 1, k - 1)
        if self.nominal_cols:
            value += self.logB1[k1]
        return value

    # --- candidate selection -----------------------------------------------
    @staticmethod
    def _argmin(D, tol):
        best = D.min()
        if not np.isfinite(best):
            return None, np.inf
        flat = int(np.flatnonzero(D.ravel() <= best + tol)[0])
        a, b = divmod(flat, D.shape[1])
        return (a, b), float(D[a, b])

    def _segment_candidates(self):
        segs = np.flatnonzero(self.alive1)
        if len(segs) < 2:
            return segs, np.empty(0)
        left, right = segs[:-1], segs[1:]
        A, B = self.M[:, left], self.M[:, right]
        T = self.T
        vals = T[self.c1[left] + self.c1[right]] - T[self.c1[left]] - T[self.c1[right]] - self._g(A, B).sum(axis=0)
        return segs, vals

    def best_merge(self, tol: float = 1e-9):
        """Return ``(axis, a, b, delta)`` of the cheapest merge, or None."""
        best = None
        base = self._structure(self.k0, self.k1)
        if self.k0 > 1:
            pair, v = self._argmin(self.D0, tol)
            if pair is not None:
                best = (SOURCES, min(pair), max(pair), v + self._structure(self.k0 - 1, self.k1) - base)
        if self.k1 > 1:
            const = self._structure(self.k0, self.k1 - 1) - base
            if self.nominal_cols:
                pair, v = self._argmin(self.D1, tol)
                cand = (self.problem_col_axis, min(pair), max(pair), v + const) if pair is not None else None
            else:
                segs, vals = self._segment_candidates()
                i = int(np.flatnonzero(vals <= vals.min() + tol)[0])
                cand = (SEGMENTS, int(segs[i]), int(segs[i + 1]), float(vals[i]) + const)
            if cand is not None and (best is None or cand[3] < best[3] - tol):
                best = cand
        return best

    @property
    def problem_col_axis(self):
        return "destinations" if self.nominal_cols else SEGMENTS

    # --- merge application -------------------------------------------------
    def merge(self, axis: str, a: int, b: int, delta: float) -> None:
        keep, gone = min(a, b), max(a, b)
        if axis == SOURCES:
            self._merge_axis(self.M, self.c0, self.n0, self.alive0, self.D0,
                             self.D1 if self.nominal_cols else None, keep, gone, True)
            self.row_labels[self.row_labels == gone] = keep
            self.k0 -= 1
        else:
            MT = self.M.T
            self._merge_axis(MT, self.c1, self.n1, self.alive1, self.D1, self.D0, keep, gone, self.nominal_cols)
            self.col_labels[self.col_labels == gone] = keep
            self.k1 -= 1
        self.cost += delta

    def _merge_axis(self, M, counts, sizes, alive, D_self, D_other, keep, gone, nominal):
        old_keep, old_gone = M[keep].copy(), M[gone].copy()
        union = np.flatnonzero((old_keep > 0) | (old_gone > 0))
        M[keep] += M[gone]
        M[gone] = 0
        counts[keep] += counts[gone]
        counts[gone] = 0
        sizes[keep] += sizes[gone]
        sizes[gone] = 0
        alive[gone] = False
        if D_self is not None:
            D_self[gone, :] = np.inf
            D_self[:, gone] = np.inf
            others = np.flatnonzero(alive)
            others = others[others != keep]
            supp = np.flatnonzero(M[keep])
            lik = self._g(M[np.ix_(others, supp)], M[keep, supp]).sum(axis=1)
            row = (self._phi(counts[keep] + counts[others], sizes[keep] + sizes[others], nominal)
                   - self._phi(counts[keep], sizes[keep], nominal) - self._phi(counts[others], sizes[others], nominal)
                   - lik)
            D_self[keep, others] = row
            D_self[others, keep] = row
        if D_other is not None and len(union):
            # pair likelihoods on the other axis change only within the union support
            x, y, z = old_keep[union], old_gone[union], M[keep, union]
            change = self._g_outer(z) - self._g_outer(x) - self._g_outer(y)
            D_other[np.ix_(union, union)] -= change

    def run(self, tol: float = 1e-9, until_null: bool = False, progress: ProgressFn | None = None,
            on_step: Callable | None = None) -> int:
        """Apply best merges while they decrease the cost (or down to the null model)."""
        steps = 0
        while self.k0 > 1 or self.k1 > 1:
            cand = self.best_merge(tol)
            if cand is None:
                break
            axis, a, b, delta = cand
            if not until_null and delta >= -tol:
                break
            self.merge(axis, a, b, delta)
            steps += 1
            if on_step is not None:
                on_step(axis, a, b, self.cost, self.k0, self.k1)
            if progress is not None:
                progress(steps, self.cost, self.k0, self.k1)
        return steps

    def run_to_best(self, tol: float = 1e-9, progress: ProgressFn | None = None,
                    on_step: Callable | None = None) -> tuple[np.ndarray, np.ndarray, float]:
        """Merge down to the null model; return the labels of the cheapest state seen."""
        best = (self.row_labels.copy(), self.col_labels.copy(), self.cost)

        def watch(axis, a, b, cost, k0, k1):
            nonlocal best
            if cost < best[2] - tol:
                best = (self.row_labels.copy(), self.col_labels.copy(), cost)
            if on_step is not None:
                on_step(axis, a, b, cost, k0, k1)

        self.run(tol, until_null=True, progress=progress, on_step=watch)
        return canonical_labels(best[0]), canonical_labels(best[1]), best[2]

    def model(self) -> CoclusterModel:
        return self.problem.model_class()(canonical_labels(self.row_labels), canonical_labels(self.col_labels))


# --- post-optimization -----------------------------------------------------

def _profiles(problem: Problem, axis_rows: bool, other_labels: np.ndarray, k_other: int) -> np.ndarray:
    coo = problem.matrix.tocoo()
    if axis_rows:
        idx, oth, n = coo.row, coo.col, problem.matrix.shape[0]
    else:
        idx, oth, n = coo.col, coo.row, problem.matrix.shape[1]
    flat = idx * k_other + other_labels[oth]
    return np.bincount(flat, weights=coo.data, minlength=n * k_other).astype(np.int64).reshape(n, k_other)


def _structure_fn(problem: Problem):
    """Return f(k_sources, k_columns) giving the partition-count prior terms."""
    logB0 = log_B_row(problem.n_rows)
    logB1 = log_B_row(problem.n_cols) if problem.kind == SPATIAL else None
    m = problem.total

    def structure(k0, k1):
        k = k0 * k1
        value = logB0[k0] + log_binomial(m + k - 1, k - 1)
        if logB1 is not None:
            value += logB1[k1]
        return value

    return structure


def _move_sweeps(T, problem, labels, other_labels, axis_rows, tol, max_sweeps=50) -> tuple[np.ndarray, float]:
    """Best-improvement single-element reassignment sweeps on a nominal axis.

    Targets are every other existing cluster plus a fresh singleton cluster.
    """
    labels = labels.copy()
    k_self, k_other = int(labels.max()) + 1, int(other_labels.max()) + 1
    n_self = problem.n_rows if axis_rows else problem.n_cols
    structure = _structure_fn(problem)
    if axis_rows:
        def grow_cost(k):
            return structure(k + 1, k_other) - structure(k, k_other)
    else:
        def grow_cost(k):
            return structure(k_other, k + 1) - structure(k_other, k)
    X = _profiles(problem, axis_rows, other_labels, k_other)
    active = np.flatnonzero(labels >= 0)
    M = np.zeros((n_self, k_other), dtype=np.int64)
    np.add.at(M, labels[active], X[active])
    sizes = np.bincount(labels[active], minlength=n_self).astype(np.int64)
    counts = M.sum(axis=1)
    gained = 0.0

    def phi(c, n):
        return T[c + n - 1] - T[n - 1]

    for _ in range(max_sweeps):
        moved = False
        for e in active:
            a = labels[e]
            if sizes[a] == 1:
                continue
            x = X[e]
            nz = np.flatnonzero(x)
            xv = x[nz]
            r = int(xv.sum())
            rem = (phi(counts[a] - r, sizes[a] - 1) - phi(counts[a], sizes[a])
                   - (T[M[a, nz] - xv] - T[M[a, nz]]).sum())
            # candidate targets see the state with e already removed from a
            block = M[:k_self, nz].copy()
            block[a] -= xv
            cnt = counts[:k_self].copy()
            cnt[a] -= r
            sz = sizes[:k_self].copy()
            sz[a] -= 1
            add = phi(cnt + r, sz + 1) - phi(cnt, sz) - (T[block + xv] - T[block]).sum(axis=1)
            delta = rem + add
            delta[a] = np.inf
            b = int(np.argmin(delta))
            best = float(delta[b])
            fresh = rem + T[r] - T[xv].sum() + grow_cost(k_self) if k_self < n_self else np.inf
            if fresh < best - tol:
                b, best = k_self, fresh
            if best < -tol:
                if b == k_self:
                    k_self += 1
                M[a, nz] -= xv
                M[b, nz] += xv
                counts[a] -= r
                counts[b] += r
                sizes[a] -= 1
                sizes[b] += 1
                labels[e] = b
                gained += best
                moved = True
        if not moved:
            break
    return labels, gained


def _boundary_sweeps(T, problem, seg_labels, row_labels, tol, max_sweeps=50) -> tuple[np.ndarray, float]:
    """Shift or insert segment boundaries one timestamp at a time while the cost drops."""
    seg = seg_labels.copy()
    k0 = int(row_labels.max()) + 1
    X = _profiles(problem, False, row_labels, k0)  # timestamps x source clusters
    structure = _structure_fn(problem)
    gained = 0.0

    def stats(seg):
        k1 = int(seg.max()) + 1
        M = np.zeros((k1, k0), dtype=np.int64)
        np.add.at(M, seg, X)
        return M, M.sum(axis=1)

    def block_term(blk):
        return T[blk.sum()] - T[blk].sum()

    for _ in range(max_sweeps):
        moved = False
        M, counts = stats(seg)
        k1 = len(M)
        options = []
        starts = np.flatnonzero(np.r_[True, np.diff(seg) != 0])
        ends = np.r_[starts[1:], len(seg)]
        for s_idx, (lo, hi) in enumerate(zip(starts, ends)):
            if hi - lo < 2:
                continue
            # split segment s_idx before every interior timestamp
            prefix = np.cumsum(X[lo:hi], axis=0)[:-1]
            rest = M[s_idx] - prefix
            base = block_term(M[s_idx])
            split = (T[prefix.sum(axis=1)] - T[prefix].sum(axis=1)
                     + T[rest.sum(axis=1)] - T[rest].sum(axis=1) - base)
            i = int(np.argmin(split))
            delta = float(split[i]) + structure(k0, k1 + 1) - structure(k0, k1)
            new = seg.copy()
            new[lo + i + 1:] += 1
            options.append((delta, new))
        for b in range(k1 - 1):
            for stamp, src, dst in ((starts[b + 1], b + 1, b), (starts[b + 1] - 1, b, b + 1)):
                if ends[src] - starts[src] < 2:
                    continue
                x = X[stamp]
                delta = (block_term(M[src] - x) + block_term(M[dst] + x)
                         - block_term(M[src]) - block_term(M[dst]))
                new = seg.copy()
                new[stamp] = dst
                options.append((float(delta), new))
        if options:
            delta, new = min(options, key=lambda o: o[0])
            if delta < -tol:
                seg = new
                gained += delta
                moved = True
        if not moved:
            break
    return seg, gained


# --- preclustering ---------------------------------------------------------

def _precluster_problem(problem: Problem, axis: str, target_count: int, seed: int = 0,
                        randomized: bool = False) -> np.ndarray:
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    rows = axis == SOURCES
    active = problem.row_active if rows else problem.col_active
    labels = np.full(len(active), -1, dtype=np.int64)
    idx = np.flatnonzero(active)
    n = len(idx)
    if target_count >= n:
        labels[idx] = np.arange(n)
        return labels
    if target_count == 1:
        labels[idx] = 0
        return labels
    traffic = (problem.row_marginals if rows else problem.col_marginals)[idx].astype(np.float64)
    if axis == SEGMENTS:
        if randomized:
            cuts = np.zeros(n, dtype=np.int64)
            cuts[1 + np.random.default_rng(seed).choice(n - 1, size=target_count - 1, replace=False)] = 1
            labels[idx] = np.cumsum(cuts)
            return labels
        # contiguous equal-traffic chunks
        before = np.cumsum(traffic) - traffic
        chunk = np.minimum((before * target_count / traffic.sum()).astype(np.int64), target_count - 1)
        labels[idx] = canonical_labels(chunk)
        return labels
    rng = np.random.default_rng(seed)
    if randomized:
        anchors = np.sort(rng.choice(n, size=target_count, replace=False, p=traffic / traffic.sum()))
    else:
        order = np.lexsort((rng.permutation(n), -traffic))
        anchors = np.sort(order[:target_count])
    mat = problem.matrix if rows else problem.matrix.T.tocsr()
    mat = mat[idx].astype(np.float64)
    norms = np.sqrt(np.asarray(mat.multiply(mat).sum(axis=1)).ravel())
    sims = (mat @ mat[anchors].T).toarray() / np.outer(norms, norms[anchors])
    assign = np.argmax(sims, axis=1)
    assign[anchors] = np.arange(target_count)
    labels[idx] = canonical_labels(assign)
    return labels


def precluster(corpus: EventCorpus, axis: str, target_count: int, seed: int = 0,
               kind: str | None = None) -> np.ndarray:
    """Group one axis into at most ``target_count`` initial clusters.

    The ``target_count`` highest-traffic entities anchor the groups and
    every other entity joins the anchor with the most similar traffic
    profile (cosine). Time is cut into contiguous equal-traffic chunks.
    """
    kind = kind or (TEMPORAL if axis == SEGMENTS else SPATIAL if corpus.has_destinations else TEMPORAL)
    return _precluster_problem(problem_for(corpus, kind), axis, target_count, seed)


# --- fitting ---------------------------------------------------------------

def _optimize_from(problem, rows, cols, config: OptimizerConfig, T, progress=None):
    """Merge phase then alternating move/merge rounds from an initial partition."""
    tol = config.cost_tolerance
    trace = []

    def record(axis, a, b, cost, k0, k1):
        if cost < trace[-1] - tol:
            trace.append(cost)

    engine = MergeEngine(problem, rows, cols, table=T)
    trace.append(engine.cost)
    rows, cols, cost = engine.run_to_best(tol, progress=progress, on_step=record)
    for _ in range(config.post_opt_passes):
        gained = 0.0
        rows, g = _move_sweeps(T, problem, rows, cols, True, tol)
        gained += g
        if problem.kind == SPATIAL:
            cols, g = _move_sweeps(T, problem, cols, rows, False, tol)
        else:
            cols, g = _boundary_sweeps(T, problem, cols, rows, tol)
        gained += g
        if gained >= -tol:
            break
        rows, cols = canonical_labels(rows), canonical_labels(cols)
        engine = MergeEngine(problem, rows, cols, table=T)
        trace.append(engine.cost)
        rows, cols, cost = engine.run_to_best(tol, progress=progress, on_step=record)
    model = problem.model_class()(rows, cols)
    model.cost = model_cost(model, problem.corpus)
    return model, trace


def _fit(corpus: EventCorpus, kind: str, config: OptimizerConfig | None, progress: ProgressFn | None):
    config = config or OptimizerConfig()
    start = time.perf_counter()
    problem = problem_for(corpus, kind)
    m = problem.total
    T = log_factorial_table(m + max(problem.n_rows, problem.n_cols) + 2)
    cap = config.precluster_cap(m)
    col_axis = "destinations" if kind == SPATIAL else SEGMENTS

    def one_run(r):
        seed = config.seed + r
        if r == 0:
            rows = _precluster_problem(problem, SOURCES, cap, seed)
            cols = _precluster_problem(problem, col_axis, cap, seed)
        else:
            # later restarts start from seeded random coarse partitions
            rows = _precluster_problem(problem, SOURCES, min(cap, max(1, -(-problem.n_rows // 2))), seed, True)
            cols = _precluster_problem(problem, col_axis, min(cap, max(1, -(-problem.n_cols // 2))), seed, True)
        return _optimize_from(problem, rows, cols, config, T, progress if r == 0 else None)

    n_runs = config.restarts
    if config.threads > 1 and n_runs > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            runs = list(pool.map(one_run, range(n_runs)))
    else:
        runs = [one_run(r) for r in range(n_runs)]

    null = problem.null_model()
    null.cost = model_cost(null, corpus)

    def key(model):
        return (model.cost, tuple(model.source_clusters.tolist()), tuple(model.column_clusters.tolist()))

    best = runs[0][0]
    for model, _ in runs[1:]:
        if model.cost < best.cost - config.cost_tolerance or (
                abs(model.cost - best.cost) <= config.cost_tolerance and key(model)[1:] < key(best)[1:]):
            best = model
    null_selected = False
    if not best.cost < null.cost - config.cost_tolerance and not best.same_partition(null):
        best, null_selected = null, True
    return FitResult(
        model=best, cost=best.cost, null_cost=null.cost,
        restart_costs=[r[0].cost for r in runs], trace=[r[1] for r in runs],
        wall_time=time.perf_counter() - start, null_selected=null_selected,
    )


def fit_spatial(corpus: EventCorpus, config: OptimizerConfig | None = None,
                progress: ProgressFn | None = None) -> FitResult:
    """Co-cluster sources and destinations."""
    if not corpus.has_destinations:
        raise ModelError("spatial fitting needs destination data")
    return _fit(corpus, SPATIAL, config, progress)


def fit_temporal(corpus: EventCorpus, config: OptimizerConfig | None = None,
                 progress: ProgressFn | None = None) -> FitResult:
    """Co-cluster sources and segment the ordered timestamps."""
    return _fit(corpus, TEMPORAL, config, progress)
