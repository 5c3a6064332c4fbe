import contextlib
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mdlcocluster import synth  # noqa: E402


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


class _Check:
    detail = ""


@pytest.fixture
def acceptance(request):
    """Context manager recording one PASS/FAIL line per acceptance criterion."""

    @contextlib.contextmanager
    def criterion(number, title):
        check = _Check()
        try:
            yield check
        except BaseException as exc:
            line = f"criterion {number}: FAIL {title} ({check.detail or type(exc).__name__}: {str(exc)[:200]})"
            raise
        else:
            line = f"criterion {number}: PASS {title} ({check.detail})"
        finally:
            print(line)
            request.config.stash[ACCEPTANCE].append(line)

    return criterion


@pytest.fixture
def two_block():
    return synth.two_block()


@pytest.fixture
def two_regime():
    return synth.two_regime()


def random_spatial_matrix(seed, max_n=4):
    """Seeded small count matrix with every row and column active."""
    rng = np.random.default_rng(seed)
    n_s, n_c = rng.integers(2, max_n + 1, size=2)
    if seed % 2:
        rows, cols = rng.integers(0, 2, n_s), rng.integers(0, 2, n_c)
        mat = rng.poisson(rng.uniform(0, 15, size=(2, 2))[rows][:, cols])
    else:
        mat = rng.poisson(rng.uniform(0.5, 10), size=(n_s, n_c))
    mat[mat.sum(axis=1) == 0, 0] += 1
    mat[0, mat.sum(axis=0) == 0] += 1
    return mat


def random_temporal_matrix(seed, max_sources=4, max_days=6):
    rng = np.random.default_rng(seed)
    n_s, n_t = rng.integers(1, max_sources + 1), rng.integers(1, max_days + 1)
    if seed % 2:
        rows = rng.integers(0, 2, n_s)
        split = (np.arange(n_t) >= rng.integers(0, n_t + 1)).astype(int)
        mat = rng.poisson(rng.uniform(0, 15, size=(2, 2))[rows][:, split])
    else:
        mat = rng.poisson(rng.uniform(0.5, 10), size=(n_s, n_t))
    mat[mat.sum(axis=1) == 0, 0] += 1
    mat[0, mat.sum(axis=0) == 0] += 1
    return mat


def random_model(corpus, kind, rng):
    """A random valid model of the given kind over the corpus's active entities."""
    from mdlcocluster.criterion import SpatialModel, TemporalModel, canonical_labels, problem_for

    problem = problem_for(corpus, kind)

    def part(active, k_max):
        labels = np.full(len(active), -1)
        n = int(active.sum())
        labels[active] = rng.integers(0, rng.integers(1, min(k_max, n) + 1), size=n)
        return canonical_labels(labels)

    rows = part(problem.row_active, 5)
    if kind == "spatial":
        return SpatialModel(rows, part(problem.col_active, 5))
    n_t = len(problem.col_active)
    cuts = np.zeros(n_t, dtype=int)
    if n_t > 1:
        cuts[1:] = rng.random(n_t - 1) < 0.4
    return TemporalModel(rows, np.cumsum(cuts))
