"""Log-scale combinatorial terms used by the coding-length criteria.

All values are natural logarithms.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

EXACT_LIMIT = 64
EXACT_STIRLING_LIMIT = 200

_EXACT_TABLE = np.array([math.log(math.factorial(n)) for n in range(EXACT_LIMIT + 1)])


def log_factorial(n: int) -> float:
    """Return ln(n!)."""
    n = int(n)
    if n < 0:
        raise ValueError(f"log_factorial needs n >= 0, got {n}")
    if n <= EXACT_LIMIT:
        return float(_EXACT_TABLE[n])
    return float(gammaln(n + 1.0))


def log_factorial_array(values) -> np.ndarray:
    """Vectorized ln(n!) over a non-negative integer array."""
    values = np.asarray(values, dtype=np.int64)
    out = gammaln(values + 1.0)
    small = values <= EXACT_LIMIT
    if small.any():
        out[small] = _EXACT_TABLE[values[small]]
    return out


def log_factorial_table(size: int) -> np.ndarray:
    """Table ``T`` with ``T[x] = ln(x!)`` for ``0 <= x < size``."""
    return log_factorial_array(np.arange(max(int(size), 1), dtype=np.int64))


def log_binomial(n: int, k: int) -> float:
    n, k = int(n), int(k)
    if n < 0 or k < 0:
        raise ValueError(f"log_binomial needs non-negative arguments, got ({n}, {k})")
    if k > n:
        raise ValueError(f"log_binomial needs k <= n, got ({n}, {k})")
    if k == 0 or k == n:
        return 0.0
    return log_factorial(n) - log_factorial(k) - log_factorial(n - k)


@lru_cache(maxsize=64)
def _log_partition_counts(n: int) -> np.ndarray:
    """ln B(n, k) for k = 1..n, as an array indexed by k - 1.

    B(n, k) counts the partitions of n labelled items into at most k
    non-empty blocks, i.e. the cumulative sum of Stirling numbers of the
    second kind S(n, 1..k).
    """
    if n <= EXACT_STIRLING_LIMIT:
        row = [1]  # S(1, 1)
        for size in range(2, n + 1):
            new = [0] * size
            for j in range(1, size + 1):
                stay = j * row[j - 1] if j <= size - 1 else 0
                fresh = row[j - 2] if j >= 2 else 0
                new[j - 1] = stay + fresh
            row = new
        out = np.empty(n)
        acc = 0
        for j, s in enumerate(row):
            acc += s
            out[j] = math.log(acc)
        return out
    # log-space Stirling recurrence, one row at a time
    log_j = np.log(np.arange(1, n + 1, dtype=np.float64))
    row = np.array([0.0])
    for size in range(2, n + 1):
        new = np.full(size, -np.inf)
        new[: size - 1] = row + log_j[: size - 1]
        new[1:] = np.logaddexp(new[1:], row)
        row = new
    return np.logaddexp.accumulate(row)


def log_B(n: int, k: int) -> float:
    """ln of the number of partitions of ``n`` items into at most ``k`` blocks."""
    n, k = int(n), int(k)
    if n < 1 or k < 1:
        raise ValueError(f"log_B needs n >= 1 and k >= 1, got ({n}, {k})")
    if k == 1:
        return 0.0
    return float(_log_partition_counts(n)[min(k, n) - 1])


def log_B_row(n: int) -> np.ndarray:
    """Array ``R`` with ``R[k] = ln B(n, k)`` for ``k = 1..n`` (``R[0]`` unused)."""
    row = np.empty(n + 1)
    row[0] = np.nan
    row[1:] = _log_partition_counts(int(n))
    row[1] = 0.0
    return row
