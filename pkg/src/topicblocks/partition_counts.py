"""Restricted integer partition counts.

`count_partitions(m, n)` is the number of ways to write the integer m as a
sum of exactly n positive integers, ignoring order.  It obeys the recurrence

    p(m, n) = p(m - n, n) + p(m - 1, n - 1)

with p(0, 0) = 1 and p(m, n) = 0 whenever m <= 0 or n <= 0 otherwise.  The
quantity enters the degree priors of the microcanonical block model, where a
uniform distribution over degree histograms contributes a -log p(m, n) term.

Exact values are kept in two forms: arbitrary-precision integers (for small
arguments and for verification) and a float table of natural logs built with
the equivalent "at most n parts" recurrence

    q(m, n) = q(m, n - 1) + q(m - n, n),        p(m, n) = q(m - n, n),

which vectorizes as a strided running log-sum-exp.  Above a size threshold
the log is produced by the Szekeres asymptotic for q(m, n), which is accurate
to well under a percent in log there; the test suite cross-checks the two
paths at the boundary.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import spence

from .util import log_binom, log_factorial

# q-arguments above this use the asymptotic instead of the exact log table
EXACT_LIMIT = 10_000

_int_rows: list[list[int]] = [[1]]  # _int_rows[m][n] = p(m, n) for n <= m


def count_partitions(m: int, n: int) -> int:
    """Number of partitions of m into exactly n positive parts (exact integer).

    Out-of-range arguments return 0, matching the recurrence boundaries.
    """
    if m < 0 or n < 0 or n > m:
        return 0
    if m == 0:
        return 1 if n == 0 else 0
    if n == 0:
        return 0
    _grow_int_table(m)
    return _int_rows[m][n]


def _grow_int_table(m_max: int) -> None:
    # bottom-up fill keeps arbitrary-precision ints and avoids deep recursion
    for m in range(len(_int_rows), m_max + 1):
        row = [0] * (m + 1)
        row[m] = 1  # all parts equal to one
        prev = _int_rows[m - 1]
        for n in range(1, m):
            below = _int_rows[m - n][n] if n <= m - n else 0
            row[n] = below + (prev[n - 1] if n - 1 <= m - 1 else 0)
        _int_rows.append(row)


class _LogQTable:
    """Lazily grown table of log q(m, n), partitions of m into at most n parts."""

    def __init__(self):
        self._tab = None
        self._kmax = 0
        self._mmax = -1

    def value(self, m: int, k: int) -> float:
        k = min(k, m)
        if m == 0:
            return 0.0
        if k <= 0:
            return -np.inf
        self._ensure(k, m)
        return float(self._tab[k, m])

    def _ensure(self, k: int, m: int) -> None:
        if k <= self._kmax and m <= self._mmax:
            return
        kmax = max(k, self._kmax, 16)
        mmax = max(m, self._mmax, 256)
        # geometric growth amortizes rebuilds
        if k > self._kmax:
            kmax = max(kmax, 2 * self._kmax)
        if m > self._mmax:
            mmax = max(mmax, 2 * self._mmax)
        tab = np.full((kmax + 1, mmax + 1), -np.inf)
        tab[0, 0] = 0.0
        tab[1, :] = 0.0
        for kk in range(2, kmax + 1):
            prev = tab[kk - 1]
            pad = (-(mmax + 1)) % kk
            blocks = np.concatenate([prev, np.full(pad, -np.inf)]).reshape(-1, kk)
            tab[kk] = np.logaddexp.accumulate(blocks, axis=0).reshape(-1)[: mmax + 1]
        self._tab = tab
        self._kmax = kmax
        self._mmax = mmax


_logq = _LogQTable()


def _szekeres_v(u: float, epsilon: float = 1e-10) -> float:
    v = u
    for _ in range(1000):
        nv = u * math.sqrt(spence(math.exp(-v)))
        if abs(nv - v) < epsilon:
            return nv
        v = nv
    return v


def log_q_approx(m: int, k: int) -> float:
    """Asymptotic log q(m, k): partitions of m into at most k parts."""
    if m == 0:
        return 0.0
    if k <= 0:
        return -np.inf
    k = min(k, m)
    if k < m ** 0.25:
        # few parts: nearly all part multisets are distinct orderings
        return float(log_binom(m - 1, k - 1) - log_factorial(k))
    u = k / math.sqrt(m)
    v = _szekeres_v(u)
    lf = (
        math.log(v)
        - 0.5 * math.log1p(-math.exp(-v) * (1.0 + u * u / 2.0))
        - 1.5 * math.log(2.0)
        - math.log(u)
        - math.log(math.pi)
    )
    g = 2.0 * v / u - u * math.log1p(-math.exp(-v))
    return lf - math.log(m) + math.sqrt(m) * g


def log_q_exact(m: int, k: int) -> float:
    """log q(m, k) from the exact recurrence table (any size; may be slow)."""
    if m < 0 or k < 0:
        return -np.inf
    return _logq.value(m, k)


import functools


@functools.lru_cache(maxsize=1 << 20)
def _log_partitions_cached(m: int, n: int, limit: int) -> float:
    if m < 0 or n < 0 or n > m:
        return -np.inf
    if m == 0:
        return 0.0 if n == 0 else -np.inf
    if n == 0:
        return -np.inf
    mm = m - n
    if mm == 0:
        return 0.0
    if mm <= limit:
        return log_q_exact(mm, n)
    return log_q_approx(mm, min(n, mm))


def log_partitions(m: int, n: int, exact_limit: int | None = None) -> float:
    """log p(m, n) for partitions of m into exactly n positive parts.

    Uses the exact table while the reduced argument m - n stays at or below
    `exact_limit` (module default EXACT_LIMIT), and the Szekeres asymptotic
    beyond it.  Returns -inf where p(m, n) = 0.  Values are memoized.
    """
    limit = EXACT_LIMIT if exact_limit is None else exact_limit
    return _log_partitions_cached(int(m), int(n), int(limit))
