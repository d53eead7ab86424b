import math

import numpy as np

from topicblocks.partition_counts import (
    count_partitions,
    log_partitions,
    log_q_approx,
    log_q_exact,
)


def brute_force_partitions(m, n):
    """Enumerate partitions of m into exactly n positive nonincreasing parts."""
    if n == 0:
        return 1 if m == 0 else 0
    found = 0

    def rec(rem, parts, cap):
        nonlocal found
        if parts == 0:
            if rem == 0:
                found += 1
            return
        for first in range(1, min(rem, cap) + 1):
            if first * parts >= rem:
                rec(rem - first, parts - 1, first)

    rec(m, n, m)
    return found


def test_matches_brute_force_up_to_30():
    for m in range(0, 31):
        for n in range(0, m + 1):
            assert count_partitions(m, n) == brute_force_partitions(m, n), (m, n)


def test_spot_values():
    assert count_partitions(0, 0) == 1
    assert count_partitions(4, 2) == 2
    assert count_partitions(7, 3) == 4


def test_boundaries():
    assert count_partitions(5, 0) == 0
    assert count_partitions(0, 3) == 0
    assert count_partitions(3, 5) == 0
    assert count_partitions(-1, 1) == 0


def test_log_table_matches_exact_integers():
    worst = 0.0
    for m in range(1, 150):
        for n in range(1, m + 1):
            c = count_partitions(m, n)
            if c:
                worst = max(worst, abs(log_partitions(m, n) - math.log(c)))
    assert worst < 1e-10


def test_log_partitions_zero_cases():
    assert log_partitions(3, 5) == -np.inf
    assert log_partitions(0, 0) == 0.0
    assert log_partitions(6, 6) == 0.0  # all ones is the only split


def test_asymptotic_cross_check_at_boundary():
    """The fast path must agree with the exact recurrence near the default
    size threshold to well under a percent in log."""
    for m, n in [(10000, 5), (10000, 30), (10000, 100), (10000, 300),
                 (10000, 2000), (12000, 64)]:
        exact = log_q_exact(m, n)
        approx = log_q_approx(m, n)
        assert abs(approx - exact) / abs(exact) < 1e-3, (m, n)


def test_exact_limit_switch():
    # forcing a tiny limit routes through the asymptotic, which stays close
    val_exact = log_partitions(5000, 40, exact_limit=10**9)
    val_approx = log_partitions(5000, 40, exact_limit=10)
    assert abs(val_exact - val_approx) / abs(val_exact) < 1e-3
