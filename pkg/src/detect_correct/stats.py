"""Welch's unequal-variance t-test from summary statistics."""
from __future__ import annotations

import math

from scipy.stats import t as student_t


def welch_t_test(mean_a, sd_a, n_a, mean_b, sd_b, n_b):
    """Two-sided Welch test; returns ``(t, dof, p)``.

    With both standard deviations zero the statistic is undefined: equal means
    give ``(0, inf, 1)``, different means ``(+-inf, inf, 0)``.
    """
    if n_a < 2 or n_b < 2:
        raise ValueError("each group needs at least two observations")
    if sd_a < 0 or sd_b < 0:
        raise ValueError("standard deviations must be non-negative")
    va, vb = sd_a ** 2 / n_a, sd_b ** 2 / n_b
    se2 = va + vb
    diff = mean_a - mean_b
    if se2 == 0:
        if diff == 0:
            return 0.0, math.inf, 1.0
        return math.copysign(math.inf, diff), math.inf, 0.0
    t_stat = diff / math.sqrt(se2)
    dof = se2 ** 2 / (va ** 2 / (n_a - 1) + vb ** 2 / (n_b - 1))
    p = 2.0 * float(student_t.sf(abs(t_stat), dof))
    return t_stat, dof, min(p, 1.0)
