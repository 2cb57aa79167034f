"""One-sided Wilcoxon signed-rank test."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateDataError

EXACT_MAX_N = 25


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W+, sum of ranks of positive differences
    p_value: float
    n: int
    method: str


def wilcoxon_greater(diffs) -> WilcoxonResult:
    """Test H1: the differences are shifted above zero.

    Zero differences are discarded. With at most 25 non-zero differences the
    p-value comes from the exact permutation distribution of W+ (mid-ranks
    for ties are handled by working in doubled ranks); above that a normal
    approximation with tie and continuity correction is used.
    """
    d = np.asarray(diffs, dtype=np.float64)
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise DegenerateDataError("all paired differences are zero")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())

    if n <= EXACT_MAX_N:
        doubled = np.rint(2 * ranks).astype(int)
        total = int(doubled.sum())
        # counts[s] = number of sign assignments whose positive doubled-rank sum is s
        counts = np.zeros(total + 1, dtype=object)
        counts[0] = 1
        for r in doubled:
            shifted = np.zeros_like(counts)
            shifted[r:] = counts[: total + 1 - r]
            counts = counts + shifted
        obs = int(round(2 * w_plus))
        p = sum(counts[obs:]) / (2 ** n)
        return WilcoxonResult(w_plus, float(p), n, "exact")

    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(((tie_counts ** 3) - tie_counts).sum()) / 48.0
    z = (w_plus - mean - 0.5) / math.sqrt(var)
    p = 0.5 * math.erfc(z / math.sqrt(2.0))
    return WilcoxonResult(w_plus, float(p), n, "normal")
