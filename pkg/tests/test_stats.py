import numpy as np
import pytest
from scipy import stats as sps

from fetaval.errors import DegenerateDataError
from fetaval.stats import wilcoxon_greater


def test_all_zero_is_degenerate():
    with pytest.raises(DegenerateDataError):
        wilcoxon_greater([0.0, 0.0])


def test_exact_small_examples():
    assert wilcoxon_greater([1.0]).p_value == 0.5
    assert wilcoxon_greater([1.0, 2.0, 3.0]).p_value == 1 / 8
    r = wilcoxon_greater([-1.0, 2.0, 3.0])
    assert r.statistic == 5.0 and r.p_value == 2 / 8


def test_exact_matches_scipy_without_ties(rng):
    for n in (5, 10, 20, 25):
        for _ in range(20):
            d = rng.normal(0.2, 1.0, n)
            ours = wilcoxon_greater(d)
            ref = sps.wilcoxon(d, alternative="greater", method="exact")
            assert ours.method == "exact"
            assert ours.statistic == pytest.approx(ref.statistic)
            assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def test_exact_with_ties_matches_enumeration(rng):
    for _ in range(30):
        d = rng.integers(-3, 4, 10).astype(float)
        if not np.any(d):
            continue
        nz = d[d != 0]
        ranks = sps.rankdata(np.abs(nz))
        obs = ranks[nz > 0].sum()
        n = len(nz)
        hits = 0
        for mask in range(2 ** n):
            s = sum(ranks[i] for i in range(n) if mask >> i & 1)
            hits += s >= obs - 1e-9
        assert wilcoxon_greater(d).p_value == pytest.approx(hits / 2 ** n, rel=1e-12)


def test_normal_approximation_matches_scipy(rng):
    for _ in range(20):
        d = np.round(rng.normal(0.1, 1.0, 60), 1)
        ours = wilcoxon_greater(d)
        ref = sps.wilcoxon(d, alternative="greater", method="approx", correction=True,
                           zero_method="wilcox")
        assert ours.method == "normal"
        assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9)
