import json
from dataclasses import replace

import numpy as np
import pytest

import oracles
from helpers import meta, missing, random_run, record
from published_tables import FINAL_RANKING, TOPOLOGY_RANKS
from fetaval.engine import EvaluationRun, apply_penalties
from fetaval.errors import RankingError, StabilityError
from fetaval.ranking import (RankingTable, bootstrap_stability, bne_ranking,
                             check_competition_shape, combine_rankings, competition_ranks,
                             global_ranking, pairwise_significance, rank_by_metric, ranking,
                             topology_integrative_ranking)
from fetaval.subset import SubsetFilter
from fetaval.volume_io import TISSUES, TissueLabel


def test_rank_by_metric_examples():
    assert rank_by_metric({"A": 0.9, "B": 0.8, "C": 0.9}) == {"A": 1, "B": 3, "C": 1}
    assert rank_by_metric({"A": 2.0, "B": 1.0, "C": 2.0}, "lower_better") == \
        {"A": 2, "B": 1, "C": 2}
    assert rank_by_metric({"A": 0.8124, "B": 0.8116}, True, precision=3) == {"A": 1, "B": 1}
    with pytest.raises(RankingError):
        rank_by_metric({"A": float("nan")})
    with pytest.raises(RankingError):
        rank_by_metric({})
    with pytest.raises(ValueError):
        rank_by_metric({"A": 1.0}, "sideways")


def test_combine_examples():
    tab = combine_rankings({"m1": {"A": 1, "B": 2, "C": 3}, "m2": {"A": 3, "B": 2, "C": 1}})
    assert tab.final_ranks() == {"A": 1, "B": 1, "C": 1}
    assert all(t.tied for t in tab.teams)
    broken = combine_rankings({"m1": {"A": 1, "B": 2, "C": 3}, "m2": {"A": 3, "B": 2, "C": 1}},
                              "broken")
    assert broken.final_ranks() == {"A": 1, "B": 2, "C": 3}
    with pytest.raises(RankingError):
        combine_rankings({"m1": {"A": 1}, "m2": {"B": 1}})
    with pytest.raises(ValueError):
        combine_rankings({"m1": {"A": 1}}, "random")


def test_overall_bne_column_reproduction():
    vecs = {k: {t: r[i] for t, r in TOPOLOGY_RANKS.items()}
            for i, k in enumerate(("bne0", "bne1", "bne2"))}
    shared = combine_rankings(vecs, "shared")
    printed = {t: r[3] for t, r in TOPOLOGY_RANKS.items()}
    got = shared.final_ranks()
    diff = {t for t in printed if got[t] != printed[t]}
    assert diff == {"NVAUTO"}
    assert got["FIT_2"] == got["NVAUTO"] == 6
    assert shared["FIT_2"].combined_score == shared["NVAUTO"].combined_score == 20
    assert combine_rankings(vecs, "broken").final_ranks() == printed


def test_final_ranking_top_three():
    vals = {m: {t: r[i] for t, r in FINAL_RANKING.items()}
            for i, m in ((2, "dsc"), (3, "hd95"), (4, "vs"))}
    ranks = {m: rank_by_metric(vals[m], m != "hd95") for m in vals}
    tab = combine_rankings(ranks, "shared", vals)
    assert [t.team_id for t in tab.teams[:3]] == ["FIT_1", "Bluebrune", "FMRSK"]
    assert [(t.final_rank, t.tied) for t in tab.teams[:3]] == [(1, False), (2, True), (2, True)]


def test_competition_rank_matches_oracle(rng):
    for _ in range(200):
        vals = rng.integers(0, 5, rng.integers(1, 10)).astype(float)
        scores = {f"t{i}": v for i, v in enumerate(vals)}
        for hb in (True, False):
            ranks = competition_ranks(scores, hb)
            assert list(ranks.values()) == oracles.competition_rank(list(vals), hb)
            check_competition_shape(ranks)
    with pytest.raises(RankingError):
        check_competition_shape({"a": 1, "b": 3})
    with pytest.raises(RankingError):
        check_competition_shape({"a": 2})


# --- rankings over runs ---

def _toy_run():
    cases = {"c0": meta("c0", 0), "c1": meta("c1", 2)}
    recs = []
    for c in cases:
        for t in TISSUES:
            recs.append(record("good", c, t, dsc=0.9, hd=1.0, vs=0.95, bne=(0, 0, 0)))
            recs.append(record("mid", c, t, dsc=0.8, hd=2.0, vs=0.90, bne=(1, 0, 0)))
            recs.append(record("bad", c, t, dsc=0.7, hd=3.0, vs=0.85, bne=(2, 1, 1)))
    return EvaluationRun(recs, cases)


def test_global_bne_tir():
    run = _toy_run()
    expect = {"good": 1, "mid": 2, "bad": 3}
    for kind in ("global", "bne", "tir"):
        tab = ranking(run, kind=kind)
        assert tab.final_ranks() == expect and tab.kind == kind
    tir = topology_integrative_ranking(run)
    assert tir.constituents == ["dsc", "hd95", "vs", "bne"]
    assert tir["good"].metric_ranks == {"dsc": 1, "hd95": 1, "vs": 1, "bne": 1}
    assert bne_ranking(run)["mid"].metric_values["bne0"] == 1.0
    with pytest.raises(ValueError):
        topology_integrative_ranking(run, composition=("dsc", "volume"))
    with pytest.raises(ValueError):
        ranking(run, kind="elo")


def test_tir_uses_overall_bne_rank_not_components():
    # A has the best BNE sum but is second on every global metric
    cases = {"c0": meta("c0")}
    recs = [record("A", "c0", TissueLabel.WM, dsc=0.8, hd=2.0, vs=0.9, bne=(0, 0, 0)),
            record("B", "c0", TissueLabel.WM, dsc=0.9, hd=1.0, vs=0.95, bne=(1, 1, 1)),
            record("C", "c0", TissueLabel.WM, dsc=0.7, hd=3.0, vs=0.8, bne=(2, 2, 2))]
    tir = topology_integrative_ranking(EvaluationRun(recs, cases))
    assert tir["A"].combined_score == 2 + 2 + 2 + 1
    assert tir["B"].combined_score == 1 + 1 + 1 + 2
    assert tir.final_ranks() == {"B": 1, "A": 2, "C": 3}


def test_unpenalized_run_is_rejected():
    run = _toy_run()
    run.records[0] = missing("bad", "c0", TissueLabel.eCSF)
    with pytest.raises(RankingError):
        global_ranking(run)
    assert global_ranking(apply_penalties(run)).final_ranks()["bad"] == 3


def test_subset_ranking_and_json_round_trip():
    run = _toy_run()
    tab = global_ranking(run, SubsetFilter.parse("domain=out_of_domain;tissue=WM"))
    assert tab.subset == "domain=out_of_domain;tissue=WM"
    assert RankingTable.from_json(json.loads(json.dumps(tab.to_json()))) == tab


def _relabel(run, mapping):
    return EvaluationRun([replace(r, team_id=mapping[r.team_id]) for r in run.records], run.cases)


def test_properties_on_random_pools(rng):
    for _ in range(100):
        run = random_run(rng, int(rng.integers(2, 6)), 3, TISSUES[:2])
        base = global_ranking(run)
        check_competition_shape(base.final_ranks())
        perm = rng.permutation(run.teams)
        mapping = dict(zip(run.teams, perm))
        shuffled = global_ranking(_relabel(run, mapping))
        assert {mapping[t]: r for t, r in base.final_ranks().items()} == shuffled.final_ranks()


def test_increasing_transform_invariance(rng):
    for _ in range(200):
        vals = {f"t{i}": float(v) for i, v in enumerate(rng.uniform(0, 1, rng.integers(2, 9)))}
        for f in (np.exp, lambda x: 3 * x + 7, lambda x: x ** 3, np.arctan):
            assert rank_by_metric({k: f(v) for k, v in vals.items()}) == rank_by_metric(vals)


def test_dominance_gives_rank_one(rng):
    for _ in range(100):
        run = random_run(rng, 4, 3, TISSUES[:2])
        recs = [replace(r, dsc=1.0, vs=1.0, hd95_mm=0.0) if r.team_id == "t2" else r
                for r in run.records]
        assert global_ranking(EvaluationRun(recs, run.cases))["t2"].final_rank == 1


# --- bootstrap ---

def test_bootstrap_determinism_and_shape(rng):
    run = random_run(rng, 3, 5)
    a = bootstrap_stability(run, B=30, seed=7)
    b = bootstrap_stability(run, B=30, seed=7, jobs=4)
    assert np.array_equal(a.rank_frequencies, b.rank_frequencies)
    assert np.array_equal(a.kendall_tau, b.kendall_tau, equal_nan=True)
    assert a.rank_frequencies.shape == (3, 3)
    assert np.allclose(a.rank_frequencies.sum(axis=1), 1.0)
    assert a.full_ranks == global_ranking(run).final_ranks()
    json.dumps(a.to_json())


def test_bootstrap_identity_resamples_reproduce_ranking(rng):
    run = random_run(rng, 4, 5)
    res = bootstrap_stability(run, resamples=[np.arange(5)] * 3)
    full = global_ranking(run).final_ranks()
    for i, t in enumerate(res.teams):
        assert res.rank_frequencies[i, full[t] - 1] == 1.0
    assert np.all(res.kendall_tau == 1.0)


def test_bootstrap_recomputes_penalties_per_resample():
    wm = TissueLabel.WM
    cases = {"c0": meta("c0"), "c1": meta("c1", 1)}
    recs = [record("A", "c0", wm, hd=100.0), record("A", "c1", wm, hd=1.0),
            record("B", "c0", wm, hd=2.0), missing("B", "c1", wm)]
    run = apply_penalties(EvaluationRun(recs, cases))
    # resample {c1, c1}: the only finite HD95 is A's 1.0, so B's penalty becomes 2.0
    res = bootstrap_stability(run, kind="global", resamples=[np.array([1, 1])])
    assert res.rank_frequencies[0, 0] == 1.0
    with pytest.raises(StabilityError):
        bootstrap_stability(run, SubsetFilter.parse("institution=Kispi"), B=5)
    with pytest.raises(StabilityError):
        bootstrap_stability(run, B=0)


# --- significance ---

def test_significance():
    wm = TissueLabel.WM
    cases = {f"c{i}": meta(f"c{i}", i) for i in range(12)}
    recs = []
    for i in range(12):
        recs.append(record("A", f"c{i}", wm, dsc=0.9 + 0.001 * i))
        recs.append(record("B", f"c{i}", wm, dsc=0.8))
    run = EvaluationRun(recs, cases)
    res = pairwise_significance(run, "dsc", "A", "B")
    assert res.significant and res.p_value == pytest.approx(1 / 4096)
    assert res.method == "exact"
    assert not pairwise_significance(run, "dsc", "B", "A").significant
    same = pairwise_significance(run, "dsc", "A", "A")
    assert same.degenerate and not same.significant and same.p_value == 1.0
    hd = pairwise_significance(run, "hd95", "A", "B")
    assert hd.degenerate
