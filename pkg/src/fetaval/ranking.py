"""Rank-then-sum challenge rankings, bootstrap stability and paired tests."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import kendalltau

from .engine import (HIGHER_BETTER, EvaluationRun, PenaltyPolicy, aggregate_records,
                     penalize_records, select, strip_penalties)
from .errors import DegenerateDataError, RankingError, StabilityError
from .stats import wilcoxon_greater
from .subset import SubsetFilter

TIE_MODES = ("shared", "broken")
GLOBAL_METRICS = ("dsc", "hd95", "vs")
BNE_METRICS = ("bne0", "bne1", "bne2")
TIR_COMPOSITION = ("dsc", "hd95", "vs", "bne")
RANKING_KINDS = ("global", "bne", "tir")


@dataclass
class TeamRanking:
    team_id: str
    metric_values: dict[str, float]
    metric_ranks: dict[str, int]
    combined_score: int
    final_rank: int
    tied: bool

    def to_json(self) -> dict:
        return {
            "team_id": self.team_id,
            "metric_values": dict(self.metric_values),
            "metric_ranks": dict(self.metric_ranks),
            "combined_score": self.combined_score,
            "final_rank": self.final_rank,
            "tied": self.tied,
        }


@dataclass
class RankingTable:
    subset: str
    tie_mode: str
    constituents: list[str]
    teams: list[TeamRanking] = field(default_factory=list)
    kind: str = ""

    def __getitem__(self, team_id: str) -> TeamRanking:
        for t in self.teams:
            if t.team_id == team_id:
                return t
        raise KeyError(team_id)

    def final_ranks(self) -> dict[str, int]:
        return {t.team_id: t.final_rank for t in self.teams}

    def to_json(self) -> dict:
        return {
            "subset": self.subset,
            "kind": self.kind,
            "tie_mode": self.tie_mode,
            "constituents": list(self.constituents),
            "teams": [t.to_json() for t in self.teams],
        }

    @classmethod
    def from_json(cls, d: dict) -> "RankingTable":
        teams = [TeamRanking(t["team_id"], t["metric_values"], t["metric_ranks"],
                             t["combined_score"], t["final_rank"], t["tied"]) for t in d["teams"]]
        return cls(d["subset"], d["tie_mode"], list(d["constituents"]), teams, d.get("kind", ""))


def competition_ranks(scores: dict[str, float], higher_better: bool) -> dict[str, int]:
    """1 + number of teams with a strictly better score ("1, 2, 2, 4")."""
    vals = list(scores.values())
    if higher_better:
        return {t: 1 + sum(v > s for v in vals) for t, s in scores.items()}
    return {t: 1 + sum(v < s for v in vals) for t, s in scores.items()}


def rank_by_metric(aggregates: dict[str, float], direction="higher_better",
                   precision: int | None = None) -> dict[str, int]:
    if not aggregates:
        raise RankingError("nothing to rank")
    if isinstance(direction, bool):
        higher = direction
    elif direction in ("higher_better", "lower_better"):
        higher = direction == "higher_better"
    else:
        raise ValueError(f"direction must be higher_better or lower_better, got {direction!r}")
    scores = {}
    for team, v in aggregates.items():
        v = float(v)
        if not math.isfinite(v):
            raise RankingError(f"non-finite aggregate for team {team!r}; resolve penalties first")
        scores[team] = round(v, precision) if precision is not None else v
    return competition_ranks(scores, higher)


def combine_rankings(rank_vectors: dict[str, dict[str, int]], tie_mode: str = "shared",
                     metric_values: dict[str, dict[str, float]] | None = None,
                     subset: str = "all", kind: str = "") -> RankingTable:
    """Sum constituent ranks per team and rank the sums (lower is better).

    In ``broken`` mode equal sums are ordered by mean constituent rank, then
    by ``team_id``; ``tied`` still marks every team whose sum was shared.
    """
    if tie_mode not in TIE_MODES:
        raise ValueError(f"tie_mode must be one of {TIE_MODES}, got {tie_mode!r}")
    if not rank_vectors:
        raise RankingError("no rank vectors to combine")
    names = list(rank_vectors)
    team_set = set(rank_vectors[names[0]])
    for name in names[1:]:
        if set(rank_vectors[name]) != team_set:
            raise RankingError(f"rank vector {name!r} covers a different team set")
    if not team_set:
        raise RankingError("rank vectors are empty")

    sums = {t: sum(int(rank_vectors[n][t]) for n in names) for t in team_set}
    counts: dict[int, int] = {}
    for s in sums.values():
        counts[s] = counts.get(s, 0) + 1

    if tie_mode == "shared":
        final = competition_ranks(sums, higher_better=False)
    else:
        order = sorted(team_set, key=lambda t: (sums[t], sums[t] / len(names), t))
        final = {t: i + 1 for i, t in enumerate(order)}

    metric_values = metric_values or {}
    rows = [
        TeamRanking(
            team_id=t,
            metric_values={n: metric_values[n][t] for n in names if n in metric_values},
            metric_ranks={n: int(rank_vectors[n][t]) for n in names},
            combined_score=sums[t],
            final_rank=final[t],
            tied=counts[sums[t]] > 1,
        )
        for t in team_set
    ]
    rows.sort(key=lambda r: (r.final_rank, r.team_id))
    return RankingTable(subset, tie_mode, names, rows, kind)


def check_competition_shape(ranks: dict[str, int]) -> None:
    """Raise if ``ranks`` is not a valid competition ranking."""
    vals = sorted(ranks.values())
    if not vals or vals[0] != 1:
        raise RankingError("competition ranking must contain rank 1")
    for r in set(vals):
        better = sum(v < r for v in vals)
        if better != r - 1:
            raise RankingError(f"rank {r} has {better} teams ahead of it")


# --- rankings over an evaluation run ---

def _metric_table(records, cases, subset, metrics, include_both_empty, teams, precision):
    values, ranks = {}, {}
    for m in metrics:
        agg = aggregate_records(records, cases, subset, m, include_both_empty, teams)
        values[m] = {t: a.mean for t, a in agg.items()}
        ranks[m] = rank_by_metric(values[m], HIGHER_BETTER[m], precision)
    return values, ranks


def _rank_records(records, cases, subset, kind, tie_mode="shared", include_both_empty=True,
                  precision=None, composition=TIR_COMPOSITION, teams=None):
    teams = teams if teams is not None else sorted({r.team_id for r in records})
    desc = subset.describe()
    if kind == "global":
        values, ranks = _metric_table(records, cases, subset, GLOBAL_METRICS,
                                      include_both_empty, teams, precision)
        return combine_rankings(ranks, tie_mode, values, desc, "global")
    if kind == "bne":
        values, ranks = _metric_table(records, cases, subset, BNE_METRICS,
                                      include_both_empty, teams, precision)
        return combine_rankings(ranks, tie_mode, values, desc, "bne")
    if kind == "tir":
        base = [m for m in composition if m != "bne"]
        values, ranks = _metric_table(records, cases, subset, base, include_both_empty,
                                      teams, precision)
        if "bne" in composition:
            bne = _rank_records(records, cases, subset, "bne", tie_mode, include_both_empty,
                                precision, teams=teams)
            values["bne"] = {t.team_id: float(t.combined_score) for t in bne.teams}
            ranks["bne"] = bne.final_ranks()
        ordered = {m: ranks[m] for m in composition}
        return combine_rankings(ordered, tie_mode, values, desc, "tir")
    raise ValueError(f"unknown ranking kind {kind!r}; choose from {RANKING_KINDS}")


def _require_penalized(run: EvaluationRun):
    if not run.penalized:
        raise RankingError("run has unresolved missing values; apply penalties first")


def global_ranking(run: EvaluationRun, subset: SubsetFilter = SubsetFilter(),
                   tie_mode: str = "shared", include_both_empty: bool = True,
                   precision: int | None = None) -> RankingTable:
    _require_penalized(run)
    return _rank_records(run.records, run.cases, subset, "global", tie_mode,
                         include_both_empty, precision, teams=run.teams)


def bne_ranking(run: EvaluationRun, subset: SubsetFilter = SubsetFilter(),
                tie_mode: str = "shared", include_both_empty: bool = True,
                precision: int | None = None) -> RankingTable:
    _require_penalized(run)
    return _rank_records(run.records, run.cases, subset, "bne", tie_mode,
                         include_both_empty, precision, teams=run.teams)


def topology_integrative_ranking(run: EvaluationRun, subset: SubsetFilter = SubsetFilter(),
                                 tie_mode: str = "shared", include_both_empty: bool = True,
                                 precision: int | None = None,
                                 composition=TIR_COMPOSITION) -> RankingTable:
    """Rank-sum over DSC, HD95, VS and the overall BNE rank by default."""
    _require_penalized(run)
    unknown = set(composition) - set(GLOBAL_METRICS) - set(BNE_METRICS) - {"bne"}
    if unknown or not composition:
        raise ValueError(f"bad TIR composition {composition!r}")
    return _rank_records(run.records, run.cases, subset, "tir", tie_mode, include_both_empty,
                         precision, tuple(composition), teams=run.teams)


def ranking(run, subset=SubsetFilter(), kind="global", **kw) -> RankingTable:
    fn = {"global": global_ranking, "bne": bne_ranking, "tir": topology_integrative_ranking}
    try:
        return fn[kind](run, subset, **kw)
    except KeyError:
        raise ValueError(f"unknown ranking kind {kind!r}") from None


# --- bootstrap ---

RNG_ALGORITHM = "numpy.random.PCG64 seeded by SeedSequence([seed, resample_index])"


@dataclass
class BootstrapResult:
    teams: list[str]
    full_ranks: dict[str, int]
    rank_frequencies: np.ndarray  # [team, rank-1] -> fraction of resamples
    kendall_tau: np.ndarray
    B: int
    seed: int
    algorithm: str = RNG_ALGORITHM

    def to_json(self) -> dict:
        return {
            "teams": self.teams,
            "full_ranks": self.full_ranks,
            "rank_frequencies": self.rank_frequencies.tolist(),
            "kendall_tau": [None if math.isnan(x) else x for x in self.kendall_tau.tolist()],
            "B": self.B,
            "seed": self.seed,
            "algorithm": self.algorithm,
        }


def _resample_indices(seed: int, b: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
    return rng.integers(0, n, size=n)


def bootstrap_stability(run: EvaluationRun, subset: SubsetFilter = SubsetFilter(),
                        kind: str = "global", B: int = 1000, seed: int = 0, jobs: int = 1,
                        policy: PenaltyPolicy | None = None, tie_mode: str = "shared",
                        include_both_empty: bool = True, resamples=None) -> BootstrapResult:
    """Case-level bootstrap of a ranking.

    Each resample draws cases with replacement, re-derives the pool-relative
    penalties on the drawn pool and recomputes the ranking. ``resamples`` may
    supply explicit index arrays (into the sorted selected case ids) instead
    of drawing them.
    """
    if B < 1:
        raise StabilityError("B must be at least 1")
    if policy is None:
        policy = PenaltyPolicy(**run.config.get("penalty", {}))
    case_ids = sorted(c for c, m in run.cases.items() if subset.match_case(m))
    if len(case_ids) < 2:
        raise StabilityError(f"subset '{subset.describe()}' selects {len(case_ids)} case(s); "
                             f"bootstrap needs at least 2")
    teams = run.teams
    raw = strip_penalties(run.records)
    by_case: dict[str, list] = {}
    for r in raw:
        by_case.setdefault(r.case_id, []).append(r)

    full = _rank_records(penalize_records(raw, policy), run.cases, subset, kind, tie_mode,
                         include_both_empty, teams=teams).final_ranks()
    n = len(case_ids)

    def one(b):
        idx = resamples[b] if resamples is not None else _resample_indices(seed, b, n)
        recs, cases = [], {}
        for j, i in enumerate(idx):
            cid = case_ids[int(i)]
            key = f"{cid}#{j}"
            cases[key] = run.cases[cid]
            recs.extend(_rename(r, key) for r in by_case.get(cid, []))
        table = _rank_records(penalize_records(recs, policy), cases, subset, kind, tie_mode,
                              include_both_empty, teams=teams)
        return table.final_ranks()

    if resamples is not None:
        B = len(resamples)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(one, range(B)))
    else:
        results = [one(b) for b in range(B)]

    T = len(teams)
    freq = np.zeros((T, T))
    taus = np.empty(B)
    full_vec = [full[t] for t in teams]
    for b, ranks in enumerate(results):
        vec = [ranks[t] for t in teams]
        for i, r in enumerate(vec):
            freq[i, r - 1] += 1
        if T < 2 or len(set(vec)) < 2 or len(set(full_vec)) < 2:
            taus[b] = 1.0 if vec == full_vec else math.nan
        else:
            taus[b] = kendalltau(full_vec, vec).statistic
    return BootstrapResult(teams, full, freq / B, taus, B, seed)


def _rename(r, case_id):
    return replace(r, case_id=case_id)


# --- significance ---

@dataclass(frozen=True)
class SignificanceResult:
    significant: bool
    p_value: float
    n: int
    method: str
    degenerate: bool = False
    test: str = "one-sided Wilcoxon signed-rank"


def per_case_means(run: EvaluationRun, metric: str, team: str,
                   subset: SubsetFilter = SubsetFilter()) -> dict[str, float]:
    acc: dict[str, list[float]] = {}
    for r in select(run.records, run.cases, subset):
        if r.team_id != team:
            continue
        v = r.value(metric)
        if v is None:
            raise RankingError("resolve penalties before significance testing")
        acc.setdefault(r.case_id, []).append(v)
    return {c: float(np.mean(v)) for c, v in sorted(acc.items())}


def pairwise_significance(run: EvaluationRun, metric: str, team_a: str, team_b: str,
                          alpha: float = 0.05,
                          subset: SubsetFilter = SubsetFilter()) -> SignificanceResult:
    """Is ``team_a`` significantly better than ``team_b`` on per-case means?"""
    a = per_case_means(run, metric, team_a, subset)
    b = per_case_means(run, metric, team_b, subset)
    if not a or set(a) != set(b):
        raise RankingError(f"teams {team_a!r} and {team_b!r} were not evaluated on the same cases")
    diffs = np.array([a[c] - b[c] for c in a])
    if not HIGHER_BETTER[metric]:
        diffs = -diffs
    try:
        res = wilcoxon_greater(diffs)
    except DegenerateDataError:
        return SignificanceResult(False, 1.0, 0, "none", degenerate=True)
    return SignificanceResult(res.p_value < alpha, res.p_value, res.n, res.method)
