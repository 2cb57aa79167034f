"""Markdown/CSV/JSON renderings of runs and rankings.

All tables are byte-deterministic: fixed float formats, fixed row order and
no timestamps. Timestamps appear only in ``provenance.json``.
"""
from __future__ import annotations

import csv
import datetime as _dt
import io
import json
from pathlib import Path

from . import __version__
from .engine import EvaluationRun, aggregate, config_hash, records_csv
from .errors import ReportError, SubsetError
from .ranking import RNG_ALGORITHM, RankingTable
from .subset import SubsetFilter
from .volume_io import TISSUES, TissueLabel


def _md(header: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def _csv(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def rank_cell(entry, table: RankingTable) -> str:
    star = "*" if entry.tied and table.tie_mode == "shared" else ""
    return f"{entry.final_rank}{star}"


def _mean_std(mean: float, std: float) -> str:
    return f"{mean:.3f} ± {std:.2f}"


def _check_teams(*tables):
    teams = [sorted(t.team_id for t in tab.teams) for tab in tables if tab is not None]
    if any(t != teams[0] for t in teams[1:]):
        raise ReportError("rankings cover different team sets")


def render_global_table(run: EvaluationRun, global_: RankingTable,
                        in_domain: RankingTable | None = None,
                        out_domain: RankingTable | None = None,
                        include_both_empty: bool = True) -> tuple[str, str]:
    """Final ranking with mean ± std per metric and the two domain rankings."""
    _check_teams(global_, in_domain, out_domain)
    if set(run.teams) != {t.team_id for t in global_.teams}:
        raise ReportError("global ranking does not match the run's teams")
    subset = SubsetFilter.parse(global_.subset)
    aggs = {m: aggregate(run, subset, m, include_both_empty) for m in ("dsc", "hd95", "vs")}
    for t in global_.teams:
        for m in ("dsc", "hd95", "vs"):
            if m in t.metric_values and t.metric_values[m] != aggs[m][t.team_id].mean:
                raise ReportError(f"{m} mean of {t.team_id} disagrees with the run")
    header = ["GLOBAL RANKING", "TEAM NAME", "DSC", "HD95", "VS", "IN-DOMAIN RANKING",
              "OUT-OF-DOMAIN RANKING"]
    rows = []
    for t in global_.teams:
        row = [rank_cell(t, global_), t.team_id]
        for m in ("dsc", "hd95", "vs"):
            a = aggs[m][t.team_id]
            row.append(_mean_std(a.mean, a.std))
        for tab in (in_domain, out_domain):
            row.append("-" if tab is None else rank_cell(tab[t.team_id], tab))
        rows.append(row)
    md = _md(header, rows)
    if global_.tie_mode == "shared" and any(t.tied for t in global_.teams):
        md += "\n*Tied\n"
    elif global_.tie_mode == "broken":
        md += "\nTies broken by mean constituent rank, then team id.\n"
    return md, _csv(header, rows)


def render_ranking(table: RankingTable) -> tuple[str, str, str]:
    """(json, csv, markdown) for one ranking table."""
    header = ["rank", "team_id"]
    for c in table.constituents:
        header += [f"{c}_value", f"{c}_rank"]
    header.append("combined_score")
    rows = []
    for t in table.teams:
        row = [rank_cell(t, table), t.team_id]
        for c in table.constituents:
            v = t.metric_values.get(c)
            row += ["" if v is None else f"{v:.6g}", str(t.metric_ranks[c])]
        row.append(str(t.combined_score))
        rows.append(row)
    js = json.dumps(table.to_json(), indent=2) + "\n"
    md = f"Ranking ({table.kind or 'combined'}; subset: {table.subset}; ties: {table.tie_mode})\n\n"
    return js, _csv(header, rows), md + _md(header, rows)


def render_topology_table(bne: RankingTable, tir: RankingTable,
                          global_: RankingTable) -> tuple[str, str]:
    """Per-dimension BNE ranks, overall BNE, TIR and the standard ranking."""
    _check_teams(bne, tir, global_)
    header = ["TEAM NAME", "BNE0", "BNE1", "BNE2", "BNE", "TIR", "GLOBAL"]
    rows = []
    for team in sorted(t.team_id for t in bne.teams):
        b = bne[team]
        rows.append([team, *(str(b.metric_ranks[k]) for k in ("bne0", "bne1", "bne2")),
                     rank_cell(b, bne), rank_cell(tir[team], tir),
                     rank_cell(global_[team], global_)])
    return _md(header, rows), _csv(header, rows)


def tissue_rank_means(ranks: dict[str, dict]) -> dict[str, float]:
    """Arithmetic mean of each team's per-tissue ranks."""
    return {team: sum(r.values()) / len(r) for team, r in ranks.items()}


def render_per_tissue_topology(per_tissue: dict) -> tuple[str, str]:
    """Team x tissue rank matrix with the row mean (one decimal)."""
    tissues = [TissueLabel.parse(t) for t in per_tissue]
    missing = [t.name for t in TISSUES if t not in tissues]
    if missing:
        raise ReportError(f"per-tissue topology table is missing tissues {missing}")
    tables = {TissueLabel.parse(k): v for k, v in per_tissue.items()}
    _check_teams(*tables.values())
    teams = sorted(t.team_id for t in tables[TISSUES[0]].teams)
    ranks = {team: {t: tables[t][team].final_rank for t in TISSUES} for team in teams}
    means = tissue_rank_means(ranks)
    header = ["TEAM NAME", *(t.name for t in TISSUES), "AVERAGE"]
    rows = [[team, *(str(ranks[team][t]) for t in TISSUES), f"{means[team]:.1f}"]
            for team in teams]
    return _md(header, rows), _csv(header, rows)


def render_summary(run: EvaluationRun, subsets: dict[str, SubsetFilter],
                   include_both_empty: bool = True) -> str:
    """Per-tissue, per-subset mean ± std matrices for every metric."""
    out = ["# Summary", ""]
    for name, sub in subsets.items():
        for metric in ("dsc", "hd95", "vs", "bne0", "bne1", "bne2"):
            rows = {team: [] for team in run.teams}
            try:
                for tissue in TISSUES:
                    s = SubsetFilter(**{**sub.__dict__, "tissues": frozenset([tissue])})
                    agg = aggregate(run, s, metric, include_both_empty)
                    for team, a in agg.items():
                        rows[team].append(_mean_std(a.mean, a.std))
            except SubsetError:
                continue
            out.append(f"## {metric}: {name}")
            out.append("")
            out.append(_md(["team", *(t.name for t in TISSUES)],
                           [[team, *cells] for team, cells in rows.items()]))
    return "\n".join(out)


def provenance(run: EvaluationRun, extra: dict | None = None) -> dict:
    pen = run.config.get("penalty", {})
    d = {
        "tool": "fetaval",
        "tool_version": __version__,
        "config": run.config,
        "config_hash": config_hash(run.config),
        "penalty_scope": pen.get("hd95_scope", "per_label"),
        "aggregation": "flat mean over (case, tissue) records; population std",
        "surface_model": "6-connected boundary voxel centres, unweighted",
        "significance_test": "one-sided Wilcoxon signed-rank",
        "bootstrap_rng": RNG_ALGORITHM,
        "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        d.update(extra)
    return d


def write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def write_ranking(out_dir: Path, name: str, table: RankingTable) -> None:
    js, cs, md = render_ranking(table)
    write_text(out_dir / f"ranking_{name}.json", js)
    write_text(out_dir / f"ranking_{name}.csv", cs)
    write_text(out_dir / f"ranking_{name}.md", md)


def write_records(out_dir: Path, run: EvaluationRun) -> None:
    write_text(out_dir / "records.csv", records_csv(run.records))
