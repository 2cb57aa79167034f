"""Per-case metric evaluation, pool-relative penalties and team aggregation.

Execution is two-phase: every (team, case) pair is evaluated first, with
missing values left as ``None``; :func:`apply_penalties` then fills them from
the completed pool. Aggregation requires a fully penalized run.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import __version__
from .errors import FetaEvalError, PolicyError, SubsetError
from .overlap import dice, overlap_counts, volume_similarity
from .subset import SubsetFilter
from .surface import hd95_masks
from .topology import EXPECTED_TOPOLOGY, BettiTriple, BneTriple, betti_number_error, betti_numbers
from .volume_io import (TISSUES, CaseMetadata, LabelVolume, Manifest, TissueLabel,
                        check_same_grid, load_label_volume)

log = logging.getLogger(__name__)

FLAGS = ("prediction_missing", "gt_empty", "both_empty", "penalized_hd95", "penalized_bne")
METRICS = ("dsc", "hd95", "vs", "bne0", "bne1", "bne2")
HIGHER_BETTER = {"dsc": True, "vs": True, "hd95": False, "bne0": False, "bne1": False,
                 "bne2": False}


@dataclass(frozen=True)
class MetricRecord:
    team_id: str
    case_id: str
    tissue: TissueLabel
    dsc: float
    hd95_mm: float | None
    vs: float
    betti: BettiTriple | None
    bne: BneTriple | None
    flags: frozenset = frozenset()

    def value(self, metric: str) -> float | None:
        if metric == "dsc":
            return self.dsc
        if metric == "vs":
            return self.vs
        if metric == "hd95":
            return self.hd95_mm
        if metric in ("bne0", "bne1", "bne2"):
            return None if self.bne is None else self.bne[int(metric[-1])]
        raise ValueError(f"unknown metric {metric!r}")

    @property
    def resolved(self) -> bool:
        return self.hd95_mm is not None and self.bne is not None

    def to_json(self) -> dict:
        return {
            "team_id": self.team_id, "case_id": self.case_id, "tissue": int(self.tissue),
            "dsc": self.dsc, "hd95_mm": self.hd95_mm, "vs": self.vs,
            "betti": None if self.betti is None else list(self.betti),
            "bne": None if self.bne is None else list(self.bne),
            "flags": sorted(self.flags),
        }

    @classmethod
    def from_json(cls, d: dict) -> "MetricRecord":
        return cls(
            team_id=d["team_id"], case_id=d["case_id"], tissue=TissueLabel(d["tissue"]),
            dsc=float(d["dsc"]),
            hd95_mm=None if d["hd95_mm"] is None else float(d["hd95_mm"]),
            vs=float(d["vs"]),
            betti=None if d["betti"] is None else BettiTriple(*map(int, d["betti"])),
            bne=None if d["bne"] is None else BneTriple(*map(float, d["bne"])),
            flags=frozenset(d["flags"]),
        )


@dataclass(frozen=True)
class EngineConfig:
    hd_percentile: float = 95.0
    connectivity: int = 26
    strict_labels: bool = True

    def __post_init__(self):
        if not 0 < self.hd_percentile <= 100:
            raise ValueError(f"hd_percentile must be in (0, 100], got {self.hd_percentile}")
        if self.connectivity not in (6, 26):
            raise ValueError(f"connectivity must be 26 or 6, got {self.connectivity}")


@dataclass(frozen=True)
class PenaltyPolicy:
    """Missing values become twice the worst finite value of the pool.

    ``hd95_scope`` chooses the HD95 pool: the same tissue (``per_label``) or
    every record (``global``). BNE pools are always per tissue and dimension.
    The fallbacks replace the doubled value when the pool has no usable
    (finite, nonzero) worst value.
    """

    hd95_scope: str = "per_label"
    hd95_fallback: float | None = None
    bne_fallback: float | None = None

    def __post_init__(self):
        if self.hd95_scope not in ("per_label", "global"):
            raise ValueError(f"hd95_scope must be per_label or global, got {self.hd95_scope!r}")


@dataclass
class EvaluationRun:
    records: list[MetricRecord]
    cases: dict[str, CaseMetadata]
    config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def teams(self) -> list[str]:
        return sorted({r.team_id for r in self.records})

    @property
    def penalized(self) -> bool:
        return all(r.resolved for r in self.records)

    def to_json(self) -> dict:
        return {
            "format": "fetaval-run/1",
            "config": self.config,
            "cases": [self.cases[c].as_row() for c in sorted(self.cases)],
            "records": [r.to_json() for r in self.records],
        }

    @classmethod
    def from_json(cls, d: dict) -> "EvaluationRun":
        if d.get("format") != "fetaval-run/1":
            raise FetaEvalError(f"not a fetaval run file (format={d.get('format')!r})")
        cases = {row["case_id"]: CaseMetadata.from_row(row) for row in d["cases"]}
        records = [MetricRecord.from_json(r) for r in d["records"]]
        return cls(records, cases, d.get("config", {}), d.get("provenance", {}))


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# --- phase 1 ---

def _union_box(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return tuple(slice(min(x.start, y.start), max(x.stop, y.stop)) for x, y in zip(a, b))


def evaluate_case(pred: LabelVolume, gt: LabelVolume, meta: CaseMetadata | None = None,
                  team_id: str = "", config: EngineConfig = EngineConfig()) -> list[MetricRecord]:
    """Seven records for one prediction, penalties unresolved."""
    check_same_grid(pred, gt)
    case_id = meta.case_id if meta is not None else gt.case_id
    spacing = gt.spacing
    gboxes = ndimage.find_objects(gt.voxels, max_label=7)
    pboxes = ndimage.find_objects(pred.voxels, max_label=7)

    records = []
    for tissue in TISSUES:
        code = int(tissue)
        box = _union_box(gboxes[code - 1], pboxes[code - 1])
        flags = set()
        if box is None:
            flags.update(("gt_empty", "both_empty"))
            records.append(MetricRecord(team_id, case_id, tissue, 1.0, 0.0, 1.0,
                                        BettiTriple(0, 0, 0), BneTriple(0.0, 0.0, 0.0),
                                        frozenset(flags)))
            continue
        g = gt.voxels[box] == code
        p = pred.voxels[box] == code
        counts = overlap_counts(p, g)
        d, v = dice(counts), volume_similarity(counts)
        g_empty = gboxes[code - 1] is None
        p_empty = pboxes[code - 1] is None

        hd = betti = bne = None
        if g_empty:
            flags.add("gt_empty")
        if p_empty:
            flags.add("prediction_missing")
        else:
            betti = betti_numbers(p, config.connectivity)
            bne = betti_number_error(betti, tissue, EXPECTED_TOPOLOGY)
        if not g_empty and not p_empty:
            hd = hd95_masks(p, g, spacing, config.hd_percentile)
        records.append(MetricRecord(team_id, case_id, tissue, d, hd, v, betti, bne,
                                    frozenset(flags)))
    return records


def _evaluate_case_task(args):
    gt_path, meta, preds, config = args
    out, errors = [], []
    try:
        gt = load_label_volume(gt_path, meta.case_id, strict=config.strict_labels)
    except FetaEvalError as exc:
        return out, [(None, meta.case_id, f"ground truth: {exc}")]
    for team_id, path in preds:
        try:
            pred = load_label_volume(path, meta.case_id, strict=config.strict_labels)
            out.extend(evaluate_case(pred, gt, meta, team_id, config))
        except (FetaEvalError, OSError) as exc:
            errors.append((team_id, meta.case_id, str(exc)))
    return out, errors


@dataclass
class CaseFailure:
    team_id: str | None
    case_id: str
    message: str

    def __str__(self):
        who = f"team {self.team_id}, " if self.team_id else ""
        return f"{who}case {self.case_id}: {self.message}"


class EvaluationFailed(FetaEvalError):
    def __init__(self, failures: list[CaseFailure]):
        self.failures = failures
        super().__init__("; ".join(map(str, failures)))


def evaluate_manifest(manifest: Manifest, config: EngineConfig = EngineConfig(), jobs: int = 1,
                      skip_broken: bool = False) -> tuple[EvaluationRun, list[CaseFailure]]:
    """Phase 1 over every case in the manifest, one worker task per case.

    Every team must supply every case; missing predictions are a hard error.
    """
    teams = manifest.teams
    by_pair = {(t.team_id, t.case_id): t.prediction_path for t in manifest.team_entries}
    failures = []
    tasks = []
    for e in sorted(manifest.gt_entries, key=lambda e: e.case_id):
        preds = []
        for team in teams:
            path = by_pair.get((team, e.case_id))
            if path is None:
                failures.append(CaseFailure(team, e.case_id, "no prediction listed"))
            elif not path.exists():
                failures.append(CaseFailure(team, e.case_id, f"prediction file missing: {path}"))
            else:
                preds.append((team, path))
        tasks.append((e.gt_path, e.meta, preds, config))
    if failures and not skip_broken:
        raise EvaluationFailed(failures)

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_case_task, tasks))
    else:
        results = [_evaluate_case_task(t) for t in tasks]

    broken_cases = {f.case_id for f in failures}
    records = []
    for recs, errs in results:
        failures.extend(CaseFailure(*e) for e in errs)
        if errs:
            broken_cases.add(errs[0][1])
        records.extend(recs)
    if failures and not skip_broken:
        raise EvaluationFailed(failures)
    if broken_cases:
        log.warning("excluding %d broken case(s): %s", len(broken_cases), sorted(broken_cases))
    records = sort_records(r for r in records if r.case_id not in broken_cases)
    cases = {e.case_id: e.meta for e in manifest.gt_entries if e.case_id not in broken_cases}
    cfg = dataclasses.asdict(config)
    run = EvaluationRun(records, cases, cfg, {"tool_version": __version__,
                                              "config_hash": config_hash(cfg)})
    return run, failures


def sort_records(records) -> list[MetricRecord]:
    return sorted(records, key=lambda r: (r.team_id, r.case_id, int(r.tissue)))


# --- phase 2 ---

def strip_penalties(records) -> list[MetricRecord]:
    """Undo a penalty pass so penalties can be recomputed on another pool."""
    out = []
    for r in records:
        if "penalized_hd95" in r.flags or "penalized_bne" in r.flags:
            r = dataclasses.replace(
                r,
                hd95_mm=None if "penalized_hd95" in r.flags else r.hd95_mm,
                bne=None if "penalized_bne" in r.flags else r.bne,
                flags=r.flags - {"penalized_hd95", "penalized_bne"},
            )
        out.append(r)
    return out


def penalize_records(records, policy: PenaltyPolicy = PenaltyPolicy()) -> list[MetricRecord]:
    records = strip_penalties(records)
    finite_hd: dict = {}
    worst_bne: dict = {}
    for r in records:
        if r.hd95_mm is not None:
            key = r.tissue if policy.hd95_scope == "per_label" else None
            finite_hd[key] = max(finite_hd.get(key, 0.0), r.hd95_mm)
        if r.bne is not None:
            cur = worst_bne.get(r.tissue, (0.0, 0.0, 0.0))
            worst_bne[r.tissue] = tuple(max(a, b) for a, b in zip(cur, r.bne))

    out = []
    for r in records:
        if r.resolved:
            out.append(r)
            continue
        flags = set(r.flags)
        hd, bne = r.hd95_mm, r.bne
        if hd is None:
            key = r.tissue if policy.hd95_scope == "per_label" else None
            scope = r.tissue.name if key is not None else "all tissues"
            worst = finite_hd.get(key)
            if worst is not None and worst > 0:
                hd = 2.0 * worst
            elif policy.hd95_fallback is not None:
                hd = float(policy.hd95_fallback)
            else:
                why = "no finite HD95" if worst is None else "only zero HD95 values"
                raise PolicyError(f"cannot penalize missing HD95 ({scope}): pool has {why}; "
                                  f"set an explicit hd95 fallback penalty")
            flags.add("penalized_hd95")
        if bne is None:
            worst = worst_bne.get(r.tissue)
            if worst is None and policy.bne_fallback is None:
                raise PolicyError(f"cannot penalize missing BNE ({r.tissue.name}): no finite "
                                  f"BNE in the pool; set an explicit bne fallback penalty")
            empty_err = betti_number_error(BettiTriple(0, 0, 0), r.tissue)
            vals = []
            for k in range(3):
                w = None if worst is None else worst[k]
                if w is not None and w > 0:
                    vals.append(2.0 * w)
                elif policy.bne_fallback is not None:
                    vals.append(float(policy.bne_fallback))
                else:
                    vals.append(empty_err[k])
            bne = BneTriple(*vals)
            flags.add("penalized_bne")
        out.append(dataclasses.replace(r, hd95_mm=hd, bne=bne, flags=frozenset(flags)))
    return out


def apply_penalties(run: EvaluationRun, policy: PenaltyPolicy = PenaltyPolicy()) -> EvaluationRun:
    records = penalize_records(run.records, policy)
    cfg = dict(run.config, penalty=dataclasses.asdict(policy))
    return EvaluationRun(records, dict(run.cases), cfg, dict(run.provenance))


# --- phase 3 ---

@dataclass(frozen=True)
class Aggregate:
    mean: float
    std: float
    n: int


def select(records, cases: dict[str, CaseMetadata], subset: SubsetFilter,
           include_both_empty: bool = True):
    for r in records:
        if not subset.match_tissue(r.tissue):
            continue
        if not subset.match_case(cases[r.case_id]):
            continue
        if not include_both_empty and "both_empty" in r.flags:
            continue
        yield r


def aggregate(run: EvaluationRun, subset: SubsetFilter = SubsetFilter(), metric: str = "dsc",
              include_both_empty: bool = True, teams=None) -> dict[str, Aggregate]:
    """Flat mean and (population) standard deviation over (case, tissue) records."""
    return aggregate_records(run.records, run.cases, subset, metric, include_both_empty,
                             teams if teams is not None else run.teams)


def aggregate_records(records, cases, subset, metric, include_both_empty=True, teams=None):
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    values: dict[str, list[float]] = {}
    for r in select(records, cases, subset, include_both_empty):
        v = r.value(metric)
        if v is None:
            raise PolicyError(f"unresolved {metric} for team {r.team_id}, case {r.case_id}, "
                              f"{r.tissue.name}: apply penalties before aggregating")
        values.setdefault(r.team_id, []).append(v)
    teams = sorted(values) if teams is None else list(teams)
    out = {}
    for t in teams:
        vals = values.get(t)
        if not vals:
            raise SubsetError(f"subset '{subset.describe()}' selects no records for team {t!r}")
        a = np.asarray(vals, dtype=np.float64)
        out[t] = Aggregate(float(a.mean()), float(a.std()), len(vals))
    return out


# --- record CSV ---

CSV_COLUMNS = ["team_id", "case_id", "tissue", "dsc", "hd95_mm", "vs", "b0", "b1", "b2",
               "bne0", "bne1", "bne2", "flags"]


def _g6(x) -> str:
    return "" if x is None else format(float(x), ".6g")


def records_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sort_records(records):
        betti = r.betti if r.betti is not None else (None, None, None)
        bne = r.bne if r.bne is not None else (None, None, None)
        w.writerow([r.team_id, r.case_id, r.tissue.name, _g6(r.dsc), _g6(r.hd95_mm), _g6(r.vs),
                    *("" if b is None else str(b) for b in betti), *(_g6(e) for e in bne),
                    ";".join(f for f in FLAGS if f in r.flags)])
    return buf.getvalue()

