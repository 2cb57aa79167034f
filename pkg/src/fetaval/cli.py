"""Command-line entry point: ``fetaval {evaluate,rank,report,synth}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation. Logs go to stderr; data goes to files only.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .engine import (EngineConfig, EvaluationFailed, EvaluationRun, PenaltyPolicy,
                     apply_penalties, evaluate_manifest)
from .errors import FetaEvalError, InvariantViolation, SubsetError
from .ranking import RANKING_KINDS, TIE_MODES, bootstrap_stability, ranking
from .report import (provenance, render_global_table, render_per_tissue_topology,
                     render_summary, render_topology_table, write_ranking, write_records,
                     write_text)
from .subset import SubsetFilter
from .synth import ERRORS, build_synthetic_challenge
from .volume_io import INSTITUTIONS, SR_METHODS, TISSUES, load_manifest

log = logging.getLogger("fetaval")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _jobs(value) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("jobs must be >= 1")
    return n


def _percentile(value) -> float:
    q = float(value)
    if not 0 < q <= 100:
        raise argparse.ArgumentTypeError("percentile must be in (0, 100]")
    return q


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fetaval", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fetaval {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    default_jobs = os.environ.get("FETAVAL_JOBS", "1")

    ev = sub.add_parser("evaluate", help="compute per-record metrics")
    ev.add_argument("--manifest", required=True, type=Path, help="ground-truth manifest CSV")
    ev.add_argument("--predictions", required=True, type=Path, help="team predictions CSV")
    ev.add_argument("--output", required=True, type=Path)
    ev.add_argument("--jobs", type=_jobs, default=default_jobs)
    ev.add_argument("--hd-percentile", type=_percentile, default=95.0)
    ev.add_argument("--connectivity", type=int, choices=(26, 6), default=26)
    ev.add_argument("--penalty-scope", choices=("per_label", "global"), default="per_label")
    ev.add_argument("--hd95-fallback", type=float)
    ev.add_argument("--bne-fallback", type=float)
    ev.add_argument("--permissive-labels", dest="strict_labels", action="store_false",
                    help="map unknown label codes to background instead of failing")
    ev.add_argument("--skip-broken", action="store_true")

    rk = sub.add_parser("rank", help="rankings from a persisted run")
    rk.add_argument("run", type=Path, help="run.json written by 'evaluate'")
    rk.add_argument("--output", required=True, type=Path)
    rk.add_argument("--subset", action="append", default=[],
                    help="key=value[,value][;key=value]; repeatable")
    rk.add_argument("--all-subsets", action="store_true")
    rk.add_argument("--kind", action="append", choices=RANKING_KINDS)
    _ranking_flags(rk, default_jobs)

    rp = sub.add_parser("report", help="full report bundle from a persisted run")
    rp.add_argument("run", type=Path)
    rp.add_argument("--output", required=True, type=Path)
    _ranking_flags(rp, default_jobs)

    sy = sub.add_parser("synth", help="write a synthetic challenge")
    sy.add_argument("--output", required=True, type=Path)
    sy.add_argument("--teams", type=int, default=3)
    sy.add_argument("--cases", type=int, default=4)
    sy.add_argument("--size", type=int, default=32)
    sy.add_argument("--error", action="append", choices=ERRORS,
                    help="error pattern; repeat to assign patterns to teams cyclically")
    sy.add_argument("--tissue", default="WM")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--format", dest="fmt", choices=("nii.gz", "nii", "lv1"), default="nii.gz")
    return p


def _ranking_flags(p, default_jobs):
    p.add_argument("--tie-mode", choices=TIE_MODES, default="shared")
    p.add_argument("--penalty-scope", choices=("per_label", "global"))
    p.add_argument("--hd95-fallback", type=float)
    p.add_argument("--bne-fallback", type=float)
    p.add_argument("--exclude-both-empty", dest="include_both_empty", action="store_false")
    p.add_argument("--bootstrap-b", type=int, default=0, help="bootstrap resamples (0: skip)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_jobs, default=default_jobs)


def _policy(args, run: EvaluationRun | None = None) -> PenaltyPolicy:
    base = dict(run.config.get("penalty", {})) if run is not None else {}
    if getattr(args, "penalty_scope", None):
        base["hd95_scope"] = args.penalty_scope
    if args.hd95_fallback is not None:
        base["hd95_fallback"] = args.hd95_fallback
    if args.bne_fallback is not None:
        base["bne_fallback"] = args.bne_fallback
    return PenaltyPolicy(**base)


def _dump_json(path: Path, obj) -> None:
    write_text(path, json.dumps(obj, indent=2) + "\n")


def cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest, args.predictions)
    if not manifest.team_entries:
        raise UsageError("predictions CSV lists no team entries")
    config = EngineConfig(args.hd_percentile, args.connectivity, args.strict_labels)
    try:
        run, failures = evaluate_manifest(manifest, config, args.jobs, args.skip_broken)
    except EvaluationFailed as exc:
        for f in exc.failures:
            log.error("%s", f)
        return EXIT_DATA
    for f in failures:
        log.warning("skipped: %s", f)
    policy = _policy(args)
    run.config["penalty"] = {"hd95_scope": policy.hd95_scope,
                             "hd95_fallback": policy.hd95_fallback,
                             "bne_fallback": policy.bne_fallback}
    penalized = apply_penalties(run, policy)

    args.output.mkdir(parents=True, exist_ok=True)
    _dump_json(args.output / "run.json", run.to_json())
    write_records(args.output, penalized)
    _dump_json(args.output / "provenance.json",
               provenance(penalized, {"command": "evaluate", "jobs": args.jobs,
                                      "skipped": [str(f) for f in failures]}))
    log.info("evaluated %d records (%d teams x %d cases)", len(run.records), len(run.teams),
             len(run.cases))
    return EXIT_OK


def _load_run(path: Path) -> EvaluationRun:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise FetaEvalError(f"cannot read run file {path}: {exc}") from exc
    return EvaluationRun.from_json(data)


def all_subsets(run: EvaluationRun) -> dict[str, SubsetFilter]:
    """Every analysis subset that selects at least one case."""
    cand = {"all": SubsetFilter()}
    for expr in ("domain=in_domain", "domain=out_of_domain", "quality=3", "quality=2",
                 "quality=1", "pathology=normal", "pathology=pathological"):
        cand[expr] = SubsetFilter.parse(expr)
    for m in sorted(SR_METHODS):
        cand[f"sr_method={m}"] = SubsetFilter.parse(f"sr_method={m}")
    for inst in INSTITUTIONS:
        cand[f"institution={inst}"] = SubsetFilter.parse(f"institution={inst}")
    for t in TISSUES:
        cand[f"tissue={t.name}"] = SubsetFilter.parse(f"tissue={t.name}")
    return {k: s for k, s in cand.items()
            if any(s.match_case(m) for m in run.cases.values())}


def _rank_all(run, args, subsets, kinds, out):
    for name, sub in subsets.items():
        n_cases = sum(1 for m in run.cases.values() if sub.match_case(m))
        if n_cases == 0:
            raise SubsetError(f"subset '{name}' selects zero cases")
        boot = args.bootstrap_b > 0
        if boot and n_cases < 2:
            log.warning("no bootstrap for %s: it selects a single case", name)
            boot = False
        for kind in kinds:
            table = ranking(run, sub, kind, tie_mode=args.tie_mode,
                            include_both_empty=args.include_both_empty)
            write_ranking(out, f"{kind}_{sub.slug()}", table)
            if boot:
                res = bootstrap_stability(run, sub, kind, args.bootstrap_b, args.seed, args.jobs,
                                          tie_mode=args.tie_mode,
                                          include_both_empty=args.include_both_empty)
                _dump_json(out / f"bootstrap_{kind}_{sub.slug()}.json", res.to_json())


def cmd_rank(args) -> int:
    raw = _load_run(args.run)
    run = apply_penalties(raw, _policy(args, raw))
    subsets = {}
    if args.all_subsets:
        subsets.update(all_subsets(run))
    for expr in args.subset:
        try:
            subsets[expr] = SubsetFilter.parse(expr)
        except ValueError as exc:
            raise UsageError(f"--subset {expr!r}: {exc}") from exc
    if not subsets:
        subsets["all"] = SubsetFilter()
    kinds = args.kind or list(RANKING_KINDS)
    args.output.mkdir(parents=True, exist_ok=True)
    _rank_all(run, args, subsets, kinds, args.output)
    _dump_json(args.output / "provenance.json",
               provenance(run, {"command": "rank", "tie_mode": args.tie_mode,
                                "subsets": list(subsets), "kinds": kinds,
                                "include_both_empty": args.include_both_empty}))
    return EXIT_OK


def cmd_report(args) -> int:
    raw = _load_run(args.run)
    run = apply_penalties(raw, _policy(args, raw))
    out = args.output
    out.mkdir(parents=True, exist_ok=True)
    write_records(out, run)
    kw = dict(tie_mode=args.tie_mode, include_both_empty=args.include_both_empty)

    glob = ranking(run, SubsetFilter(), "global", **kw)
    domains = {}
    for d in ("in_domain", "out_of_domain"):
        sub = SubsetFilter.parse(f"domain={d}")
        domains[d] = (ranking(run, sub, "global", **kw)
                      if any(sub.match_case(m) for m in run.cases.values()) else None)
    md, cs = render_global_table(run, glob, domains["in_domain"], domains["out_of_domain"],
                                 args.include_both_empty)
    write_text(out / "global_table.md", md)
    write_text(out / "global_table.csv", cs)
    write_ranking(out, "global_all", glob)
    for d, tab in domains.items():
        if tab is not None:
            write_ranking(out, f"global_domain-{d}", tab)

    bne = ranking(run, SubsetFilter(), "bne", **kw)
    tir = ranking(run, SubsetFilter(), "tir", **kw)
    write_ranking(out, "bne_all", bne)
    write_ranking(out, "tir_all", tir)
    md, cs = render_topology_table(bne, tir, glob)
    write_text(out / "topology_table.md", md)
    write_text(out / "topology_table.csv", cs)

    per_tissue = {t: ranking(run, SubsetFilter(tissues=frozenset([t])), "bne", **kw)
                  for t in TISSUES}
    md, cs = render_per_tissue_topology(per_tissue)
    write_text(out / "tissue_topology_table.md", md)
    write_text(out / "tissue_topology_table.csv", cs)

    subsets = {"all": SubsetFilter()}
    for d in ("in_domain", "out_of_domain"):
        if domains[d] is not None:
            subsets[d] = SubsetFilter.parse(f"domain={d}")
    write_text(out / "summary.md", render_summary(run, subsets, args.include_both_empty))
    if args.bootstrap_b > 0:
        boot = bootstrap_stability(run, SubsetFilter(), "global", args.bootstrap_b, args.seed,
                                   args.jobs, **kw)
        _dump_json(out / "bootstrap_global_all.json", boot.to_json())
    _dump_json(out / "provenance.json",
               provenance(run, {"command": "report", "tie_mode": args.tie_mode,
                                "include_both_empty": args.include_both_empty}))
    return EXIT_OK


def cmd_synth(args) -> int:
    gt_csv, pred_csv = build_synthetic_challenge(args.output, args.teams, args.cases, args.size,
                                                 args.error, args.tissue, args.seed, args.fmt)
    log.info("wrote %s and %s", gt_csv, pred_csv)
    return EXIT_OK


COMMANDS = {"evaluate": cmd_evaluate, "rank": cmd_rank, "report": cmd_report,
            "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except InvariantViolation as exc:
        log.error("internal error: %s", exc)
        return EXIT_INTERNAL
    except (FetaEvalError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
