"""Small builders shared by the engine, ranking and report tests."""
from __future__ import annotations

import numpy as np

from fetaval.engine import EvaluationRun, MetricRecord
from fetaval.topology import BettiTriple, BneTriple
from fetaval.volume_io import TISSUES, CaseMetadata, Domain

SITES = [("Kispi", Domain.in_domain), ("Vienna", Domain.in_domain),
         ("CHUV", Domain.out_of_domain), ("UCSF", Domain.out_of_domain)]


def meta(case_id: str, i: int = 0, quality: int = 2) -> CaseMetadata:
    inst, dom = SITES[i % len(SITES)]
    return CaseMetadata(case_id, inst, dom, 28.0, "normal" if i % 2 == 0 else "pathological",
                        quality, "niftymic")


def record(team, case, tissue, dsc=0.9, hd=1.0, vs=0.95, bne=(0.0, 0.0, 0.0), flags=()):
    return MetricRecord(team, case, tissue, dsc, hd, vs,
                        None if bne is None else BettiTriple(1, 0, 0),
                        None if bne is None else BneTriple(*map(float, bne)), frozenset(flags))


def missing(team, case, tissue):
    return MetricRecord(team, case, tissue, 0.0, None, 0.0, None, None,
                        frozenset({"prediction_missing"}))


def random_run(rng, teams=4, cases=6, tissues=TISSUES) -> EvaluationRun:
    """A complete, resolved run with random metric values."""
    recs = []
    for t in range(teams):
        for c in range(cases):
            for tissue in tissues:
                recs.append(record(f"t{t}", f"c{c}", tissue,
                                   dsc=float(rng.uniform(0.3, 1)), hd=float(rng.uniform(0, 20)),
                                   vs=float(rng.uniform(0.5, 1)),
                                   bne=tuple(float(x) for x in rng.integers(0, 4, 3))))
    return EvaluationRun(recs, {f"c{c}": meta(f"c{c}", c) for c in range(cases)})


def ball_labels(shape, centre, radii_codes):
    """Concentric shells: ``radii_codes`` is [(radius, code), ...] outermost first."""
    idx = np.indices(shape)
    d2 = sum((idx[i] - centre[i]) ** 2 for i in range(3))
    vol = np.zeros(shape, np.uint8)
    for r, code in radii_codes:
        vol[d2 <= r * r] = code
    return vol
