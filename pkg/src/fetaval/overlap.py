"""Voxel overlap counts, Dice and volume similarity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class OverlapCounts:
    tp: int
    fp: int
    fn_: int

    @property
    def both_empty(self) -> bool:
        return self.tp == 0 and self.fp == 0 and self.fn_ == 0


def overlap_counts(pred, gt) -> OverlapCounts:
    p = np.asarray(getattr(pred, "data", pred), dtype=bool)
    g = np.asarray(getattr(gt, "data", gt), dtype=bool)
    if p.shape != g.shape:
        raise ShapeError(f"mask shapes differ: {p.shape} vs {g.shape}")
    tp = int(np.count_nonzero(p & g))
    return OverlapCounts(tp, int(np.count_nonzero(p)) - tp, int(np.count_nonzero(g)) - tp)


def dice(c: OverlapCounts) -> float:
    """2·TP / (2·TP + FP + FN); 1.0 when both masks are empty."""
    denom = 2 * c.tp + c.fp + c.fn_
    if denom == 0:
        return 1.0
    return 2 * c.tp / denom


def volume_similarity(c: OverlapCounts) -> float:
    """1 − |FP − FN| / (2·TP + FP + FN); 1.0 when both masks are empty."""
    denom = 2 * c.tp + c.fp + c.fn_
    if denom == 0:
        return 1.0
    return 1.0 - abs(c.fp - c.fn_) / denom
