"""Surface voxels and percentile Hausdorff distance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyMaskError, ShapeError


@dataclass(frozen=True, eq=False)
class SurfacePointSet:
    """Voxel-centre coordinates (mm) of the 6-connected boundary of a mask."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return len(self.points)


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Boolean grid of foreground voxels with a 6-neighbour outside the mask.

    The grid boundary counts as outside.
    """
    m = np.asarray(mask, dtype=bool)
    p = np.pad(m, 1)
    interior = (
        p[:-2, 1:-1, 1:-1] & p[2:, 1:-1, 1:-1]
        & p[1:-1, :-2, 1:-1] & p[1:-1, 2:, 1:-1]
        & p[1:-1, 1:-1, :-2] & p[1:-1, 1:-1, 2:]
    )
    return m & ~interior


def extract_surface(mask, spacing=None, offset=(0, 0, 0)) -> SurfacePointSet:
    data = getattr(mask, "data", mask)
    if spacing is None:
        spacing = getattr(mask, "spacing", (1.0, 1.0, 1.0))
    surf = surface_voxels(data)
    idx = np.argwhere(surf)
    if len(idx) == 0:
        raise EmptyMaskError("cannot extract the surface of an empty mask")
    return SurfacePointSet((idx + np.asarray(offset)) * np.asarray(spacing, dtype=np.float64))


def directed_distances(src: SurfacePointSet, dst: SurfacePointSet) -> np.ndarray:
    """Distance from every point of ``src`` to its nearest point in ``dst``."""
    if src.count == 0 or dst.count == 0:
        raise EmptyMaskError("directed distance between empty point sets")
    dist, _ = cKDTree(dst.points).query(src.points, k=1)
    return np.asarray(dist, dtype=np.float64)


def hd95(pred: SurfacePointSet, gt: SurfacePointSet, percentile: float = 95.0) -> float:
    """Symmetric robust Hausdorff distance (max of the two directed percentiles)."""
    if not 0 < percentile <= 100:
        raise ValueError(f"percentile must be in (0, 100], got {percentile}")
    a = np.percentile(directed_distances(pred, gt), percentile)
    b = np.percentile(directed_distances(gt, pred), percentile)
    return float(max(a, b))


def hd95_masks(pred, gt, spacing=None, percentile: float = 95.0) -> float:
    """HD95 between two non-empty masks, cropped to their joint bounding box.

    Surface voxels shared by both masks contribute exact zeros, so only the
    non-shared ones are queried against the other surface.
    """
    if not 0 < percentile <= 100:
        raise ValueError(f"percentile must be in (0, 100], got {percentile}")
    p = np.asarray(getattr(pred, "data", pred), dtype=bool)
    g = np.asarray(getattr(gt, "data", gt), dtype=bool)
    if p.shape != g.shape:
        raise ShapeError(f"mask shapes differ: {p.shape} vs {g.shape}")
    if spacing is None:
        spacing = getattr(gt, "spacing", (1.0, 1.0, 1.0))
    box = bounding_box(p | g)
    if box is None:
        raise EmptyMaskError("both masks are empty")
    sp, sg = surface_voxels(p[box]), surface_voxels(g[box])
    if not sp.any() or not sg.any():
        raise EmptyMaskError("cannot measure distance to an empty mask")
    shared = sp & sg
    n_shared = int(np.count_nonzero(shared))
    scale = np.asarray(spacing, dtype=np.float64)
    tree_p = cKDTree(np.argwhere(sp) * scale)
    tree_g = cKDTree(np.argwhere(sg) * scale)
    out = []
    for only, tree in ((sp & ~shared, tree_g), (sg & ~shared, tree_p)):
        d = np.zeros(n_shared + int(np.count_nonzero(only)))
        if len(d) > n_shared:
            d[n_shared:], _ = tree.query(np.argwhere(only) * scale, k=1)
        out.append(np.percentile(d, percentile))
    return float(max(out))


def bounding_box(mask: np.ndarray):
    """Tight slice tuple around the foreground, or None when empty."""
    if not mask.any():
        return None
    box = []
    for axis in range(mask.ndim):
        other = tuple(i for i in range(mask.ndim) if i != axis)
        nz = np.flatnonzero(mask.any(axis=other))
        box.append(slice(int(nz[0]), int(nz[-1]) + 1))
    return tuple(box)
