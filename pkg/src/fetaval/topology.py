"""Betti numbers of binary voxel masks and Betti-number errors.

Foreground voxels are treated as closed unit cubes, so with the default 26/6
connectivity pair the Euler characteristic is that of the closed cubical
complex they span. ``b0`` and ``b2`` come from component counts, ``b1`` from
the Euler-Poincaré identity ``chi = b0 - b1 + b2``.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import TopologyError
from .surface import bounding_box
from .volume_io import TISSUES, TissueLabel

_RANK = {6: 1, 18: 2, 26: 3}
_DUAL = {26: 6, 6: 26}


class BettiTriple(NamedTuple):
    b0: int
    b1: int
    b2: int


class BneTriple(NamedTuple):
    e0: float
    e1: float
    e2: float


EXPECTED_TOPOLOGY: dict[TissueLabel, BettiTriple] = {
    t: BettiTriple(2 if t == TissueLabel.GM else 1, 0, 0) for t in TISSUES
}


def _structure(connectivity: int) -> np.ndarray:
    try:
        return ndimage.generate_binary_structure(3, _RANK[connectivity])
    except KeyError:
        raise ValueError(f"connectivity must be 6, 18 or 26, got {connectivity}") from None


def connected_components(mask, connectivity: int = 26) -> tuple[int, np.ndarray]:
    data = np.asarray(getattr(mask, "data", mask), dtype=bool)
    labels, n = ndimage.label(data, structure=_structure(connectivity))
    return int(n), labels


def _closed_cells(p: np.ndarray) -> tuple[int, int, int, int]:
    """Unique (vertices, edges, faces, cubes) of the closed complex of ``p``.

    ``p`` must carry a one-voxel background margin on every side. A cell is
    present when any voxel incident to it is foreground.
    """
    n0, n1, n2 = p.shape
    c = int(np.count_nonzero(p))
    # faces normal to axis a: OR of the two voxels on either side
    fx = p[1:, :, :] | p[:-1, :, :]
    fy = p[:, 1:, :] | p[:, :-1, :]
    fz = p[:, :, 1:] | p[:, :, :-1]
    f = int(np.count_nonzero(fx)) + int(np.count_nonzero(fy)) + int(np.count_nonzero(fz))
    # edges along axis a: OR over the 2x2 voxels in the plane normal to a
    ex = fy[:, :, 1:] | fy[:, :, :-1]
    ey = fx[:, :, 1:] | fx[:, :, :-1]
    ez = fx[:, 1:, :] | fx[:, :-1, :]
    e = int(np.count_nonzero(ex)) + int(np.count_nonzero(ey)) + int(np.count_nonzero(ez))
    v = int(np.count_nonzero(ex[1:, :, :] | ex[:-1, :, :]))
    return v, e, f, c


def _open_cells(p: np.ndarray) -> tuple[int, int, int, int]:
    """Cells of the dual complex on voxel centres: a cell exists when all of
    its voxels are foreground (the complex matching 6-connectivity)."""
    v = int(np.count_nonzero(p))
    ax = p[1:, :, :] & p[:-1, :, :]
    ay = p[:, 1:, :] & p[:, :-1, :]
    az = p[:, :, 1:] & p[:, :, :-1]
    e = int(np.count_nonzero(ax)) + int(np.count_nonzero(ay)) + int(np.count_nonzero(az))
    sxy = ax[:, 1:, :] & ax[:, :-1, :]
    sxz = ax[:, :, 1:] & ax[:, :, :-1]
    syz = ay[:, :, 1:] & ay[:, :, :-1]
    f = int(np.count_nonzero(sxy)) + int(np.count_nonzero(sxz)) + int(np.count_nonzero(syz))
    c = int(np.count_nonzero(sxy[:, :, 1:] & sxy[:, :, :-1]))
    return v, e, f, c


def _crop_pad(mask) -> np.ndarray | None:
    data = np.asarray(getattr(mask, "data", mask), dtype=bool)
    box = bounding_box(data)
    if box is None:
        return None
    return np.pad(data[box], 1)


def euler_characteristic(mask, connectivity: int = 26) -> int:
    p = _crop_pad(mask)
    if p is None:
        return 0
    if connectivity == 26:
        v, e, f, c = _closed_cells(p)
    elif connectivity == 6:
        v, e, f, c = _open_cells(p)
    else:
        raise ValueError(f"Euler characteristic needs connectivity 26 or 6, got {connectivity}")
    return v - e + f - c


def betti_numbers(mask, connectivity: int = 26) -> BettiTriple:
    """(components, tunnels, cavities) of a 3D binary mask.

    ``connectivity`` is the foreground adjacency; the background uses its dual
    (26 <-> 6). The 18-neighbourhood has no dual on a cubical grid and is
    rejected here.
    """
    if connectivity not in _DUAL:
        raise ValueError(f"betti numbers need foreground connectivity 26 or 6, got {connectivity}")
    p = _crop_pad(mask)
    if p is None:
        return BettiTriple(0, 0, 0)
    b0, _ = connected_components(p, connectivity)
    n_bg, _ = connected_components(~p, _DUAL[connectivity])
    b2 = n_bg - 1
    chi = (_closed_cells(p) if connectivity == 26 else _open_cells(p))
    chi = chi[0] - chi[1] + chi[2] - chi[3]
    b1 = b0 + b2 - chi
    if b1 < 0:
        raise TopologyError(f"negative b1 (b0={b0}, b2={b2}, chi={chi})")
    return BettiTriple(b0, b1, b2)


def betti_number_error(pred: BettiTriple, tissue, expected=None) -> BneTriple:
    tissue = TissueLabel.parse(tissue)
    if tissue == TissueLabel.background:
        raise ValueError("background has no expected topology")
    exp = (expected or EXPECTED_TOPOLOGY)[tissue]
    return BneTriple(*(float(abs(e - b)) for e, b in zip(exp, pred)))
