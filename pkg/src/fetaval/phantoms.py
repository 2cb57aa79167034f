"""Deterministic label-volume phantoms with known topology.

Each generator returns the volume together with the Betti triple every
present label is expected to have (26/6 connectivity).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PhantomSpecError
from .topology import BettiTriple
from .volume_io import LabelVolume, TissueLabel

KINDS = ("solid_ball", "hollow_shell", "voxel_torus", "two_components", "nested_labels",
         "full_brainlike")


@dataclass(frozen=True)
class PhantomSpec:
    kind: str
    shape: tuple[int, int, int] = (9, 9, 9)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    radius: float = 3.0
    label: int = int(TissueLabel.WM)
    case_id: str = "phantom"


@dataclass(frozen=True, eq=False)
class Phantom:
    volume: LabelVolume
    expected: dict[TissueLabel, BettiTriple]


def _grid(shape):
    return np.indices(shape, dtype=np.float64)


def _ball(shape, center, radius) -> np.ndarray:
    x, y, z = _grid(shape)
    return (x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2 <= radius ** 2


def _center(shape):
    return tuple((s - 1) / 2.0 for s in shape)


def _need(cond: bool, msg: str):
    if not cond:
        raise PhantomSpecError(msg)


def generate_phantom(spec: PhantomSpec) -> Phantom:
    shape = tuple(int(s) for s in spec.shape)
    _need(len(shape) == 3 and min(shape) >= 1, f"bad grid shape {spec.shape}")
    if spec.kind not in KINDS:
        raise PhantomSpecError(f"unknown phantom kind {spec.kind!r}; choose from {KINDS}")
    label = TissueLabel.parse(spec.label)
    _need(label != TissueLabel.background, "phantom label must be a tissue")
    vol = np.zeros(shape, dtype=np.uint8)
    r = float(spec.radius)
    c = _center(shape)

    if spec.kind == "solid_ball":
        _need(r >= 0 and all(2 * r + 1 <= s for s in shape),
              f"ball of radius {r} does not fit in {shape}")
        vol[_ball(shape, c, r)] = label
        expected = {label: BettiTriple(1, 0, 0)}

    elif spec.kind == "hollow_shell":
        # cube of side 2k+1 around the centre, minus its interior; k = radius
        k = int(round(r)) if r >= 1 else 1
        _need(all(2 * k + 1 <= s for s in shape), f"shell of half-width {k} does not fit {shape}")
        lo = [s // 2 - k for s in shape]
        box = tuple(slice(a, a + 2 * k + 1) for a in lo)
        inner = tuple(slice(a + 1, a + 2 * k) for a in lo)
        vol[box] = label
        vol[inner] = 0
        expected = {label: BettiTriple(1, 0, 1)}

    elif spec.kind == "voxel_torus":
        # one-voxel-thick square ring of side 2k+1 in the mid z plane
        k = int(round(r)) if r >= 1 else 1
        _need(all(2 * k + 1 <= s for s in shape[:2]),
              f"ring of half-width {k} does not fit {shape}")
        lo = [s // 2 - k for s in shape]
        z = shape[2] // 2
        ring = np.zeros(shape[:2], dtype=bool)
        ring[lo[0]:lo[0] + 2 * k + 1, lo[1]:lo[1] + 2 * k + 1] = True
        ring[lo[0] + 1:lo[0] + 2 * k, lo[1] + 1:lo[1] + 2 * k] = False
        vol[:, :, z][ring] = label
        expected = {label: BettiTriple(1, 1, 0)}

    elif spec.kind == "two_components":
        # two balls along x separated by at least one empty voxel plane
        _need(r >= 0, "radius must be non-negative")
        span = int(np.floor(r))
        need_x = 2 * (2 * span + 1) + 1
        _need(need_x <= shape[0] and all(2 * span + 1 <= s for s in shape[1:]),
              f"two balls of radius {r} do not fit in {shape}")
        c1 = (span, c[1], c[2])
        c2 = (shape[0] - 1 - span, c[1], c[2])
        vol[_ball(shape, c1, r) | _ball(shape, c2, r)] = label
        expected = {label: BettiTriple(2, 0, 0)}

    elif spec.kind == "nested_labels":
        # solid ventricles ball wrapped by a WM shell; the shell encloses a cavity
        inner = max(r, 1.0)
        outer = inner + 2.0
        _need(all(2 * outer + 3 <= s for s in shape), f"nested balls of radius {outer} do not fit")
        vol[_ball(shape, c, outer)] = TissueLabel.WM
        vol[_ball(shape, c, inner)] = TissueLabel.ventricles
        expected = {TissueLabel.WM: BettiTriple(1, 0, 1),
                    TissueLabel.ventricles: BettiTriple(1, 0, 0)}

    else:  # full_brainlike
        vol, expected = _brainlike(shape, r)

    return Phantom(LabelVolume(vol, spec.spacing, spec.case_id), expected)


def _brainlike(shape, radius):
    """All seven tissues as convex sectors of one ball.

    The top cap is split into two GM hemispheres by an empty mid-sagittal
    plane; every other tissue is a single convex block. The layout therefore
    has exactly the anatomically expected topology for every label.
    """
    _need(radius >= 6, f"brainlike phantom needs radius >= 6, got {radius}")
    _need(all(2 * radius + 3 <= s for s in shape), f"radius {radius} does not fit in {shape}")
    c = _center(shape)
    x, y, z = _grid(shape)
    dx, dy, dz = x - np.round(c[0]), y - c[1], z - c[2]
    inside = dx ** 2 + dy ** 2 + dz ** 2 <= radius ** 2
    t = dz / radius
    vol = np.zeros(shape, dtype=np.uint8)

    def put(sel, code):
        vol[inside & sel] = code

    top = t > 0.45
    put(top & (dx <= -1), TissueLabel.GM)
    put(top & (dx >= 1), TissueLabel.GM)
    mid = (t > 0.1) & (t <= 0.45)
    put(mid & (dy > 0), TissueLabel.WM)
    put(mid & (dy <= 0), TissueLabel.ventricles)
    low = (t > -0.3) & (t <= 0.1)
    put(low & (dy > 0), TissueLabel.deepGM)
    put(low & (dy <= 0), TissueLabel.eCSF)
    bottom = t <= -0.3
    put(bottom & (dy > 0), TissueLabel.brainstem)
    put(bottom & (dy <= 0), TissueLabel.cerebellum)

    expected = {t_: BettiTriple(2 if t_ == TissueLabel.GM else 1, 0, 0)
                for t_ in TissueLabel if t_ != TissueLabel.background}
    return vol, expected
