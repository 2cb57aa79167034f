"""Synthetic challenges: brain-like phantoms plus teams with controlled errors."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import PhantomSpecError
from .phantoms import PhantomSpec, generate_phantom
from .surface import bounding_box
from .volume_io import (CaseMetadata, Domain, GtEntry, LabelVolume, TeamEntry, TissueLabel,
                        save_label_volume, write_manifest)

log = logging.getLogger(__name__)

ERRORS = ("none", "dilate", "erode", "split", "punch-hole", "drop-label")
DEFAULT_ERRORS = ("none", "dilate", "punch-hole", "drop-label", "erode", "split")

# institution, domain, spacing (mm), SR methods used there
SITES = (
    ("Kispi", Domain.in_domain, 0.5, ("mialsrtk", "irtk_simple")),
    ("Vienna", Domain.in_domain, 1.0, ("niftymic",)),
    ("CHUV", Domain.out_of_domain, 1.125, ("mialsrtk",)),
    ("UCSF", Domain.out_of_domain, 0.8, ("niftymic",)),
)

_SIX = ndimage.generate_binary_structure(3, 1)
_PLANE = np.ones((3, 3, 1), dtype=bool)


def apply_error(vol: np.ndarray, kind: str, tissue) -> np.ndarray:
    """Return a copy of ``vol`` with one error pattern applied to ``tissue``."""
    tissue = int(TissueLabel.parse(tissue))
    out = np.array(vol, copy=True)
    mask = out == tissue
    if kind == "none":
        return out
    if not mask.any():
        raise PhantomSpecError(f"tissue {tissue} absent; cannot apply {kind!r}")
    if kind == "dilate":
        out[ndimage.binary_dilation(mask, _SIX)] = tissue
    elif kind == "erode":
        out[mask & ~ndimage.binary_erosion(mask, _SIX)] = 0
    elif kind == "drop-label":
        out[mask] = 0
    elif kind == "split":
        # empty x-plane through the middle of the largest component
        labels, _ = ndimage.label(mask, np.ones((3, 3, 3), dtype=bool))
        big = labels == 1 + int(np.argmax(np.bincount(labels.ravel())[1:]))
        box = bounding_box(big)
        x = (box[0].start + box[0].stop - 1) // 2
        out[x][big[x]] = 0
    elif kind == "punch-hole":
        # remove one z-column whose voxels all have their 8 in-plane neighbours in
        # the tissue: the column becomes a tunnel, b1 += 1
        ring = ndimage.binary_erosion(mask, _PLANE, border_value=0)
        n = mask.sum(axis=2)
        ok = (ring.sum(axis=2) == n) & (n > 0)
        # the column must be one contiguous run so the tunnel opens at both ends
        runs = (np.diff(mask.astype(np.int8), axis=2) == 1).sum(axis=2) + mask[:, :, 0]
        ok &= runs == 1
        if not ok.any():
            raise PhantomSpecError(f"tissue {tissue} too thin to punch a hole")
        x, y = np.unravel_index(int(np.argmax(np.where(ok, n, 0))), n.shape)
        out[x, y, mask[x, y, :]] = 0
    else:
        raise ValueError(f"unknown error pattern {kind!r}; choose from {ERRORS}")
    return out


def build_synthetic_challenge(out_dir, teams: int = 3, cases: int = 4, size: int = 32,
                              errors=None, tissue="WM", seed: int = 0,
                              fmt: str = "nii.gz") -> tuple[Path, Path]:
    """Write GT and prediction volumes plus the two manifest CSVs.

    Team ``k`` receives error pattern ``errors[k % len(errors)]``.
    Returns (gt_manifest, predictions_csv).
    """
    if teams < 1 or cases < 1:
        raise PhantomSpecError("need at least one team and one case")
    errors = tuple(errors) if errors else DEFAULT_ERRORS
    bad = [e for e in errors if e not in ERRORS]
    if bad:
        raise PhantomSpecError(f"unknown error patterns {bad}; choose from {ERRORS}")
    if fmt not in ("nii.gz", "nii", "lv1"):
        raise ValueError(f"unknown format {fmt!r}")

    out_dir = Path(out_dir)
    (out_dir / "gt").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    gt_entries, team_entries = [], []
    for i in range(cases):
        site, domain, spacing, methods = SITES[i % len(SITES)]
        case_id = f"case{i:03d}"
        radius = max(6.0, size * 0.4 - (i % 3))
        try:
            ph = generate_phantom(PhantomSpec("full_brainlike", (size, size, size),
                                              (spacing,) * 3, radius, case_id=case_id))
        except PhantomSpecError as exc:
            raise PhantomSpecError(f"size {size} too small for a brain-like phantom: {exc}")
        meta = CaseMetadata(
            case_id=case_id, institution=site, domain=domain,
            ga_weeks=round(float(rng.uniform(20.0, 35.0)), 1),
            pathology="pathological" if i % 2 else "normal",
            quality=int(rng.integers(1, 4)),
            sr_method=methods[(i // len(SITES)) % len(methods)],
        )
        gt_path = out_dir / "gt" / f"{case_id}.{fmt}"
        save_label_volume(gt_path, ph.volume)
        gt_entries.append(GtEntry(case_id, gt_path, meta))

        for k in range(teams):
            team = f"team{k:02d}"
            (out_dir / team).mkdir(exist_ok=True)
            err = errors[k % len(errors)]
            pred = apply_error(ph.volume.voxels, err, tissue)
            path = out_dir / team / f"{case_id}.{fmt}"
            save_label_volume(path, LabelVolume(pred, ph.volume.spacing, case_id))
            team_entries.append(TeamEntry(team, case_id, path))
            log.debug("wrote %s (%s on %s)", path, err, tissue)

    gt_csv, pred_csv = out_dir / "gt_manifest.csv", out_dir / "predictions.csv"
    write_manifest(gt_csv, gt_entries, pred_csv, team_entries)
    return gt_csv, pred_csv
