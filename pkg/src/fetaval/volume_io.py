"""Label volumes, case metadata and manifests."""
from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nifti
from .errors import AlphabetError, DataError, FormatError, ManifestError, ShapeError

log = logging.getLogger(__name__)

MAX_CODE = 7
INTEGRAL_TOL = 1e-6
GRID_RTOL = 1e-6


class TissueLabel(enum.IntEnum):
    background = 0
    eCSF = 1
    GM = 2
    WM = 3
    ventricles = 4
    cerebellum = 5
    deepGM = 6
    brainstem = 7

    @classmethod
    def parse(cls, token) -> "TissueLabel":
        """Accept a code (``3``, ``"3"``) or a case-insensitive name (``"wm"``)."""
        if isinstance(token, (int, np.integer)):
            return cls(int(token))
        s = str(token).strip()
        if s.isdigit():
            return cls(int(s))
        aliases = {"csf": cls.eCSF, "ecsf": cls.eCSF, "dgm": cls.deepGM, "deep_gm": cls.deepGM}
        low = s.lower()
        if low in aliases:
            return aliases[low]
        for t in cls:
            if t.name.lower() == low:
                return t
        raise ValueError(f"unknown tissue {token!r}")


TISSUES: tuple[TissueLabel, ...] = tuple(t for t in TissueLabel if t != TissueLabel.background)


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """Immutable 3D label grid indexed ``voxels[x, y, z]``; spacing in mm."""

    voxels: np.ndarray
    spacing: tuple[float, float, float]
    case_id: str = ""

    def __post_init__(self):
        v = np.asarray(self.voxels)
        if v.ndim != 3 or min(v.shape) < 1:
            raise DataError(f"label volume must be a non-empty 3D grid, got shape {v.shape}")
        sp = tuple(float(s) for s in self.spacing)
        if len(sp) != 3 or not all(np.isfinite(s) and s > 0 for s in sp):
            raise DataError(f"spacing must be three positive numbers, got {self.spacing}")
        if not np.issubdtype(v.dtype, np.integer):
            raise DataError(f"voxels must be integer codes, got dtype {v.dtype}")
        if v.size and (v.min() < 0 or v.max() > MAX_CODE):
            raise AlphabetError(f"{self.case_id or 'volume'}: codes outside 0..{MAX_CODE}")
        v = np.array(v, dtype=np.uint8, copy=True)
        v.setflags(write=False)
        object.__setattr__(self, "voxels", v)
        object.__setattr__(self, "spacing", sp)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.voxels.shape)

    def same_grid(self, other: "LabelVolume") -> bool:
        return self.dims == other.dims and np.allclose(
            self.spacing, other.spacing, rtol=GRID_RTOL, atol=0
        )


@dataclass(frozen=True, eq=False)
class BinaryMask:
    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=bool)
        if d.ndim != 3:
            raise DataError(f"mask must be 3D, got shape {d.shape}")
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def shape(self):
        return self.data.shape

    def count(self) -> int:
        return int(np.count_nonzero(self.data))

    def is_empty(self) -> bool:
        return not self.data.any()


def check_same_grid(a: LabelVolume, b: LabelVolume) -> None:
    if a.dims != b.dims:
        raise ShapeError(f"grid mismatch: dims {a.dims} vs {b.dims}")
    if not a.same_grid(b):
        raise ShapeError(f"grid mismatch: spacing {a.spacing} vs {b.spacing}")


def binary_mask(vol: LabelVolume, label) -> BinaryMask:
    label = TissueLabel.parse(label)
    if label == TissueLabel.background:
        raise ValueError("background is never scored")
    return BinaryMask(vol.voxels == int(label), vol.spacing)


def _to_codes(data: np.ndarray, source: str, strict: bool) -> np.ndarray:
    if np.issubdtype(data.dtype, np.floating):
        if not np.all(np.isfinite(data)):
            raise DataError(f"{source}: non-finite voxel values")
        rounded = np.rint(data)
        dev = float(np.max(np.abs(data - rounded))) if data.size else 0.0
        if dev > INTEGRAL_TOL:
            raise DataError(f"{source}: non-integral voxel values (max deviation {dev:.3g})")
        data = rounded.astype(np.int64)
    else:
        data = data.astype(np.int64)
    bad = (data < 0) | (data > MAX_CODE)
    if bad.any():
        found = sorted(set(np.unique(data[bad]).tolist()))
        if strict:
            raise AlphabetError(f"{source}: label codes outside 0..{MAX_CODE}: {found[:10]}")
        log.warning("%s: mapping %d voxels with unknown codes %s to background",
                    source, int(bad.sum()), found[:10])
        data = np.where(bad, 0, data)
    return data.astype(np.uint8)


def load_label_volume(path, case_id: str | None = None, strict: bool = True) -> LabelVolume:
    """Load a NIfTI-1 (optionally gzipped) label map or an ``LV1`` raw sidecar."""
    path = Path(path)
    if path.suffix == ".lv1" or path.name.endswith(".lv1.txt"):
        return read_raw(path, case_id=case_id, strict=strict)
    data, hdr = nifti.read_nifti(path)
    codes = _to_codes(data, str(path), strict)
    return LabelVolume(codes, hdr.pixdim, case_id if case_id is not None else _stem(path))


def _stem(path: Path) -> str:
    name = path.name
    for ext in (".nii.gz", ".nii", ".hdr.gz", ".hdr", ".lv1"):
        if name.endswith(ext):
            return name[: -len(ext)]
    return name


def save_label_volume(path, vol: LabelVolume) -> None:
    path = Path(path)
    if path.suffix == ".lv1":
        write_raw(path, vol)
    else:
        nifti.write_nifti(path, vol.voxels, vol.spacing)


# --- raw sidecar ("LV1 nx ny nz sx sy sz" then x-fastest integer codes) ---

def write_raw(path, vol: LabelVolume) -> None:
    nx, ny, nz = vol.dims
    head = "LV1 {} {} {} {} {} {}".format(nx, ny, nz, *(repr(s) for s in vol.spacing))
    body = " ".join(map(str, vol.voxels.ravel(order="F").tolist()))
    Path(path).write_text(head + "\n" + body + "\n")


def read_raw(path, case_id: str | None = None, strict: bool = True) -> LabelVolume:
    path = Path(path)
    text = path.read_text()
    head, _, body = text.partition("\n")
    parts = head.split()
    if len(parts) != 7 or parts[0] != "LV1":
        raise FormatError(f"{path}: bad raw header {head!r}")
    try:
        dims = tuple(int(p) for p in parts[1:4])
        spacing = tuple(float(p) for p in parts[4:7])
        values = np.array(body.split(), dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if values.size != int(np.prod(dims)):
        raise FormatError(f"{path}: expected {int(np.prod(dims))} codes, found {values.size}")
    codes = _to_codes(values.reshape(dims, order="F"), str(path), strict)
    return LabelVolume(codes, spacing, case_id if case_id is not None else _stem(path))


# --- metadata and manifests ---

class Domain(str, enum.Enum):
    in_domain = "in_domain"
    out_of_domain = "out_of_domain"


# Extensible registries: add entries before loading a manifest.
INSTITUTIONS: dict[str, Domain | None] = {
    "Kispi": Domain.in_domain,
    "Vienna": Domain.in_domain,
    "CHUV": Domain.out_of_domain,
    "UCSF": Domain.out_of_domain,
}
SR_METHODS: set[str] = {"irtk_simple", "mialsrtk", "niftymic"}
PATHOLOGIES = ("normal", "pathological")

_DOMAIN_ALIASES = {"in": Domain.in_domain, "in_domain": Domain.in_domain,
                   "out": Domain.out_of_domain, "out_of_domain": Domain.out_of_domain,
                   "ood": Domain.out_of_domain}


def parse_domain(token: str) -> Domain:
    try:
        return _DOMAIN_ALIASES[token.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown domain {token!r}") from None


def parse_sr_method(token: str) -> str:
    s = token.strip().lower().replace("-", "_")
    if s not in SR_METHODS:
        raise ValueError(f"unknown sr_method {token!r}")
    return s


def parse_institution(token: str) -> str:
    for name in INSTITUTIONS:
        if name.lower() == token.strip().lower():
            return name
    raise ValueError(f"unknown institution {token!r}")


@dataclass(frozen=True)
class CaseMetadata:
    case_id: str
    institution: str
    domain: Domain
    ga_weeks: float
    pathology: str
    quality: int
    sr_method: str

    def __post_init__(self):
        if self.quality not in (1, 2, 3):
            raise ValueError(f"quality must be 1, 2 or 3, got {self.quality}")
        if self.pathology not in PATHOLOGIES:
            raise ValueError(f"unknown pathology {self.pathology!r}")
        expected = INSTITUTIONS.get(self.institution)
        if expected is not None and expected != self.domain:
            raise ValueError(f"institution {self.institution} belongs to {expected.value}, "
                             f"not {self.domain.value}")

    def as_row(self) -> dict:
        return {
            "case_id": self.case_id, "institution": self.institution,
            "domain": self.domain.value, "ga_weeks": repr(float(self.ga_weeks)),
            "pathology": self.pathology, "quality": str(self.quality),
            "sr_method": self.sr_method,
        }

    @classmethod
    def from_row(cls, row: dict) -> "CaseMetadata":
        return cls(
            case_id=row["case_id"].strip(),
            institution=parse_institution(row["institution"]),
            domain=parse_domain(row["domain"]),
            ga_weeks=float(row["ga_weeks"]),
            pathology=row["pathology"].strip().lower(),
            quality=int(row["quality"]),
            sr_method=parse_sr_method(row["sr_method"]),
        )


@dataclass(frozen=True)
class GtEntry:
    case_id: str
    gt_path: Path
    meta: CaseMetadata


@dataclass(frozen=True)
class TeamEntry:
    team_id: str
    case_id: str
    prediction_path: Path


@dataclass
class Manifest:
    gt_entries: list[GtEntry]
    team_entries: list[TeamEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.gt_entries:
            if e.case_id in seen:
                raise ManifestError(f"duplicate case_id {e.case_id!r}")
            seen.add(e.case_id)
        pairs = set()
        for t in self.team_entries:
            if t.case_id not in seen:
                raise ManifestError(f"team {t.team_id!r} references unknown case {t.case_id!r}")
            if (t.team_id, t.case_id) in pairs:
                raise ManifestError(f"duplicate prediction for team {t.team_id!r}, "
                                    f"case {t.case_id!r}")
            pairs.add((t.team_id, t.case_id))

    @property
    def metadata(self) -> dict[str, CaseMetadata]:
        return {e.case_id: e.meta for e in self.gt_entries}

    @property
    def teams(self) -> list[str]:
        return sorted({t.team_id for t in self.team_entries})


GT_COLUMNS = ["case_id", "gt_path", "institution", "domain", "ga_weeks", "pathology",
              "quality", "sr_method"]
TEAM_COLUMNS = ["team_id", "case_id", "prediction_path"]


def _read_csv(path: Path, columns: list[str]) -> list[tuple[int, dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in columns if c not in header]
        if missing:
            raise ManifestError(f"{path}: missing columns {missing}")
        reader.fieldnames = header
        return [(i, row) for i, row in enumerate(reader, start=2)]


def load_manifest(gt_csv, predictions_csv=None) -> Manifest:
    """Parse the ground-truth manifest and (optionally) the team predictions CSV.

    Relative paths are resolved against the directory of the CSV naming them.
    Errors carry the offending row number (header is row 1).
    """
    gt_csv = Path(gt_csv)
    gt_entries = []
    for lineno, row in _read_csv(gt_csv, GT_COLUMNS):
        try:
            meta = CaseMetadata.from_row(row)
        except (ValueError, TypeError, KeyError) as exc:
            raise ManifestError(f"{gt_csv}:{lineno}: {exc}") from exc
        gt_entries.append(GtEntry(meta.case_id, _resolve(gt_csv, row["gt_path"]), meta))

    team_entries = []
    if predictions_csv is not None:
        predictions_csv = Path(predictions_csv)
        for lineno, row in _read_csv(predictions_csv, TEAM_COLUMNS):
            team, case = row["team_id"].strip(), row["case_id"].strip()
            if not team:
                raise ManifestError(f"{predictions_csv}:{lineno}: empty team_id")
            team_entries.append(
                TeamEntry(team, case, _resolve(predictions_csv, row["prediction_path"])))
    return Manifest(gt_entries, team_entries)


def _resolve(csv_path: Path, p: str) -> Path:
    p = Path(p.strip())
    return p if p.is_absolute() else csv_path.parent / p


def write_manifest(gt_csv, entries: list[GtEntry], predictions_csv=None,
                   team_entries: list[TeamEntry] = ()) -> None:
    gt_csv = Path(gt_csv)
    with open(gt_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, GT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for e in entries:
            w.writerow({"gt_path": _relative(gt_csv, e.gt_path), **e.meta.as_row()})
    if predictions_csv is not None:
        predictions_csv = Path(predictions_csv)
        with open(predictions_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, TEAM_COLUMNS, lineterminator="\n")
            w.writeheader()
            for t in team_entries:
                w.writerow({"team_id": t.team_id, "case_id": t.case_id,
                            "prediction_path": _relative(predictions_csv, t.prediction_path)})


def _relative(csv_path: Path, p: Path) -> str:
    try:
        return Path(p).resolve().relative_to(csv_path.parent.resolve()).as_posix()
    except ValueError:
        return str(p)
