"""Minimal NIfTI-1 codec for integer label maps.

Only the header fields needed to recover a voxel grid are interpreted:
``dim[0..3]``, ``pixdim[1..3]``, ``datatype``, ``vox_offset`` and the
``scl_slope``/``scl_inter`` pair. Orientation matrices are ignored.
"""
from __future__ import annotations

import gzip
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

HEADER_SIZE = 348

# NIfTI datatype code -> numpy dtype (byte order applied later)
DATATYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    256: np.int8,
    512: np.uint16,
}


@dataclass(frozen=True)
class NiftiHeader:
    dims: tuple[int, int, int]
    pixdim: tuple[float, float, float]
    datatype: int
    vox_offset: int
    scl_slope: float
    scl_inter: float
    endian: str
    single_file: bool


def _open_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise FormatError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def parse_header(buf: bytes, source: str = "<bytes>") -> NiftiHeader:
    if len(buf) < HEADER_SIZE:
        raise FormatError(f"{source}: truncated header ({len(buf)} bytes)")
    for endian in ("<", ">"):
        if struct.unpack_from(endian + "i", buf, 0)[0] == HEADER_SIZE:
            break
    else:
        raise FormatError(f"{source}: sizeof_hdr is not 348 in either byte order")

    magic = buf[344:348]
    if magic == b"n+1\x00":
        single = True
    elif magic == b"ni1\x00":
        single = False
    else:
        raise FormatError(f"{source}: bad magic {magic!r}")

    dim = struct.unpack_from(endian + "8h", buf, 40)
    ndim = dim[0]
    if not 3 <= ndim <= 7:
        raise FormatError(f"{source}: dim[0]={ndim}, expected a 3D volume")
    dims = tuple(int(d) for d in dim[1:4])
    if any(d < 1 for d in dims):
        raise FormatError(f"{source}: non-positive dimension {dims}")
    if any(d != 1 for d in dim[4 : ndim + 1]):
        raise FormatError(f"{source}: extra non-singleton dimensions {dim[4:ndim + 1]}")

    datatype = struct.unpack_from(endian + "h", buf, 70)[0]
    if datatype not in DATATYPES:
        raise FormatError(f"{source}: unsupported datatype code {datatype}")

    pixdim = struct.unpack_from(endian + "8f", buf, 76)
    spacing = tuple(float(p) for p in pixdim[1:4])
    if not all(np.isfinite(s) and s > 0 for s in spacing):
        raise FormatError(f"{source}: non-positive pixdim {spacing}")

    vox_offset = struct.unpack_from(endian + "f", buf, 108)[0]
    slope, inter = struct.unpack_from(endian + "2f", buf, 112)
    if single and vox_offset < HEADER_SIZE:
        raise FormatError(f"{source}: vox_offset {vox_offset} inside header")
    return NiftiHeader(
        dims=dims,
        pixdim=spacing,
        datatype=datatype,
        vox_offset=int(vox_offset),
        scl_slope=float(slope),
        scl_inter=float(inter),
        endian=endian,
        single_file=single,
    )


def read_nifti(path: str | Path) -> tuple[np.ndarray, NiftiHeader]:
    """Return the (scaled) voxel array indexed ``[x, y, z]`` and its header."""
    path = Path(path)
    buf = _open_bytes(path)
    hdr = parse_header(buf, str(path))
    if hdr.single_file:
        payload, offset = buf, hdr.vox_offset
    else:
        img = _companion_image(path)
        payload, offset = _open_bytes(img), hdr.vox_offset

    dtype = np.dtype(DATATYPES[hdr.datatype]).newbyteorder(hdr.endian)
    count = int(np.prod(hdr.dims))
    need = offset + count * dtype.itemsize
    if len(payload) < need:
        raise FormatError(f"{path}: voxel data truncated ({len(payload)} < {need} bytes)")
    data = np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
    data = data.reshape(hdr.dims, order="F")

    slope, inter = hdr.scl_slope, hdr.scl_inter
    if slope != 0 and np.isfinite(slope) and not (slope == 1 and inter == 0):
        data = data.astype(np.float64) * slope + (inter if np.isfinite(inter) else 0.0)
    return data, hdr


def _companion_image(hdr_path: Path) -> Path:
    name = hdr_path.name
    for suffix, repl in ((".hdr.gz", ".img.gz"), (".hdr", ".img")):
        if name.endswith(suffix):
            for cand in (name[: -len(suffix)] + repl, name[: -len(suffix)] + ".img"):
                p = hdr_path.with_name(cand)
                if p.exists():
                    return p
    raise FormatError(f"{hdr_path}: two-file NIfTI without a matching .img")


def write_nifti(path: str | Path, data: np.ndarray, spacing, datatype: int = 2) -> None:
    """Write a single-file little-endian NIfTI-1 (gzip when the name ends in .gz).

    Output is byte-deterministic: the gzip header carries no timestamp.
    """
    path = Path(path)
    if data.ndim != 3:
        raise ValueError("expected a 3D array")
    if datatype not in DATATYPES:
        raise ValueError(f"unsupported datatype {datatype}")
    dtype = np.dtype(DATATYPES[datatype]).newbyteorder("<")

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, *data.shape, 1, 1, 1, 1)
    struct.pack_into("<hh", hdr, 70, datatype, dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, *[float(s) for s in spacing], 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<ff", hdr, 112, 1.0, 0.0)
    struct.pack_into("<B", hdr, 123, 2)  # xyzt_units: mm
    hdr[344:348] = b"n+1\x00"

    out = io.BytesIO()
    out.write(bytes(hdr))
    out.write(b"\x00\x00\x00\x00")  # no extensions
    out.write(np.asarray(data).astype(dtype).tobytes(order="F"))
    raw = out.getvalue()
    if path.name.endswith(".gz"):
        raw = gzip.compress(raw, mtime=0)
    path.write_bytes(raw)
