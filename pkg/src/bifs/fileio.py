"""Binary grid and chain containers, PNG export and image ingestion.

Layouts (all little-endian):

``BIFSGRD1``  magic[8], rows u32, cols u32, rows*cols float64 row-major.
``BIFSCPX1``  magic[8], rows u32, cols u32, rows*cols (re, im) float64 pairs.
``BIFSCHN1``  magic[8], rows u32, cols u32, retained u32, thin u32,
              burn_in u32, seed u64, then one record per sampled site in
              row-major order: k i32, l i32, accept_count u64,
              retained (a, b) float64 pairs.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from bifs.errors import DataError
from bifs.grid import unique_sites

GRID_MAGIC = b"BIFSGRD1"
COMPLEX_MAGIC = b"BIFSCPX1"
CHAIN_MAGIC = b"BIFSCHN1"

_DIMS = struct.Struct("<II")
_CHAIN_HEADER = struct.Struct("<8sIIIIIQ")


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise DataError(f"truncated {what}: expected {n} bytes, got {len(buf)}")
    return buf


def write_grid(path, values) -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DataError(f"grid must be 2-D, got shape {values.shape}")
    with open(path, "wb") as f:
        f.write(GRID_MAGIC)
        f.write(_DIMS.pack(*values.shape))
        f.write(values.astype("<f8").tobytes(order="C"))


def write_complex_grid(path, values) -> None:
    values = np.asarray(values, dtype=np.complex128)
    if values.ndim != 2:
        raise DataError(f"grid must be 2-D, got shape {values.shape}")
    pairs = np.stack([values.real, values.imag], axis=-1)
    with open(path, "wb") as f:
        f.write(COMPLEX_MAGIC)
        f.write(_DIMS.pack(*values.shape))
        f.write(pairs.astype("<f8").tobytes(order="C"))


def _read_dims(f, magic: bytes, path) -> tuple[int, int]:
    got = _read_exact(f, 8, "magic")
    if got != magic:
        raise DataError(f"{path}: bad magic {got!r}, expected {magic!r}")
    rows, cols = _DIMS.unpack(_read_exact(f, _DIMS.size, "dims"))
    return rows, cols


def read_grid(path) -> np.ndarray:
    with open(path, "rb") as f:
        rows, cols = _read_dims(f, GRID_MAGIC, path)
        data = _read_exact(f, 8 * rows * cols, "grid body")
        if f.read(1):
            raise DataError(f"{path}: trailing bytes after grid body")
    return np.frombuffer(data, dtype="<f8").reshape(rows, cols).astype(np.float64)


def read_complex_grid(path) -> np.ndarray:
    with open(path, "rb") as f:
        rows, cols = _read_dims(f, COMPLEX_MAGIC, path)
        data = _read_exact(f, 16 * rows * cols, "grid body")
        if f.read(1):
            raise DataError(f"{path}: trailing bytes after grid body")
    pairs = np.frombuffer(data, dtype="<f8").reshape(rows, cols, 2)
    return pairs[..., 0] + 1j * pairs[..., 1]


def _record_dtype(retained: int) -> np.dtype:
    return np.dtype([("k", "<i4"), ("l", "<i4"), ("accept", "<u8"), ("ab", "<f8", (retained, 2))])


def write_chains(path, field) -> None:
    """Write a :class:`~bifs.sampler.ChainField` as a ``BIFSCHN1`` file."""
    rec = _record_dtype(field.retained)
    offsets = field.offsets
    with open(path, "wb") as f:
        f.write(_CHAIN_HEADER.pack(CHAIN_MAGIC, field.rows, field.cols, field.retained,
                                   field.thin, field.burn_in, int(field.seed)))
        step = 512
        for s in range(0, len(field.sites), step):
            e = min(s + step, len(field.sites))
            block = np.empty(e - s, dtype=rec)
            block["k"] = offsets[s:e, 0]
            block["l"] = offsets[s:e, 1]
            block["accept"] = field.accept_count[s:e]
            block["ab"] = field.samples[s:e]
            f.write(block.tobytes())


def read_chains(path):
    """Load a ``BIFSCHN1`` file into a :class:`~bifs.sampler.ChainField`.

    The file does not record which sites were held fixed; a site is treated
    as fixed when it has no acceptances and a constant chain.
    """
    from bifs.sampler import ChainField

    with open(path, "rb") as f:
        head = _read_exact(f, _CHAIN_HEADER.size, "chain header")
        magic, rows, cols, retained, thin, burn_in, seed = _CHAIN_HEADER.unpack(head)
        if magic != CHAIN_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}, expected {CHAIN_MAGIC!r}")
        if thin < 1 or retained < 1:
            raise DataError(f"{path}: invalid retained/thin in header")
        sites = unique_sites(rows, cols).sampled
        rec = _record_dtype(retained)
        body = _read_exact(f, rec.itemsize * len(sites), "chain records")
        if f.read(1):
            raise DataError(f"{path}: trailing bytes after chain records")
    records = np.frombuffer(body, dtype=rec)
    i = records["k"].astype(np.int64) + rows // 2
    j = records["l"].astype(np.int64) + cols // 2
    if not np.array_equal(i * cols + j, sites):
        raise DataError(f"{path}: site records out of order or not matching the lattice")
    samples = np.array(records["ab"], dtype=np.float64)
    accept = records["accept"].astype(np.int64)
    constant = np.all(samples == samples[:, :1], axis=(1, 2))
    return ChainField(
        rows=rows, cols=cols, sites=sites, samples=samples, accept_count=accept,
        fixed=(accept == 0) & constant, total_iters=burn_in + retained * thin,
        burn_in=burn_in, thin=thin, seed=seed,
    )


def write_png(path, values) -> tuple[float, float]:
    """16-bit grayscale PNG, min-max scaled. Returns the ``(min, max)`` used."""
    from PIL import Image

    values = np.asarray(values, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    scaled = np.zeros(values.shape) if span == 0 else (values - lo) / span
    img = np.round(scaled * 65535).astype(np.uint16)
    Image.fromarray(img).save(path, format="PNG")
    return lo, hi


def read_image(path) -> np.ndarray:
    """Load a grid from ``BIFSGRD1``, PNG or PGM, as float64.

    PNG/PGM pixels are taken as raw integer intensities; color images are
    converted to luminance.
    """
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(8)
    if head == GRID_MAGIC:
        return read_grid(path)
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "I", "I;16", "I;16B", "F"):
                im = im.convert("L")
            return np.asarray(im, dtype=np.float64)
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"{path}: not a BIFSGRD1, PNG or PGM image ({exc})") from None


def write_text(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.writelines(line.rstrip("\n") + "\n" for line in lines)
