"""POBJ: binary container for per-movie detected-object feature vectors.

Layout (all integers little-endian):

    magic    4 bytes  b"POBJ"
    version  u32      1
    count    u32      number of records
    record:  u16 id_len | id_len bytes UTF-8 movie_id | u32 M | u32 dim
             | M*dim float32 | u32 crc32-of-record-payload

The checksum covers the record payload from the id-length field through the
last float. Features are stored pre-projection (raw detector dims) so the
trainable projection stays inside checkpoints.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import DataError

MAGIC = b"POBJ"
VERSION = 1


@dataclass
class PosterObjectSet:
    """Detected-object feature vectors for one movie's poster.

    ``features`` has shape (M, dim), float32.
    """

    movie_id: str
    features: np.ndarray

    @property
    def num_objects(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])


def write_pobj(records, path) -> None:
    """Write PosterObjectSets to ``path``. Raises DataError on ragged dims

    within a record or non-2D features.
    """
    records = list(records)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(records)))
        for rec in records:
            feats = np.ascontiguousarray(rec.features, dtype="<f4")
            if feats.ndim != 2:
                raise DataError(f"poster features for {rec.movie_id!r} must be 2-D")
            mid = rec.movie_id.encode("utf-8")
            if len(mid) > 0xFFFF:
                raise DataError(f"movie_id too long: {rec.movie_id!r}")
            payload = (
                struct.pack("<H", len(mid))
                + mid
                + struct.pack("<II", feats.shape[0], feats.shape[1])
                + feats.tobytes()
            )
            fh.write(payload)
            fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def read_pobj(path) -> list[PosterObjectSet]:
    """Read a POBJ file. Errors name the byte offset of the failure."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read poster file {path}: {exc}") from exc

    if len(data) < 12 or data[:4] != MAGIC:
        raise DataError(f"{path}: bad magic at byte 0 (not a POBJ file)")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported POBJ version {version} at byte 4")

    out: list[PosterObjectSet] = []
    off = 12
    for idx in range(count):
        rec_start = off
        try:
            (id_len,) = struct.unpack_from("<H", data, off)
            off += 2
            mid = data[off : off + id_len].decode("utf-8")
            off += id_len
            m, dim = struct.unpack_from("<II", data, off)
            off += 8
            nbytes = m * dim * 4
            feats = np.frombuffer(data, dtype="<f4", count=m * dim, offset=off)
            if feats.size != m * dim:
                raise struct.error("short read")
            off += nbytes
            (stored_crc,) = struct.unpack_from("<I", data, off)
            off += 4
        except (struct.error, ValueError, UnicodeDecodeError) as exc:
            raise DataError(
                f"{path}: truncated or corrupt record {idx} at byte {rec_start}: {exc}"
            ) from exc
        actual_crc = zlib.crc32(data[rec_start : off - 4]) & 0xFFFFFFFF
        if actual_crc != stored_crc:
            raise DataError(
                f"{path}: checksum mismatch in record {idx} ({mid!r}) at byte {rec_start}"
            )
        out.append(PosterObjectSet(movie_id=mid, features=feats.reshape(m, dim).copy()))
    if off != len(data):
        raise DataError(f"{path}: {len(data) - off} trailing bytes at byte {off}")
    return out


def validate_pobj(path) -> dict:
    """Validate a POBJ file; returns summary stats (count, dims, max objects)."""
    recs = read_pobj(path)
    dims = sorted({r.dim for r in recs})
    return {
        "records": len(recs),
        "dims": dims,
        "max_objects": max((r.num_objects for r in recs), default=0),
    }
