"""Writer for the FSTK feature-container format.

Independent implementation of the wire format consumed by the detection
library; the two interoperate through these bytes alone. Layout, all
little-endian: magic ``FSTK``, version u16 (= 1), sample count u32,
level count u8, per-level (c, h, w) u16 triples, then per sample label
u8, dataset id (u16 length + UTF-8), raw dims u16 triple, raw float32
payload, and each level's float32 payload in header order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"FSTK"
VERSION = 1

__all__ = ["ExportRecord", "encode_container", "MAGIC", "VERSION"]


@dataclass
class ExportRecord:
    """One image's worth of output: raw input plus tapped activations."""

    raw_input: np.ndarray
    levels: list[np.ndarray]
    label: int
    dataset_id: str

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if self.raw_input.ndim != 3:
            raise ValueError(f"raw input must be (c, h, w), got {self.raw_input.shape}")


def _f32(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _dims_u16(shape: tuple[int, ...]) -> bytes:
    if any(not 0 < d <= 0xFFFF for d in shape):
        raise ValueError(f"dims {shape} do not fit the u16 header fields")
    return struct.pack("<HHH", *shape)


def encode_container(records: list[ExportRecord]) -> bytes:
    """Serialize records; an empty list yields a valid header-only file."""
    out = bytearray()
    out += struct.pack("<4sHI", MAGIC, VERSION, len(records))
    level_dims = [lv.shape for lv in records[0].levels] if records else []
    out += struct.pack("<B", len(level_dims))
    for dims in level_dims:
        out += _dims_u16(dims)
    for i, rec in enumerate(records):
        if [lv.shape for lv in rec.levels] != level_dims:
            raise ValueError(f"record {i}: level dims differ from record 0")
        ident = rec.dataset_id.encode("utf-8")
        out += struct.pack("<BH", rec.label, len(ident))
        out += ident
        out += _dims_u16(rec.raw_input.shape)
        out += _f32(rec.raw_input)
        for lv in rec.levels:
            out += _f32(lv)
    return bytes(out)
