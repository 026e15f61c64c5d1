"""Readers for the engine's binary record formats.

Map record: magic ``RDMP``, u16 version (1), u8 kind (0 range-Doppler,
1 spectrogram), u8 reserved, u32 rows, u32 cols, rows*cols f32 dB values
(row = delay or time, col = Doppler), f64 row axis, f64 col axis.

Symbol record: magic ``CSYM``, u16 version (1), u32 n, u32 m, u64 frame
index, n*m interleaved f32 (re, im) pairs, column-major.  Everything
little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

RDMP = b"RDMP"
CSYM = b"CSYM"
_MAP_HEAD = struct.Struct("<4sHBBII")
_SYM_HEAD = struct.Struct("<4sHIIQ")

KIND_RANGE_DOPPLER = 0
KIND_SPECTROGRAM = 1


class FormatError(Exception):
    pass


@dataclass
class MapRecordView:
    values_db: np.ndarray
    row_axis: np.ndarray      # delay in seconds, or frame time for spectrograms
    col_axis: np.ndarray      # Doppler in Hz
    kind: int

    def __post_init__(self):
        rows, cols = self.values_db.shape
        if len(self.row_axis) != rows or len(self.col_axis) != cols:
            raise FormatError("axis lengths do not match the matrix")


def _need(stream, count):
    data = stream.read(count)
    if not data:
        return None
    if len(data) != count:
        raise FormatError(f"truncated record ({len(data)}/{count} bytes)")
    return data


def read_map_record(stream):
    """One MapRecordView, or None at a clean end of stream."""
    head = _need(stream, _MAP_HEAD.size)
    if head is None:
        return None
    magic, version, kind, _, rows, cols = _MAP_HEAD.unpack(head)
    if magic != RDMP:
        raise FormatError(f"bad magic {magic!r}")
    if version != 1:
        raise FormatError(f"unsupported version {version}")
    if kind not in (KIND_RANGE_DOPPLER, KIND_SPECTROGRAM):
        raise FormatError(f"unknown kind {kind}")
    body = _need(stream, 4 * rows * cols)
    raxis = _need(stream, 8 * rows)
    caxis = _need(stream, 8 * cols)
    if body is None or raxis is None or caxis is None:
        raise FormatError("truncated record body")
    return MapRecordView(
        values_db=np.frombuffer(body, "<f4").reshape(rows, cols).astype(float),
        row_axis=np.frombuffer(raxis, "<f8").copy(),
        col_axis=np.frombuffer(caxis, "<f8").copy(),
        kind=kind)


def read_symbol_record(stream):
    """One (cells, frame_index) pair, or None at a clean end of stream."""
    head = _need(stream, _SYM_HEAD.size)
    if head is None:
        return None
    magic, version, n, m, frame_index = _SYM_HEAD.unpack(head)
    if magic != CSYM:
        raise FormatError(f"bad magic {magic!r}")
    if version != 1:
        raise FormatError(f"unsupported version {version}")
    body = _need(stream, 8 * n * m)
    if body is None:
        raise FormatError("truncated record body")
    flat = np.frombuffer(body, "<f4").astype(float).reshape(m, n, 2)
    return (flat[:, :, 0] + 1j * flat[:, :, 1]).T, frame_index


def iter_map_records(stream):
    while True:
        rec = read_map_record(stream)
        if rec is None:
            return
        yield rec
