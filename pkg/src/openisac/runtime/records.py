"""Binary record formats for emitted maps and bypassed channel symbols.

Map record (magic ``RDMP``): version u16, kind u8 (0 = range-Doppler,
1 = spectrogram), reserved u8, rows u32, cols u32, rows*cols little-endian
f32 values in dB (row = delay or time, col = Doppler), then the row axis as
f64 and the column axis as f64.

Channel-symbol record (magic ``CSYM``): version u16, n u32, m u32,
frame_index u64, then n*m interleaved f32 (re, im) pairs, column-major
(symbol index m is the outer loop).  All integers little-endian.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import FormatError
from ..mono import MapKind, SenseMap

RDMP_MAGIC = b"RDMP"
CSYM_MAGIC = b"CSYM"
VERSION = 1

_RDMP_HEAD = struct.Struct("<4sHBBII")
_CSYM_HEAD = struct.Struct("<4sHIIQ")


def write_map(sink, sense_map: SenseMap):
    """Serialize one map record and flush."""
    rows, cols = sense_map.values_db.shape
    head = _RDMP_HEAD.pack(RDMP_MAGIC, VERSION, sense_map.kind.value, 0, rows, cols)
    sink.write(head)
    sink.write(np.ascontiguousarray(sense_map.values_db, "<f4").tobytes())
    sink.write(np.ascontiguousarray(sense_map.delay_axis_s, "<f8").tobytes())
    sink.write(np.ascontiguousarray(sense_map.doppler_axis_hz, "<f8").tobytes())
    sink.flush()


def map_record_size(rows: int, cols: int) -> int:
    return _RDMP_HEAD.size + 4 * rows * cols + 8 * rows + 8 * cols


def _read_exact(source, count):
    data = source.read(count)
    if data is None or len(data) == 0:
        return None
    if len(data) != count:
        raise FormatError(f"truncated record: wanted {count} bytes, got {len(data)}")
    return data


def read_map(source):
    """Parse one map record; None at a clean end of stream."""
    head = _read_exact(source, _RDMP_HEAD.size)
    if head is None:
        return None
    magic, version, kind, _, rows, cols = _RDMP_HEAD.unpack(head)
    if magic != RDMP_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported map record version {version}")
    try:
        kind = MapKind(kind)
    except ValueError:
        raise FormatError(f"unknown map kind {kind}") from None
    values = np.frombuffer(_read_or_die(source, 4 * rows * cols), "<f4")
    delay = np.frombuffer(_read_or_die(source, 8 * rows), "<f8")
    doppler = np.frombuffer(_read_or_die(source, 8 * cols), "<f8")
    return SenseMap(values_db=values.reshape(rows, cols).astype(np.float64),
                    delay_axis_s=delay.copy(), doppler_axis_hz=doppler.copy(),
                    kind=kind)


def _read_or_die(source, count):
    data = _read_exact(source, count)
    if data is None:
        raise FormatError("truncated record: unexpected end of stream")
    return data


def write_symbols(sink, cells: np.ndarray, frame_index: int):
    """Serialize one channel-symbol frame (bypass mode) and flush."""
    n, m = cells.shape
    sink.write(_CSYM_HEAD.pack(CSYM_MAGIC, VERSION, n, m, frame_index))
    interleaved = np.empty((m, n, 2), dtype="<f4")
    interleaved[:, :, 0] = cells.T.real
    interleaved[:, :, 1] = cells.T.imag
    sink.write(interleaved.tobytes())
    sink.flush()


def read_symbols(source):
    """Parse one channel-symbol record; None at a clean end of stream."""
    head = _read_exact(source, _CSYM_HEAD.size)
    if head is None:
        return None
    magic, version, n, m, frame_index = _CSYM_HEAD.unpack(head)
    if magic != CSYM_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported symbol record version {version}")
    flat = np.frombuffer(_read_or_die(source, 8 * n * m), "<f4").astype(np.float64)
    pairs = flat.reshape(m, n, 2)
    cells = (pairs[:, :, 0] + 1j * pairs[:, :, 1]).T
    return np.ascontiguousarray(cells), frame_index
