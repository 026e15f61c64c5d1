"""Datagram framing over the coded payload.

Each datagram rides in a record: u16 length (LE) | payload | u32 CRC-32
(LE).  Records never straddle frames; whatever info capacity remains is
filled with random bits so every frame carries full-power, well-scrambled
symbols.  The unpacker walks records until the remaining bits cannot hold a
record or a CRC check fails (that marks the start of the random fill).
"""

from __future__ import annotations

import zlib
from collections import deque

import numpy as np

from ..config import FramePlan, SystemConfig
from ..phytx import qpsk_map, scramble

SCRAMBLE_SEED = 0b1011101
RECORD_OVERHEAD_BYTES = 6


class FramePacker:
    """Queued datagrams -> per-frame QPSK payload symbols."""

    def __init__(self, cfg: SystemConfig, plan: FramePlan, code, pad_seed=0xD1CE):
        self.cfg = cfg
        self.plan = plan
        self.code = code
        coded_capacity = 2 * plan.data_cells_per_frame
        self.blocks_per_frame = coded_capacity // code.n
        self.info_capacity_bits = self.blocks_per_frame * code.k
        self.pending = deque()
        self.pad_seed = pad_seed
        self.frames_built = 0
        self.datagrams_taken = 0
        self.last_info_bits = None

    @property
    def max_datagram_bytes(self) -> int:
        return self.info_capacity_bits // 8 - RECORD_OVERHEAD_BYTES

    def offer(self, datagram: bytes) -> bool:
        """Queue a datagram; False (rejected) if it can never fit a frame."""
        if len(datagram) > self.max_datagram_bytes:
            return False
        self.pending.append(bytes(datagram))
        return True

    def build_frame(self):
        """Returns (payload_symbols, datagrams_packed) for the next frame."""
        bits = []
        used = 0
        packed = 0
        while self.pending:
            record = encode_record(self.pending[0])
            if used + 8 * len(record) > self.info_capacity_bits:
                break
            self.pending.popleft()
            bits.append(np.unpackbits(np.frombuffer(record, np.uint8)))
            used += 8 * len(record)
            packed += 1
        rng = np.random.default_rng([self.pad_seed, self.frames_built])
        fill = rng.integers(0, 2, self.info_capacity_bits - used, dtype=np.uint8)
        info = np.concatenate(bits + [fill]) if bits else fill
        self.last_info_bits = info
        coded = np.concatenate([
            self.code.encode(info[b * self.code.k:(b + 1) * self.code.k])
            for b in range(self.blocks_per_frame)])
        coded = scramble(coded, SCRAMBLE_SEED)
        self.frames_built += 1
        self.datagrams_taken += packed
        return qpsk_map(coded), packed


class FrameUnpacker:
    """Per-frame LLRs -> decoded datagrams."""

    def __init__(self, cfg: SystemConfig, plan: FramePlan, code):
        self.cfg = cfg
        self.plan = plan
        self.code = code
        coded_capacity = 2 * plan.data_cells_per_frame
        self.blocks_per_frame = coded_capacity // code.n
        self.blocks_decoded = 0
        self.blocks_failed = 0

    def unpack(self, llrs: np.ndarray):
        """Returns (datagrams, info_bits) decoded from one frame of LLRs."""
        n = self.code.n
        flip = 1.0 - 2.0 * scramble(np.zeros(self.blocks_per_frame * n, np.uint8),
                                    SCRAMBLE_SEED).astype(np.float64)
        soft = llrs[:self.blocks_per_frame * n] * flip
        info_parts = []
        for b in range(self.blocks_per_frame):
            bits, ok = self.code.decode(soft[b * n:(b + 1) * n])
            self.blocks_decoded += 1
            if not ok:
                self.blocks_failed += 1
            info_parts.append(bits)
        info = np.concatenate(info_parts) if info_parts else np.empty(0, np.uint8)
        return parse_records(info), info


def encode_record(payload: bytes) -> bytes:
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    return (len(payload).to_bytes(2, "little") + payload
            + crc.to_bytes(4, "little"))


def parse_records(info_bits: np.ndarray):
    """Scan records from the head of the info bits; stop at the random fill."""
    data = np.packbits(info_bits).tobytes()
    out = []
    pos = 0
    while pos + RECORD_OVERHEAD_BYTES <= len(data):
        length = int.from_bytes(data[pos:pos + 2], "little")
        end = pos + 2 + length + 4
        if end > len(data):
            break
        payload = data[pos + 2:pos + 2 + length]
        crc = int.from_bytes(data[pos + 2 + length:end], "little")
        if crc != (zlib.crc32(payload) & 0xFFFFFFFF):
            break
        out.append(payload)
        pos = end
    return out
