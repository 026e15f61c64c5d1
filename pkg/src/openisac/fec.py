"""Forward error correction behind a small code interface.

The default is a rate-1/2, n=648 quasi-cyclic LDPC code whose parity-check
matrix ships as an alist file.  Encoding is systematic (derived from the
parity-check matrix by GF(2) elimination); decoding is normalized min-sum
with early exit on a zero syndrome.  A pass-through null code with a CRC-32
check is available for DSP-focused runs.
"""

from __future__ import annotations

import zlib

import numpy as np

from . import kernels
from .errors import LengthMismatch, MatrixFileInvalid

MAX_ITERATIONS = 25
MINSUM_ALPHA = 0.75


def parse_alist(text: str):
    """Parse an alist parity-check description; returns H as uint8 (m, n)."""
    toks = text.split()
    try:
        it = iter(int(t) for t in toks)
        n = next(it)
        m = next(it)
        max_col = next(it)
        max_row = next(it)
        col_deg = [next(it) for _ in range(n)]
        row_deg = [next(it) for _ in range(m)]
        h = np.zeros((m, n), dtype=np.uint8)
        for col in range(n):
            entries = [next(it) for _ in range(max_col)]
            live = [e for e in entries if e != 0]
            if len(live) != col_deg[col]:
                raise MatrixFileInvalid(f"column {col}: degree mismatch")
            for e in live:
                if not 1 <= e <= m:
                    raise MatrixFileInvalid(f"column {col}: row index {e} out of range")
                h[e - 1, col] = 1
        for row in range(m):
            entries = [next(it) for _ in range(max_row)]
            live = [e for e in entries if e != 0]
            if len(live) != row_deg[row]:
                raise MatrixFileInvalid(f"row {row}: degree mismatch")
            for e in live:
                if not 1 <= e <= n:
                    raise MatrixFileInvalid(f"row {row}: column index {e} out of range")
                if not h[row, e - 1]:
                    raise MatrixFileInvalid(f"row {row}: inconsistent with column lists")
    except StopIteration:
        raise MatrixFileInvalid("truncated alist file") from None
    except ValueError:
        raise MatrixFileInvalid("non-integer token in alist file") from None
    if int(h.sum(axis=0).max()) != max_col or int(h.sum(axis=1).max()) != max_row:
        raise MatrixFileInvalid("declared maximum degrees do not match matrix")
    return h


def dump_alist(h: np.ndarray) -> str:
    m, n = h.shape
    col_deg = h.sum(axis=0)
    row_deg = h.sum(axis=1)
    max_col, max_row = int(col_deg.max()), int(row_deg.max())
    lines = [f"{n} {m}", f"{max_col} {max_row}",
             " ".join(str(int(d)) for d in col_deg),
             " ".join(str(int(d)) for d in row_deg)]
    for col in range(n):
        rows = [str(r + 1) for r in np.nonzero(h[:, col])[0]]
        rows += ["0"] * (max_col - len(rows))
        lines.append(" ".join(rows))
    for row in range(m):
        cols = [str(c + 1) for c in np.nonzero(h[row])[0]]
        cols += ["0"] * (max_row - len(cols))
        lines.append(" ".join(cols))
    return "\n".join(lines) + "\n"


def _gf2_systematic(h: np.ndarray):
    """Row-reduce H, returning (pivot_cols, info_cols, parity_map).

    parity_map is (n_checks, k): codeword[pivot_cols] = parity_map @ info % 2.
    """
    h = h.astype(np.uint8).copy()
    m, n = h.shape
    pivot_cols = []
    row = 0
    for col in range(n - 1, -1, -1):
        if row >= m:
            break
        hit = np.nonzero(h[row:, col])[0]
        if len(hit) == 0:
            continue
        pr = row + hit[0]
        if pr != row:
            h[[row, pr]] = h[[pr, row]]
        others = np.nonzero(h[:, col])[0]
        for r in others:
            if r != row:
                h[r] ^= h[row]
        pivot_cols.append(col)
        row += 1
    if row < m:
        raise MatrixFileInvalid(f"parity-check matrix rank {row} < {m} (dependent rows)")
    pivot_cols = np.array(pivot_cols, dtype=np.int64)
    info_cols = np.array(sorted(set(range(n)) - set(pivot_cols.tolist())), dtype=np.int64)
    # after reduction, row r: c[pivot_cols[r]] + sum_j h[r, info_cols[j]] c[info_cols[j]] = 0
    parity_map = h[:, info_cols].astype(np.uint8)
    return pivot_cols, info_cols, parity_map


class LdpcCode:
    """Systematic encoder + normalized min-sum decoder for a given H."""

    def __init__(self, h: np.ndarray):
        h = np.asarray(h, dtype=np.uint8)
        self.h = h
        self.n = h.shape[1]
        self.pivot_cols, self.info_cols, self._parity_map = _gf2_systematic(h)
        self.k = len(self.info_cols)
        rows, cols = np.nonzero(h)
        order = np.argsort(rows, kind="stable")
        self._check_vars = cols[order].astype(np.int64)
        deg = h.sum(axis=1).astype(np.int64)
        self._check_ptr = np.concatenate([[0], np.cumsum(deg)]).astype(np.int64)

    @classmethod
    def from_alist(cls, text: str) -> "LdpcCode":
        return cls(parse_alist(text))

    @property
    def rate(self):
        return self.k / self.n

    def encode(self, info_bits) -> np.ndarray:
        info = np.asarray(info_bits, dtype=np.uint8)
        if info.shape != (self.k,):
            raise LengthMismatch(f"expected {self.k} info bits, got {info.shape}")
        cw = np.zeros(self.n, dtype=np.uint8)
        cw[self.info_cols] = info
        cw[self.pivot_cols] = (self._parity_map @ info) & 1
        return cw

    def decode(self, llrs):
        """Returns (info_bits, converged). Positive LLR means bit 0."""
        llrs = np.asarray(llrs, dtype=np.float64)
        if llrs.shape != (self.n,):
            raise LengthMismatch(f"expected {self.n} LLRs, got {llrs.shape}")
        bits, ok, _ = kernels.ldpc_decode(llrs, self._check_ptr, self._check_vars,
                                          MAX_ITERATIONS, MINSUM_ALPHA)
        return bits[self.info_cols], ok

    def syndrome_ok(self, codeword) -> bool:
        return not ((self.h @ np.asarray(codeword, dtype=np.uint8)) & 1).any()


def _crc32_bits(bits: np.ndarray) -> np.ndarray:
    data = np.packbits(bits)
    crc = zlib.crc32(data.tobytes()) & 0xFFFFFFFF
    return np.array([(crc >> (31 - i)) & 1 for i in range(32)], dtype=np.uint8)


class NullCode:
    """Pass-through 'code': payload + CRC-32, hard decisions on decode."""

    def __init__(self, k: int = 1024):
        self.k = k
        self.n = k + 32

    @property
    def rate(self):
        return self.k / self.n

    def encode(self, info_bits) -> np.ndarray:
        info = np.asarray(info_bits, dtype=np.uint8)
        if info.shape != (self.k,):
            raise LengthMismatch(f"expected {self.k} info bits, got {info.shape}")
        return np.concatenate([info, _crc32_bits(info)])

    def decode(self, llrs):
        llrs = np.asarray(llrs, dtype=np.float64)
        if llrs.shape != (self.n,):
            raise LengthMismatch(f"expected {self.n} LLRs, got {llrs.shape}")
        bits = (llrs < 0).astype(np.uint8)
        info, crc = bits[:self.k], bits[self.k:]
        ok = bool((crc == _crc32_bits(info)).all())
        return info, ok


def default_alist_text() -> str:
    from importlib import resources
    return resources.files("openisac.data").joinpath("ldpc_n648_r12.alist").read_text()


def build_code(cfg):
    """Code selected by config: 'ldpc' (default matrix or fec.alist) or 'null'."""
    if cfg.fec_mode == "null":
        return NullCode()
    if cfg.fec_alist:
        with open(cfg.fec_alist, "r", encoding="utf-8") as fh:
            return LdpcCode.from_alist(fh.read())
    return LdpcCode.from_alist(default_alist_text())
