"""Transmit chain: Zadoff-Chu references, scrambling, grid mapping, OFDM.

Bits -> scrambled/encoded QPSK -> resource grid (sync symbol + pilots + data
cells) -> time-domain samples with cyclic prefix.  The forward DFT pair used
throughout the package is unitary (``fft/sqrt(N)`` and ``ifft*sqrt(N)``), so
grid power and sample power agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig, FramePlan
from .errors import NotCoprime, Overflow, ZeroSeed

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ZcSequence:
    """Length-N constant-amplitude sequence with ideal circular autocorrelation."""
    values: np.ndarray
    root: int


@dataclass
class ResourceGrid:
    """N x M frequency-domain symbol matrix for one frame."""
    cells: np.ndarray
    frame_index: int

    @property
    def num_subcarriers(self):
        return self.cells.shape[0]

    @property
    def symbols(self):
        return self.cells.shape[1]


@dataclass
class CodedPayload:
    info_bits: np.ndarray
    coded_bits: np.ndarray
    scramble_seed: int


def zc_generate(n: int, q: int) -> ZcSequence:
    """Zadoff-Chu sequence of length n with root q (coprime with n)."""
    if math.gcd(q, n) != 1:
        raise NotCoprime(f"gcd({q}, {n}) != 1")
    k = np.arange(n, dtype=np.float64)
    if n % 2 == 0:
        phase = -np.pi * q * k * k / n
    else:
        phase = -np.pi * q * k * (k + 1) / n
    return ZcSequence(values=np.exp(1j * phase), root=q)


# ---------------------------------------------------------------------------
# scrambling: XOR with the LFSR stream of x^7 + x^4 + 1

_LFSR_PERIOD = 127


def lfsr_stream(seed: int, nbits: int) -> np.ndarray:
    """First ``nbits`` of the x^7+x^4+1 LFSR stream for a 7-bit seed."""
    if seed == 0:
        raise ZeroSeed("scrambler seed must be non-zero")
    state = seed & 0x7F
    period = np.empty(_LFSR_PERIOD, dtype=np.uint8)
    for i in range(_LFSR_PERIOD):
        out = ((state >> 6) ^ (state >> 3)) & 1
        state = ((state << 1) | out) & 0x7F
        period[i] = out
    reps = nbits // _LFSR_PERIOD + 1
    return np.tile(period, reps)[:nbits]


def scramble(bits: np.ndarray, seed: int) -> np.ndarray:
    """XOR ``bits`` with the LFSR stream; applying twice restores the input."""
    bits = np.asarray(bits, dtype=np.uint8)
    return bits ^ lfsr_stream(seed, len(bits))


# ---------------------------------------------------------------------------
# QPSK

def qpsk_map(bits: np.ndarray) -> np.ndarray:
    """Gray-mapped QPSK, two bits per symbol: (1-2b0 + j(1-2b1))/sqrt(2)."""
    bits = np.asarray(bits, dtype=np.uint8)
    if len(bits) % 2:
        raise ValueError("QPSK needs an even number of bits")
    b = bits.reshape(-1, 2).astype(np.float64)
    return ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1])) / SQRT2


def qpsk_unmap(symbols: np.ndarray) -> np.ndarray:
    sym = np.asarray(symbols)
    bits = np.empty(2 * len(sym), dtype=np.uint8)
    bits[0::2] = sym.real < 0
    bits[1::2] = sym.imag < 0
    return bits


def random_qpsk(count: int, seed) -> np.ndarray:
    """Seeded pseudo-random unit-power QPSK symbols (frame padding)."""
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=2 * count, dtype=np.uint8)
    return qpsk_map(bits)


# ---------------------------------------------------------------------------
# grid mapping and OFDM modulation

def map_grid(payload_symbols, cfg: SystemConfig, plan: FramePlan,
             frame_index: int, pad_seed: int = 0xC0FFEE) -> ResourceGrid:
    """Place payload QPSK onto the frame's DATA cells.

    DATA cells fill with m ascending (skipping the sync symbol), n ascending
    within the data subcarriers.  A short payload is padded with seeded
    pseudo-random QPSK so the transmitted frame keeps full average power.
    """
    payload_symbols = np.asarray(payload_symbols, dtype=np.complex128)
    capacity = plan.data_cells_per_frame
    if len(payload_symbols) > capacity:
        raise Overflow(f"payload {len(payload_symbols)} > capacity {capacity}")

    n, m = cfg.num_subcarriers, cfg.symbols_per_frame
    amp = cfg.cell_amplitude
    zc = zc_generate(n, cfg.zc_root).values

    pad = random_qpsk(capacity - len(payload_symbols),
                      np.random.SeedSequence([pad_seed, frame_index]))
    data = np.concatenate([payload_symbols, pad])

    cells = np.zeros((n, m), dtype=np.complex128)
    pilots = np.fromiter(plan.pilots, dtype=np.int64)
    dsub = np.fromiter(plan.data_subcarriers, dtype=np.int64)
    cols = np.array([c for c in range(m) if c != cfg.sync_symbol_index])
    # data fill order: m ascending, n ascending within data subcarriers
    if len(dsub):
        cells[np.ix_(dsub, cols)] = amp * data.reshape(len(cols), len(dsub)).T
    cells[pilots[:, None], cols[None, :]] = amp * zc[pilots, None]
    cells[:, cfg.sync_symbol_index] = amp * zc
    return ResourceGrid(cells=cells, frame_index=frame_index)


def read_data_cells(grid: ResourceGrid, cfg: SystemConfig, plan: FramePlan) -> np.ndarray:
    """Inverse of map_grid's placement: DATA cells in fill order, unit scale."""
    dsub = np.fromiter(plan.data_subcarriers, dtype=np.int64)
    cols = [c for c in range(cfg.symbols_per_frame) if c != cfg.sync_symbol_index]
    out = grid.cells[np.ix_(dsub, cols)]
    return (out / cfg.cell_amplitude).T.reshape(-1)


def ofdm_modulate(grid: ResourceGrid, cfg: SystemConfig) -> np.ndarray:
    """Unitary inverse DFT per symbol plus cyclic prefix, concatenated."""
    n, n_cp = cfg.num_subcarriers, cfg.cp_len
    time = np.fft.ifft(grid.cells, axis=0) * math.sqrt(n)
    with_cp = np.concatenate([time[n - n_cp:, :], time], axis=0)
    return np.ascontiguousarray(with_cp.T).reshape(-1)


def ofdm_demodulate(samples: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """CP strip + unitary forward DFT; returns the N x M received grid."""
    n, n_s = cfg.num_subcarriers, cfg.n_s
    m = len(samples) // n_s
    sym = samples[:m * n_s].reshape(m, n_s)[:, cfg.cp_len:]
    return np.fft.fft(sym.T, axis=0) / math.sqrt(n)


def sync_waveform(cfg: SystemConfig) -> np.ndarray:
    """Time-domain sync symbol (with CP) used as the correlation reference."""
    zc = zc_generate(cfg.num_subcarriers, cfg.zc_root).values
    time = np.fft.ifft(zc) * math.sqrt(cfg.num_subcarriers)
    return np.concatenate([time[cfg.num_subcarriers - cfg.cp_len:], time])
