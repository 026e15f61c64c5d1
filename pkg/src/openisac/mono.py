"""Monostatic sensing chain.

Echo samples -> receive grid (CP strip + FFT) -> element-wise division by
the stored transmit grid -> slow-time concatenation -> stride downsampling
-> slow-time high-pass clutter rejection -> sensing-frame repacking ->
delay-Doppler periodogram with peak extraction.  A micro-Doppler branch
taps the continuous filtered stream and computes a spectrogram of one delay
bin.  The bistatic stack reuses this module downstream of its own
compensation.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.signal

from . import kernels
from .config import SystemConfig
from .errors import (InvariantViolation, StreamTooShort, UnstableFilter,
                     WindowOutOfRange)
from .phytx import ResourceGrid, ofdm_demodulate
from .streambuf import SampleBuffer

DB_FLOOR = -300.0


class MapKind(enum.Enum):
    RANGE_DOPPLER = 0
    SPECTROGRAM = 1


@dataclass
class SenseMap:
    """Power map in dB with axis metadata.

    rows follow the delay axis (range-Doppler) or the frame-time axis
    (spectrogram); columns follow Doppler with zero centered.
    """
    values_db: np.ndarray
    delay_axis_s: np.ndarray
    doppler_axis_hz: np.ndarray
    kind: MapKind

    def __post_init__(self):
        rows, cols = self.values_db.shape
        if len(self.delay_axis_s) != rows or len(self.doppler_axis_hz) != cols:
            raise InvariantViolation("map-axes", "axis lengths must match the matrix")


@dataclass(frozen=True)
class Detection:
    delay_s: float
    doppler_hz: float
    power_db: float
    bin: tuple


def to_db(power):
    return 10.0 * np.log10(np.maximum(power, 10.0 ** (DB_FLOOR / 10.0)))


# ---------------------------------------------------------------------------
# element-wise division

def demap_echo(rx_samples, tx_grid: ResourceGrid, cfg: SystemConfig) -> np.ndarray:
    """One frame of echo samples -> channel symbols (receive grid / tx grid).

    Cells whose transmit symbol is zero (null subcarriers) cannot be
    divided and are returned as zero.
    """
    rx_grid = ofdm_demodulate(np.asarray(rx_samples, np.complex128), cfg)
    tx = tx_grid.cells
    out = np.zeros_like(rx_grid)
    live = np.abs(tx) > 0
    out[live] = rx_grid[live] / tx[live]
    return out


# ---------------------------------------------------------------------------
# slow-time stream stages

class StridedDownsampler:
    """Keeps slow-time columns whose global index is 0 mod the stride."""

    def __init__(self, stride: int):
        self.set_stride(stride)
        self.index = 0

    def set_stride(self, stride: int):
        if stride < 1:
            raise InvariantViolation("stride", "must be >= 1")
        self.stride = int(stride)

    def process(self, cols: np.ndarray) -> np.ndarray:
        n = cols.shape[1]
        idx = np.arange(self.index, self.index + n)
        self.index += n
        keep = (idx % self.stride) == 0
        return cols[:, keep]


class Repacker:
    """Groups a column stream into consecutive blocks of M_s columns."""

    def __init__(self, m_s: int):
        self.m_s = int(m_s)
        self.buf = None

    def process(self, cols: np.ndarray):
        if self.buf is None:
            self.buf = cols.copy()
        else:
            self.buf = np.concatenate([self.buf, cols], axis=1)
        frames = []
        while self.buf.shape[1] >= self.m_s:
            frames.append(self.buf[:, :self.m_s].copy())
            self.buf = self.buf[:, self.m_s:]
        return frames


class MtiFilter:
    """Causal slow-time IIR high-pass, one state per subcarrier."""

    def __init__(self, sos_rows, gain: float, nsub: int):
        rows = np.asarray(sos_rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != 5:
            raise UnstableFilter("expected rows of (b0, b1, b2, a1, a2)")
        for b0, b1, b2, a1, a2 in rows:
            poles = np.roots([1.0, a1, a2])
            if np.abs(poles).max() >= 1.0:
                raise UnstableFilter(f"pole magnitude {np.abs(poles).max():.6f} >= 1")
        dc = gain * np.prod([(r[0] + r[1] + r[2]) / (1 + r[3] + r[4]) for r in rows])
        if abs(dc) > 1e-6:
            raise InvariantViolation("mti-dc-gain", f"|H(DC)| = {abs(dc):.2e} > 1e-6")
        self.sos = rows
        self.gain = float(gain)
        self.nsub = nsub
        self.state = kernels.sos_state(rows, nsub)

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "MtiFilter":
        return cls(cfg.mti_sos, cfg.mti_gain, cfg.num_subcarriers)

    def reset(self):
        self.state = kernels.sos_state(self.sos, self.nsub)

    def process(self, cols: np.ndarray) -> np.ndarray:
        if cols.shape[1] == 0:
            return cols
        out = kernels.sos_stream(self.sos, cols, self.state)
        if self.gain != 1.0:
            out = out * self.gain
        return out

    def frequency_response(self, normalized_freq):
        """|H| at f (cycles/sample) from the coefficient rows."""
        sos6 = np.column_stack([self.sos[:, 0], self.sos[:, 1], self.sos[:, 2],
                                np.ones(len(self.sos)), self.sos[:, 3], self.sos[:, 4]])
        w, h = scipy.signal.sosfreqz(sos6, worN=2 * np.pi * np.atleast_1d(normalized_freq))
        return np.abs(h) * self.gain


# ---------------------------------------------------------------------------
# delay-Doppler periodogram

def periodogram(frame: np.ndarray, cfg: SystemConfig, window=True,
                stride=None) -> SenseMap:
    """2-D power map of one sensing frame (N x M_s channel symbols).

    Delay transform runs with a +j kernel (inverse DFT) over subcarriers,
    Doppler with a -j kernel over slow time; magnitude squared is scaled by
    1/(N*M_s).  Doppler columns are shifted so zero sits at the center.
    """
    n, m_s = frame.shape
    n_per, m_per = cfg.n_per, cfg.m_per
    if n_per < n or m_per < m_s:
        raise InvariantViolation("periodogram-size",
                                 f"nper={n_per} mper={m_per} vs frame {frame.shape}")
    # reorder subcarriers into ascending physical frequency so fractional
    # delays transform into one clean kernel (bins above N/2 sit at negative
    # baseband frequencies)
    frame = np.fft.fftshift(frame, axes=0)
    if window:
        frame = frame * np.outer(np.hamming(n), np.hamming(m_s))
    stage = np.fft.ifft(frame, n=n_per, axis=0) * n_per
    stage = np.fft.fft(stage, n=m_per, axis=1)
    per = (np.abs(stage) ** 2) / (n * m_s)
    per = np.fft.fftshift(per, axes=1)
    stride = cfg.stride if stride is None else stride
    delay_axis = np.arange(n_per) / (n_per * cfg.delta_f)
    doppler_axis = np.fft.fftshift(np.fft.fftfreq(m_per, d=stride * cfg.t_o))
    return SenseMap(values_db=to_db(per), delay_axis_s=delay_axis,
                    doppler_axis_hz=doppler_axis, kind=MapKind.RANGE_DOPPLER)


def find_peaks(sense_map: SenseMap, rel_threshold_db=None, max_peaks=None,
               cfg: SystemConfig | None = None):
    """Strict 3x3 local maxima within rel_threshold_db of the map maximum.

    Detections come back sorted by power descending; equal powers tie-break
    on ascending (delay bin, Doppler bin).
    """
    if sense_map.kind is not MapKind.RANGE_DOPPLER:
        raise InvariantViolation("map-kind", "peak search needs a range-Doppler map")
    if rel_threshold_db is None:
        rel_threshold_db = cfg.peak_rel_threshold_db if cfg else 15.0
    if max_peaks is None:
        max_peaks = cfg.max_peaks if cfg else 10
    v = sense_map.values_db
    is_peak = np.ones_like(v, dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            is_peak &= v > np.roll(np.roll(v, dr, axis=0), dc, axis=1)
    is_peak &= v >= v.max() - rel_threshold_db
    rows, cols = np.nonzero(is_peak)
    m_per = v.shape[1]
    dets = []
    for r, c in zip(rows, cols):
        k_f = (c - m_per // 2) % m_per  # back to unshifted bin index
        dets.append(Detection(delay_s=float(sense_map.delay_axis_s[r]),
                              doppler_hz=float(sense_map.doppler_axis_hz[c]),
                              power_db=float(v[r, c]),
                              bin=(int(r), int(k_f))))
    dets.sort(key=lambda d: (-d.power_db, d.bin[0], d.bin[1]))
    return dets[:max_peaks]


# ---------------------------------------------------------------------------
# micro-Doppler spectrogram

def micro_doppler(stream: np.ndarray, cfg: SystemConfig, bin_select="strongest",
                  effective_interval_s=None) -> SenseMap:
    """STFT spectrogram of one delay bin's slow-time sequence.

    ``bin_select`` is "strongest" (re-selected per STFT block) or a fixed
    integer delay bin.  ``stream`` is the filtered channel-symbol stream
    (N x L); its column spacing defaults to the downsampled symbol interval.
    """
    n, total = stream.shape
    m_w, m_h, m_md = cfg.stft_win, cfg.stft_hop, cfg.stft_nfft
    if total < m_w:
        raise StreamTooShort(f"need at least {m_w} columns, have {total}")
    if effective_interval_s is None:
        effective_interval_s = cfg.stride * cfg.t_o
    # as in the periodogram, transform over the physical frequency ordering
    delay_time = np.fft.ifft(np.fft.fftshift(stream, axes=0), axis=0)
    win = scipy.signal.windows.hann(m_w, sym=False)
    nframes = (total - m_w) // m_h + 1
    spt = np.empty((nframes, m_md))
    for j in range(nframes):
        blk = delay_time[:, j * m_h:j * m_h + m_w]
        if bin_select == "strongest":
            k_star = int(np.argmax(np.sum(np.abs(blk) ** 2, axis=1)))
        else:
            k_star = int(bin_select)
        seq = blk[k_star] * win
        spt[j] = np.abs(np.fft.fft(seq, n=m_md)) ** 2 / m_w
    spt = np.fft.fftshift(spt, axes=1)
    times = (np.arange(nframes) * m_h + m_w / 2) * effective_interval_s
    doppler_axis = np.fft.fftshift(np.fft.fftfreq(m_md, d=effective_interval_s))
    return SenseMap(values_db=to_db(spt), delay_axis_s=times,
                    doppler_axis_hz=doppler_axis, kind=MapKind.SPECTROGRAM)


# ---------------------------------------------------------------------------
# clutter-suppression metric

def msr(pre_stream: np.ndarray, post_stream: np.ndarray,
        m_start: int, m_avg: int) -> float:
    """Energy ratio (dB) before/after clutter filtering over a slow-time window.

    The window covers columns m_start .. m_start + m_avg inclusive.
    """
    end = m_start + m_avg + 1
    if m_start < 0 or end > pre_stream.shape[1] or end > post_stream.shape[1]:
        raise WindowOutOfRange(
            f"[{m_start}, {m_start + m_avg}] outside streams of "
            f"{pre_stream.shape[1]} / {post_stream.shape[1]} columns")
    e_pre = np.sum(np.abs(pre_stream[:, m_start:end]) ** 2)
    e_post = np.sum(np.abs(post_stream[:, m_start:end]) ** 2)
    return float(10.0 * np.log10(e_pre / max(e_post, 1e-300)))


# ---------------------------------------------------------------------------
# assembled chain

class SlowTimeChain:
    """Column stream -> downsample -> clutter filter -> repack -> maps.

    Shared by the monostatic processor and the bistatic sensing thread.
    The stride is re-read at every column batch, so it can be retargeted
    live between chunks.
    """

    def __init__(self, cfg: SystemConfig, window=True, record_streams=False):
        self.cfg = cfg
        self.window = window
        self.mti = MtiFilter.from_config(cfg)
        self.down = StridedDownsampler(cfg.stride)
        self.repack = Repacker(cfg.sensing_symbols)
        self.record_streams = record_streams
        self.pre_mti = []
        self.post_mti = []
        self.maps_emitted = 0

    def set_stride(self, stride: int):
        self.down.set_stride(stride)

    def set_mti(self, sos_rows, gain):
        self.mti = MtiFilter(sos_rows, gain, self.cfg.num_subcarriers)

    def feed(self, cols) -> list:
        kept = self.down.process(cols)
        if kept.shape[1] == 0:
            return []
        filtered = self.mti.process(kept)
        if self.record_streams:
            self.pre_mti.append(kept)
            self.post_mti.append(filtered)
        maps = []
        for frame in self.repack.process(filtered):
            maps.append(periodogram(frame, self.cfg, window=self.window,
                                    stride=self.down.stride))
            self.maps_emitted += 1
        return maps

    def recorded(self):
        empty = np.empty((self.cfg.num_subcarriers, 0), np.complex128)
        pre = np.concatenate(self.pre_mti, axis=1) if self.pre_mti else empty
        post = np.concatenate(self.post_mti, axis=1) if self.post_mti else empty
        return pre, post


class MonoProcessor:
    """Streaming monostatic chain from echo samples to range-Doppler maps.

    Frames are demapped against transmit grids supplied through add_grid
    (FIFO pairing); maps arrive once M_s downsampled, filtered columns
    accumulate.
    """

    def __init__(self, cfg: SystemConfig, window=True, record_streams=False):
        self.cfg = cfg
        self.chain = SlowTimeChain(cfg, window=window, record_streams=record_streams)
        self.grids = deque()
        self.buf = SampleBuffer()

    @property
    def maps_emitted(self):
        return self.chain.maps_emitted

    def set_stride(self, stride: int):
        self.chain.set_stride(stride)

    def add_grid(self, grid: ResourceGrid):
        self.grids.append(grid)

    def process(self, samples, bypass=False):
        """Feed echo samples (any chunking).

        Returns (maps, raw_frames); in bypass mode the demapped channel
        frames come back unprocessed for streaming out, otherwise they run
        through the slow-time chain and finished maps are returned.
        """
        self.buf.append(samples)
        spf = self.cfg.samples_per_frame
        maps, raw = [], []
        while len(self.buf) >= spf and self.grids:
            frame_samples = self.buf.take(spf)
            grid = self.grids.popleft()
            channel = demap_echo(frame_samples, grid, self.cfg)
            if bypass:
                raw.append(channel)
            else:
                maps.extend(self.chain.feed(channel))
        return maps, raw

    def recorded(self):
        return self.chain.recorded()
