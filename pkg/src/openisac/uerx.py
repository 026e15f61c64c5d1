"""UE receiver: acquisition, tracking, demodulation, and soft output.

A two-state machine drives reception.  SYNC_SEARCH slides the local sync
waveform over a two-frame block to find frame timing and estimates a coarse
carrier offset from cyclic-prefix redundancy.  NORMAL processes one frame
per block: channel estimation from the full-band sync symbol, delay-domain
timing tracking, pilot-phase regression for carrier/sampling-clock offsets,
channel propagation across the frame, one-tap equalization, and LLR output.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .chansim import phasor_ramp
from .config import FramePlan, SystemConfig, FreqCorrectionMode
from .errors import SingularNormalEquations
from .phytx import ResourceGrid, sync_waveform, zc_generate
from .streambuf import SampleBuffer

SQRT2 = math.sqrt(2.0)

# loss-of-lock thresholds
TIMING_FAIL_FRAMES = 3
SNR_FAIL_FRAMES = 10
SNR_FAIL_DB = 0.0
RETUNE_TRIGGER = 0.1       # |f_o| above this fraction of delta_f forces a retune
REFERENCE_TRIM_GAIN = 0.5


class Phase(enum.Enum):
    SYNC_SEARCH = "SYNC_SEARCH"
    NORMAL = "NORMAL"


@dataclass
class SyncState:
    phase: Phase = Phase.SYNC_SEARCH
    k_to: int = 0                  # pending timing correction, samples
    f_o_hz: float = 0.0            # latest per-frame frequency offset estimate
    dts_s: float = 0.0             # latest sampling interval offset estimate
    applied_freq_hz: float = 0.0   # cumulative digital retunes
    lock_quality: float = 0.0
    frames_in_lock: int = 0
    timing_fail_count: int = 0
    snr_fail_count: int = 0


@dataclass
class ChannelEstimate:
    h_sync: np.ndarray             # per-subcarrier channel at the sync symbol
    delay_spectrum: np.ndarray     # complex delay response of h_sync
    k_max: int
    k_to: int                      # integer timing correction implied by k_max
    f_o_hz: float = 0.0
    dts_s: float = 0.0


@dataclass
class PilotRegression:
    phases: np.ndarray             # unwrapped pilot phases
    weights: np.ndarray
    theta: tuple                   # (f_o_hz, dts_s)


@dataclass
class EqualizedFrame:
    eq_cells: np.ndarray           # equalized grid (data + pilot cells)
    data_symbols: np.ndarray       # DATA cells in fill order
    llrs: np.ndarray               # two LLRs per data symbol (re, im)
    sigma_eff2: float
    pilot_snr_db: float
    erasures: int


# ---------------------------------------------------------------------------
# acquisition

def sync_search(block: np.ndarray, sync_ref: np.ndarray, cfg: SystemConfig,
                threshold=None):
    """Normalized sliding correlation against the local sync waveform.

    Returns None when no candidate clears the threshold, else a dict with
    the timing correction k_to, the peak metric, and the raw peak index.
    """
    block = np.asarray(block, np.complex128)
    ref = np.asarray(sync_ref, np.complex128)
    n_ref = len(ref)
    corr = scipy.signal.fftconvolve(block, np.conj(ref[::-1]), mode="valid")
    power = np.concatenate([[0.0], np.cumsum(np.abs(block) ** 2)])
    window_energy = power[n_ref:] - power[:-n_ref]
    ref_energy = float(np.sum(np.abs(ref) ** 2))
    # floor the window energy relative to the block average so silent
    # stretches cannot produce spurious near-0/0 metric spikes
    floor = 0.05 * window_energy.mean()
    denom = np.maximum(np.maximum(window_energy, floor) * ref_energy, 1e-300)
    metric = np.abs(corr) ** 2 / denom
    k_peak = int(np.argmax(metric))
    peak = float(metric[k_peak])
    if peak < (cfg.sync_threshold if threshold is None else threshold):
        return None
    k_to = k_peak - cfg.sync_symbol_index * cfg.n_s - cfg.n_lag
    return {"k_to": int(k_to), "metric": peak, "k_peak": k_peak}


def cp_cfo_estimate(block: np.ndarray, cfg: SystemConfig) -> float:
    """Coarse carrier offset from CP redundancy, accumulated over symbols.

    Unambiguous within +-delta_f/2; the block must be symbol-aligned.
    """
    n, n_s = cfg.num_subcarriers, cfg.n_s
    nsym = len(block) // n_s
    acc = 0.0 + 0.0j
    for m in range(nsym):
        seg = block[m * n_s:(m + 1) * n_s]
        acc += np.vdot(seg[:cfg.cp_len], seg[n:n + cfg.cp_len])
    return float(np.angle(acc) / (2 * np.pi * n * cfg.t_s))


# ---------------------------------------------------------------------------
# per-frame processing

class Derotator:
    """Phase-continuous digital frequency compensation.

    Retunes change the slope from a given absolute sample onward while the
    accumulated phase carries over, the way a hardware retune behaves.
    Re-anchoring the ramp at t=0 on every retune would randomize the common
    phase of each frame and wreck cross-frame sensing coherence.
    """

    def __init__(self, t_s: float):
        self.t_s = t_s
        self.freq_hz = 0.0
        self._phase = 0.0
        self._anchor = 0

    def retune(self, delta_hz: float, at_sample: int):
        self._phase += 2 * np.pi * self.freq_hz * (at_sample - self._anchor) * self.t_s
        self._anchor = at_sample
        self.freq_hz += delta_hz

    def apply(self, block: np.ndarray, start_sample: int) -> np.ndarray:
        if self.freq_hz == 0.0 and self._phase == 0.0:
            return block
        omega = -2 * np.pi * self.freq_hz * self.t_s
        ramp = phasor_ramp(omega, start_sample - self._anchor, len(block),
                           phase0=-self._phase)
        return block * ramp


def demod_frame(block: np.ndarray, cfg: SystemConfig,
                derotator: Derotator | None = None, start_sample: int = 0,
                frame_index: int = 0) -> ResourceGrid:
    """CP strip + forward DFT; removes the applied digital retune first."""
    block = np.asarray(block, np.complex128)
    if derotator is not None:
        block = derotator.apply(block, start_sample)
    n, n_s = cfg.num_subcarriers, cfg.n_s
    m = len(block) // n_s
    sym = block[:m * n_s].reshape(m, n_s)[:, cfg.cp_len:]
    cells = np.fft.fft(sym.T, axis=0) / math.sqrt(n)
    return ResourceGrid(cells=cells, frame_index=frame_index)


def estimate_channel(grid: ResourceGrid, zc_values: np.ndarray,
                     cfg: SystemConfig) -> ChannelEstimate:
    """Channel at the sync symbol plus the delay-domain timing readout.

    The inverse transform runs over subcarriers reordered into ascending
    physical frequency (bins above N/2 are negative baseband frequencies),
    so a fractional sample delay yields one clean kernel instead of two
    half-band kernels offset by its fractional phase.
    """
    n = cfg.num_subcarriers
    h_sync = grid.cells[:, cfg.sync_symbol_index] / zc_values
    delay_spectrum = math.sqrt(n) * np.fft.ifft(np.fft.fftshift(h_sync))
    k_max = int(np.argmax(np.abs(delay_spectrum) ** 2))
    if k_max <= n // 2:
        k_to = k_max - cfg.n_lag
    else:
        k_to = k_max - n - cfg.n_lag
    return ChannelEstimate(h_sync=h_sync, delay_spectrum=delay_spectrum,
                           k_max=k_max, k_to=int(k_to))


def pilot_regression(grid: ResourceGrid, cfg: SystemConfig) -> PilotRegression:
    """Weighted fit of cross-symbol pilot phases to (f_o, dTs).

    Symbol pairs straddling the sync column are skipped so multipath does
    not mix the full-band reference into the pilot autocorrelation.
    """
    pilots = np.asarray(cfg.pilot_indices, np.int64)
    cells = grid.cells[pilots, :]
    m_total = cells.shape[1]
    r = np.conj(cells[:, :-1]) * cells[:, 1:]
    keep = np.ones(m_total - 1, bool)
    for skip in (cfg.sync_symbol_index - 1, cfg.sync_symbol_index):
        if 0 <= skip < m_total - 1:
            keep[skip] = False
    if not keep.any():
        raise SingularNormalEquations("no usable symbol pairs")
    r_bar = r[:, keep].mean(axis=1)
    weights = np.abs(r_bar) ** 2
    if not np.any(weights > 0):
        raise SingularNormalEquations("all autocorrelation weights are zero")
    phases = np.unwrap(np.angle(r_bar))
    # scaled design matrix [1, -n] keeps the normal equations well conditioned
    a = np.column_stack([np.ones(len(pilots)), -pilots.astype(np.float64)])
    aw = a * weights[:, None]
    ata = a.T @ aw
    if abs(np.linalg.det(ata)) < 1e-30:
        raise SingularNormalEquations("degenerate pilot geometry")
    x = np.linalg.solve(ata, aw.T @ phases)
    f_o = x[0] / (2 * np.pi * cfg.t_o)
    dts = x[1] / (2 * np.pi * cfg.delta_f * cfg.n_s)
    return PilotRegression(phases=phases, weights=weights, theta=(f_o, dts))


def propagate_and_equalize(grid: ResourceGrid, est: ChannelEstimate,
                           cfg: SystemConfig, plan: FramePlan) -> EqualizedFrame:
    """Extend the sync-symbol channel across the frame and equalize.

    The per-cell channel phase advances by (m - m_sync) times the fitted
    carrier/sampling offsets; data cells come back with QPSK LLRs whose
    noise scale is measured on the equalized pilots.
    """
    n, m = grid.cells.shape
    m_idx = np.arange(m) - cfg.sync_symbol_index
    n_idx = np.arange(n)
    per_symbol = est.f_o_hz * cfg.t_o - np.outer(n_idx * cfg.delta_f * cfg.n_s,
                                                 np.ones(m)) * est.dts_s
    phase = 2 * np.pi * per_symbol * m_idx[None, :]
    h_full = est.h_sync[:, None] * np.exp(1j * phase)

    eq = np.zeros_like(grid.cells)
    live = np.abs(h_full) > 1e-12
    eq[live] = grid.cells[live] / h_full[live]
    erasures = int(np.size(live) - np.count_nonzero(live))

    zc = zc_generate(n, cfg.zc_root).values
    pilots = np.asarray(plan.pilots, np.int64)
    cols = [c for c in range(m) if c != cfg.sync_symbol_index]
    pilot_eq = eq[np.ix_(pilots, cols)]
    residual = pilot_eq - zc[pilots, None]
    sigma_eff2 = float(np.mean(np.abs(residual) ** 2))
    sig = float(np.mean(np.abs(pilot_eq) ** 2))
    if sig <= 0.0:
        snr_db = -300.0
    else:
        snr_db = 10 * np.log10(sig / max(sigma_eff2, 1e-300))

    dsub = np.fromiter(plan.data_subcarriers, np.int64)
    data = eq[np.ix_(dsub, cols)].T.reshape(-1)
    scale = 4 * SQRT2 / max(sigma_eff2, 1e-15)
    llrs = np.empty(2 * len(data))
    llrs[0::2] = scale * data.real
    llrs[1::2] = scale * data.imag
    return EqualizedFrame(eq_cells=eq, data_symbols=data, llrs=llrs,
                          sigma_eff2=sigma_eff2, pilot_snr_db=snr_db,
                          erasures=erasures)


def lock_supervisor(state: SyncState, k_to: int, pilot_snr_db: float,
                    cfg: SystemConfig) -> SyncState:
    """Loss-of-lock hysteresis on timing excursions and pilot SNR."""
    if abs(k_to) > cfg.cp_len / 2:
        state.timing_fail_count += 1
    else:
        state.timing_fail_count = 0
    if pilot_snr_db < SNR_FAIL_DB:
        state.snr_fail_count += 1
    else:
        state.snr_fail_count = 0
    if (state.timing_fail_count >= TIMING_FAIL_FRAMES
            or state.snr_fail_count >= SNR_FAIL_FRAMES):
        state.phase = Phase.SYNC_SEARCH
        state.frames_in_lock = 0
        state.timing_fail_count = 0
        state.snr_fail_count = 0
    else:
        state.frames_in_lock += 1
    return state


# ---------------------------------------------------------------------------
# receiver driver

@dataclass
class FrameResult:
    frame_index: int
    grid: ResourceGrid
    est: ChannelEstimate
    reg: PilotRegression
    eq: EqualizedFrame
    k_to_applied: int              # correction issued after this frame
    state_phase: Phase


class UeReceiver:
    """Push-based receiver: feed samples, collect per-frame results.

    The caller owns payload decoding and bistatic processing; this class
    produces the per-frame grids, estimates, and equalizer output, applies
    timing corrections to its own sample fetching, and manages frequency
    compensation per the configured correction mode (digital retune or a
    reference-clock actuator callback).
    """

    def __init__(self, cfg: SystemConfig, plan: FramePlan | None = None,
                 clock_actuator=None):
        self.cfg = cfg
        self.plan = plan or FramePlan(cfg)
        self.zc = zc_generate(cfg.num_subcarriers, cfg.zc_root).values
        self.sync_ref = sync_waveform(cfg)
        self.state = SyncState()
        self.sync_threshold = cfg.sync_threshold   # mutable via control
        self.clock_actuator = clock_actuator
        self.derotator = Derotator(cfg.t_s)
        self.buf = SampleBuffer()
        self.buf_start = 0          # absolute stream index of the buffer head
        self.frame_index = 0
        self.search_step = cfg.symbols_per_frame * cfg.n_s

    def _consume(self, count):
        self.buf_start += count
        return self.buf.take(count)

    def _drop(self, count):
        self.buf.drop(count)
        self.buf_start += count

    def process(self, samples) -> list:
        """Feed receive samples (any chunking); returns finished FrameResults."""
        self.buf.append(samples)
        results = []
        while True:
            if self.state.phase is Phase.SYNC_SEARCH:
                if not self._try_acquire():
                    break
            else:
                res = self._try_frame()
                if res is None:
                    break
                results.append(res)
        return results

    # -- SYNC_SEARCH ---------------------------------------------------------

    def _try_acquire(self) -> bool:
        need = 2 * self.cfg.symbols_per_frame * self.cfg.n_s
        if len(self.buf) < need:
            return False
        block = self.buf.peek(need)
        hit = sync_search(block, self.sync_ref, self.cfg,
                          threshold=self.sync_threshold)
        if hit is None:
            self._drop(self.search_step)
            return True
        start = hit["k_peak"] - self.cfg.sync_symbol_index * self.cfg.n_s - self.cfg.n_lag
        while start < 0:
            start += self.cfg.samples_per_frame
        f_coarse = cp_cfo_estimate(block[start:], self.cfg)
        self._apply_freq(f_coarse)
        self._drop(start)
        self.state.phase = Phase.NORMAL
        self.state.lock_quality = hit["metric"]
        self.state.k_to = 0
        self.state.frames_in_lock = 0
        return True

    # -- NORMAL ---------------------------------------------------------------

    def _try_frame(self):
        cfg = self.cfg
        spf = cfg.samples_per_frame
        pending = self.state.k_to
        if pending > 0:
            if len(self.buf) < spf + pending:
                return None
            self._drop(pending)
            block = self._consume(spf)
        elif pending < 0:
            take = spf + pending   # fetch fewer, prepend zeros
            if len(self.buf) < take:
                return None
            block = np.concatenate([np.zeros(-pending, np.complex128),
                                    self._consume(take)])
        else:
            if len(self.buf) < spf:
                return None
            block = self._consume(spf)
        self.state.k_to = 0

        grid = demod_frame(block, cfg, derotator=self.derotator,
                           start_sample=self.buf_start - spf,
                           frame_index=self.frame_index)
        est = estimate_channel(grid, self.zc, cfg)
        try:
            reg = pilot_regression(grid, cfg)
            est.f_o_hz, est.dts_s = reg.theta
        except SingularNormalEquations:
            reg = PilotRegression(np.zeros(len(cfg.pilot_indices)),
                                  np.zeros(len(cfg.pilot_indices)), (0.0, 0.0))
        eq = propagate_and_equalize(grid, est, cfg, self.plan)

        self.state.f_o_hz = est.f_o_hz
        self.state.dts_s = est.dts_s
        self._compensate_frequency(est.f_o_hz, est.dts_s)
        k_to_applied = est.k_to
        self.state.k_to = k_to_applied
        lock_supervisor(self.state, est.k_to, eq.pilot_snr_db, cfg)
        if self.state.phase is Phase.SYNC_SEARCH:
            k_to_applied = 0
            self.state.k_to = 0

        res = FrameResult(frame_index=self.frame_index, grid=grid, est=est,
                          reg=reg, eq=eq, k_to_applied=k_to_applied,
                          state_phase=self.state.phase)
        self.frame_index += 1
        return res

    # -- frequency compensation ------------------------------------------------

    def _apply_freq(self, f_hz):
        if self.cfg.freq_correction_mode is FreqCorrectionMode.DIGITAL_RETUNE:
            self.derotator.retune(f_hz, self.buf_start)
            self.state.applied_freq_hz = self.derotator.freq_hz
        elif self.clock_actuator is not None:
            self.clock_actuator(cfo_adjust_hz=f_hz, sio_adjust_s=0.0)

    def _compensate_frequency(self, f_o_hz, dts_s):
        if self.cfg.freq_correction_mode is FreqCorrectionMode.DIGITAL_RETUNE:
            # per-frame digital retune; the sampling clock stays untouched
            self.derotator.retune(f_o_hz, self.buf_start)
            self.state.applied_freq_hz = self.derotator.freq_hz
        elif self.clock_actuator is not None:
            self.clock_actuator(cfo_adjust_hz=REFERENCE_TRIM_GAIN * f_o_hz,
                                sio_adjust_s=REFERENCE_TRIM_GAIN * dts_s)
