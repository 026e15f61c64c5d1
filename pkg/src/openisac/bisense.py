"""Bistatic sensing at the UE with over-the-air timing refinement.

Builds sensing channel symbols out of the communication receiver's output:
hard-decision symbol reconstruction, fractional timing from adjacent
delay-spectrum bins, windowed regression of the sampling-interval-induced
drift, a recursive cumulative timing tracker, and per-cell phase
compensation.  The compensated frames feed the same downstream chain as the
monostatic path (clutter filter, periodogram, micro-Doppler); delays come
out relative to the line-of-sight path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import FramePlan, SystemConfig
from .errors import InsufficientFrames, ZeroPeak
from .phytx import zc_generate

SQRT2 = math.sqrt(2.0)


@dataclass
class DelayEstimate:
    k_max: int
    delta_frac: float
    k_tau: float          # wrapped integer bin + fractional part, samples
    tau_s: float


def quinn_fractional(delay_spectrum: np.ndarray, k_max: int) -> float:
    """Fractional peak offset from the two adjacent complex bins.

    Uses the real part of the neighbor/peak ratios; candidates from the
    right and left neighbors are reconciled by the positivity rule and the
    result is clamped to [-0.5, 0.5].
    """
    n = len(delay_spectrum)
    p0 = delay_spectrum[k_max % n]
    if abs(p0) == 0:
        raise ZeroPeak("delay spectrum peak has zero magnitude")
    r_pos = (delay_spectrum[(k_max + 1) % n] / p0).real
    r_neg = (delay_spectrum[(k_max - 1) % n] / p0).real
    d_pos = r_pos / (r_pos - 1.0) if r_pos != 1.0 else 0.5
    d_neg = r_neg / (1.0 - r_neg) if r_neg != 1.0 else -0.5
    delta = d_pos if (d_pos > 0 and d_neg > 0) else d_neg
    return float(np.clip(delta, -0.5, 0.5))


def delay_estimate(delay_spectrum: np.ndarray, cfg: SystemConfig) -> DelayEstimate:
    """Peak bin plus fractional refinement, wrapped to signed samples."""
    n = len(delay_spectrum)
    k_max = int(np.argmax(np.abs(delay_spectrum) ** 2))
    delta = quinn_fractional(delay_spectrum, k_max)
    k_int = k_max if k_max <= n // 2 else k_max - n
    k_tau = k_int + delta
    return DelayEstimate(k_max=k_max, delta_frac=delta, k_tau=k_tau,
                         tau_s=k_tau / cfg.bandwidth_hz)


def reconstruct_symbols(eq_cells: np.ndarray, cfg: SystemConfig,
                        plan: FramePlan) -> np.ndarray:
    """Unit-power transmit symbol estimates for every grid cell.

    Data cells take hard QPSK decisions on the equalized values (sign of
    zero counts as +1); sync and pilot cells are the known reference
    sequence; null subcarriers stay zero.
    """
    n, m = eq_cells.shape
    zc = zc_generate(n, cfg.zc_root).values
    out = np.empty_like(eq_cells)
    re = np.where(eq_cells.real >= 0, 1.0, -1.0)
    im = np.where(eq_cells.imag >= 0, 1.0, -1.0)
    out[:] = (re + 1j * im) / SQRT2
    out[:, cfg.sync_symbol_index] = zc
    pilots = np.asarray(plan.pilots, np.int64)
    cols = np.arange(m) != cfg.sync_symbol_index
    out[np.ix_(pilots, np.nonzero(cols)[0])] = zc[pilots, None]
    if plan.nulls:
        out[np.fromiter(plan.nulls, np.int64), :] = 0.0
    return out


def channel_symbols(grid_cells: np.ndarray, reconstructed: np.ndarray) -> np.ndarray:
    """Element-wise division by the reconstructed symbols (zeros stay zero)."""
    out = np.zeros_like(grid_cells)
    live = np.abs(reconstructed) > 0
    out[live] = grid_cells[live] / reconstructed[live]
    return out


# ---------------------------------------------------------------------------
# SIO window regression and the recursive tracker

@dataclass
class SensingTracker:
    """Recursive cumulative timing-offset tracker with windowed SIO updates.

    Gains are copied from the config at construction and stay mutable so
    the control interface can retune them between frames.
    """
    cfg: SystemConfig
    k_sens: float = 0.0
    eps_sio: float = 0.0            # samples of drift per frame
    dt_as_s: float = 0.0            # average interval offset of the last window
    mu: float = 0.0
    mu_default: float = 0.0
    mu_boost: float = 0.0
    err_thresh: float = 0.0
    escalation_frames: int = 0
    boost_counter: int = 0
    window_index: int = 0
    seeded: bool = False
    window: list = field(default_factory=list)   # (k_tau, k_to_from_frame)
    last_error: float = 0.0

    def __post_init__(self):
        self.mu = self.cfg.mu_default
        self.mu_default = self.cfg.mu_default
        self.mu_boost = self.cfg.mu_boost
        self.err_thresh = self.cfg.err_thresh_samples
        self.escalation_frames = self.cfg.escalation_frames

    def windows_completed(self) -> int:
        return self.window_index


def sio_window_update(tracker: SensingTracker, frame_records) -> SensingTracker:
    """Least-squares drift slope over one full window of frames.

    ``frame_records`` holds (k_tau, k_to_applied_from_that_frame) pairs; the
    in-window integer corrections are added back so the reconstructed delay
    trajectory is continuous before fitting the slope.
    """
    gw = tracker.cfg.sio_window_frames
    if len(frame_records) != gw:
        raise InsufficientFrames(f"need exactly {gw} frames, got {len(frame_records)}")
    k_tau = np.array([r[0] for r in frame_records], dtype=np.float64)
    k_to = np.array([r[1] for r in frame_records], dtype=np.float64)
    accum = np.concatenate([[0.0], np.cumsum(k_to[:-1])])
    k_cont = k_tau + accum
    ell = np.arange(gw, dtype=np.float64)
    slope = np.polyfit(ell, k_cont, 1)[0]
    tracker.eps_sio = float(slope)
    cfg = tracker.cfg
    tracker.dt_as_s = float(slope * cfg.t_s / (cfg.symbols_per_frame * cfg.n_s))
    tracker.window_index += 1
    return tracker


def tracker_step(tracker: SensingTracker, k_tau_meas: float,
                 k_to_prev: int) -> SensingTracker:
    """One recursion step of the cumulative sensing timing estimate.

    ``k_to_prev`` is the integer correction applied from the previous frame
    (so it acts on the current block).  The tracking error is the
    innovation against the drift-and-correction feed-forward prediction;
    measuring it against the raw previous estimate would leave it pinned at
    one frame's worth of drift, permanently above the escalation threshold
    at realistic clock offsets.  The proportional gain escalates after a
    sustained run of large errors and drops back once the error is inside
    the threshold again.
    """
    if not tracker.seeded:
        tracker.k_sens = float(k_tau_meas)
        tracker.seeded = True
        tracker.last_error = 0.0
        return tracker
    prediction = tracker.k_sens + tracker.eps_sio - k_to_prev
    e = k_tau_meas - prediction
    if abs(e) > tracker.err_thresh:
        tracker.boost_counter += 1
    else:
        tracker.boost_counter = 0
    tracker.mu = tracker.mu_boost if tracker.boost_counter > tracker.escalation_frames \
        else tracker.mu_default
    tracker.k_sens = prediction + tracker.mu * e
    tracker.last_error = float(e)
    return tracker


def compensate(channel_cells: np.ndarray, tracker: SensingTracker,
               cfg: SystemConfig) -> np.ndarray:
    """Remove the tracked timing offset and intra-frame drift per cell.

    Multiplies cell (n, m) by exp(+j*2*pi*n*(k_sens + m*N_s*dTas/Ts)/N)
    with n taken as the signed physical frequency index (bins above N/2
    are negative baseband frequencies, so a fractional offset would
    otherwise leave the upper half-band mis-rotated).  Before the first
    completed SIO window the drift term is zero.
    """
    n, m = channel_cells.shape
    dt_samples = tracker.dt_as_s / cfg.t_s if tracker.windows_completed() else 0.0
    n_idx = np.arange(n)
    n_signed = np.where(n_idx < n // 2, n_idx, n_idx - n)
    m_idx = np.arange(m)
    phase = 2 * np.pi * np.outer(n_signed, tracker.k_sens + m_idx * cfg.n_s * dt_samples) / n
    return channel_cells * np.exp(1j * phase)


class BisenseProcessor:
    """Per-frame bistatic pipeline driven by the receiver's frame results.

    Feeding a FrameResult yields the compensated sensing channel frame
    (or the uncompensated one when compensation is disabled, the baseline
    the clutter-suppression comparison uses).
    """

    def __init__(self, cfg: SystemConfig, plan: FramePlan | None = None,
                 compensation=True):
        self.cfg = cfg
        self.plan = plan or FramePlan(cfg)
        self.tracker = SensingTracker(cfg)
        self.compensation = compensation
        self.prev_k_to = 0
        self.delay_log = []

    def process_frame(self, frame_result) -> np.ndarray:
        cfg = self.cfg
        est = frame_result.est
        d = delay_estimate(est.delay_spectrum, cfg)
        self.delay_log.append(d)
        tracker_step(self.tracker, d.k_tau, self.prev_k_to)
        self.tracker.window.append((d.k_tau, frame_result.k_to_applied))
        if len(self.tracker.window) == cfg.sio_window_frames:
            sio_window_update(self.tracker, self.tracker.window)
            self.tracker.window = []
        self.prev_k_to = frame_result.k_to_applied

        b_tilde = reconstruct_symbols(frame_result.eq.eq_cells, cfg, self.plan)
        f_ue = channel_symbols(frame_result.grid.cells, b_tilde)
        if not self.compensation:
            return f_ue
        return compensate(f_ue, self.tracker, cfg)
