"""Ground-truth channel oracle standing in for the over-the-air path.

Applies multipath (complex gain, delay, Doppler), the BS-UE clock
impairments (timing offset, carrier frequency offset, sampling interval
offset) and circular Gaussian noise.  The monostatic echo path shares the
transmitter clock, so it carries no clock impairments.

Delays are applied as exact all-pass phase ramps on overlapped FFT segments
(linear-convolution semantics with generous guards); the sampling interval
offset is applied by truly resampling the waveform at the receiver's
interval, so receiver-side approximations are tested against a stricter
model than they assume.  Output is deterministic for a fixed scenario seed
and independent of how the input is chunked.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft

from . import kernels
from .config import SystemConfig, parse_structured
from .errors import DelayExceedsCp, InvalidValue, NonPositiveRange

C_LIGHT = 299792458.0

MIX_TILE = 1 << 17
GUARD = 1 << 15
NOISE_TILE = 1 << 16
LINEAR_RAMP_SAMPLES = 1_000_000


class PathKind(enum.Enum):
    TARGET = "target"
    CLUTTER = "clutter"
    LOS = "los"


@dataclass(frozen=True)
class PathSpec:
    gain: complex
    delay_s: float
    doppler_hz: float
    kind: PathKind = PathKind.TARGET


@dataclass(frozen=True)
class ClockImpairments:
    timing_offset_s: float = 0.0
    cfo_hz: float = 0.0
    sio_s: float = 0.0           # per-sample interval error (Ts_rx = Ts - sio)
    drift_model: str = "constant"  # or "linear_ramp"


@dataclass(frozen=True)
class ChannelScenario:
    ue_paths: tuple = ()
    mono_paths: tuple = ()
    clocks: ClockImpairments = ClockImpairments()
    noise_psd: float = 0.0       # N0; noise variance is B * N0
    seed: int = 0
    clutter_doppler_max: float = 2.0

    def __post_init__(self):
        for p in tuple(self.ue_paths) + tuple(self.mono_paths):
            if p.delay_s < 0:
                raise InvalidValue("path.delay", "delays must be non-negative")
            if p.kind is PathKind.CLUTTER and abs(p.doppler_hz) > self.clutter_doppler_max:
                raise InvalidValue(
                    "path.doppler",
                    f"clutter paths must stay within +-{self.clutter_doppler_max} Hz")
        if self.clocks.drift_model not in ("constant", "linear_ramp"):
            raise InvalidValue("clock.drift_model", self.clocks.drift_model)


def target_params(rcs_m2, range_m, velocity_mps, f_c, seed=0) -> PathSpec:
    """Point reflector: two-way gain/delay/Doppler from RCS, range, velocity."""
    if range_m <= 0:
        raise NonPositiveRange(f"range {range_m} m")
    mag = math.sqrt(C_LIGHT ** 2 * rcs_m2 /
                    ((4 * math.pi) ** 3 * range_m ** 4 * f_c ** 2))
    phase = np.random.default_rng(seed).uniform(0, 2 * math.pi)
    return PathSpec(gain=mag * np.exp(1j * phase),
                    delay_s=2 * range_m / C_LIGHT,
                    doppler_hz=2 * velocity_mps * f_c / C_LIGHT,
                    kind=PathKind.TARGET)


@dataclass(frozen=True)
class TruthRecord:
    """Exact injected parameters, for scoring estimators."""
    mono_paths: tuple
    ue_paths: tuple
    clocks: ClockImpairments
    t_s: float

    def drift_seconds(self, k):
        """Receive-clock timing drift tau_d + integrated SIO at sample k."""
        k = np.asarray(k, dtype=np.float64)
        sio = self.clocks.sio_s
        if self.clocks.drift_model == "linear_ramp":
            ramp = np.minimum(k, LINEAR_RAMP_SAMPLES)
            integral = sio * (ramp ** 2 / (2 * LINEAR_RAMP_SAMPLES)
                              + np.maximum(k - LINEAR_RAMP_SAMPLES, 0))
        else:
            integral = sio * k
        return self.clocks.timing_offset_s + integral

    def drift_samples(self, k):
        return self.drift_seconds(k) / self.t_s


def ground_truth(scenario: ChannelScenario, cfg: SystemConfig) -> TruthRecord:
    return TruthRecord(mono_paths=tuple(scenario.mono_paths),
                       ue_paths=tuple(scenario.ue_paths),
                       clocks=scenario.clocks,
                       t_s=cfg.t_s)


# ---------------------------------------------------------------------------
# helpers

def phasor_ramp(omega, start, count, phase0=0.0):
    """exp(j*(omega*(start + arange(count)) + phase0)) in blocked form."""
    if count <= 0:
        return np.empty(0, np.complex128)
    block = 4096
    base = np.exp(1j * omega * np.arange(min(block, count)))
    lead = np.exp(1j * (omega * start + phase0))
    if count <= block:
        return lead * base[:count]
    nblk = (count + block - 1) // block
    coarse = lead * np.exp(1j * omega * (block * np.arange(nblk)))
    out = (coarse[:, None] * base[None, :]).reshape(-1)
    return out[:count]


def _noise(seed, stream_id, sigma2, start, count):
    """Circular Gaussian noise addressed by absolute sample index."""
    if sigma2 <= 0 or count <= 0:
        return np.zeros(count, np.complex128)
    out = np.empty(count, np.complex128)
    pos = 0
    k = start
    scale = math.sqrt(sigma2 / 2)
    while pos < count:
        tile = k // NOISE_TILE
        off = k - tile * NOISE_TILE
        take = min(NOISE_TILE - off, count - pos)
        rng = np.random.default_rng([seed, stream_id, tile])
        block = rng.standard_normal((2, NOISE_TILE))
        out[pos:pos + take] = scale * (block[0, off:off + take]
                                       + 1j * block[1, off:off + take])
        pos += take
        k += take
    return out


class _DelayMixer:
    """Streaming sum of delayed and rotated path copies.

    Produces y[m] = sum_p gain_p * x(m - D_p) * exp(j*(w_p*m + phi_p)) on
    the transmitter sample grid; exact band-limited delays via segment FFTs
    with GUARD samples of discarded margin on both sides.
    """

    def __init__(self, paths, extra_delay_s, extra_freq_hz, t_s):
        self.t_s = t_s
        self.entries = []      # [gain, delay_samples, omega, phase_offset]
        max_delay = 0.0
        for p in paths:
            d = (p.delay_s + extra_delay_s) / t_s
            w = 2 * math.pi * (p.doppler_hz + extra_freq_hz) * t_s
            self.entries.append([complex(p.gain), d, w, 0.0])
            max_delay = max(max_delay, d)
        self.d_max = int(math.ceil(max_delay))
        self.hist = np.zeros(0, np.complex128)
        self.hist_start = 0       # absolute index of hist[0]
        self.in_total = 0
        self.out_total = 0
        self._ramp_cache = {}     # (delay, nfft) -> all-pass phase ramp

    def retune(self, freq_adjust_hz):
        """Shift every path's rotation, keeping phase continuous."""
        dw = 2 * math.pi * freq_adjust_hz * self.t_s
        t0 = self.out_total
        for e in self.entries:
            e[3] += (e[2] - (e[2] + dw)) * t0
            e[2] += dw

    def push(self, chunk):
        chunk = np.asarray(chunk, np.complex128)
        self.hist = np.concatenate([self.hist, chunk])
        self.in_total += len(chunk)
        return self._drain(False)

    def finish(self, lookahead):
        """Flush assuming the input is zero beyond what was pushed."""
        self.hist = np.concatenate([self.hist,
                                    np.zeros(lookahead + GUARD, np.complex128)])
        self.in_total += lookahead + GUARD
        return self._drain(True)

    def _drain(self, final):
        outs = []
        while True:
            ready = self.in_total - GUARD
            t0 = self.out_total
            t1 = min(t0 + MIX_TILE, ready)
            if (t1 - t0) < (1 if final else MIX_TILE):
                break
            seg_start = t0 - self.d_max - GUARD
            seg = self._segment(seg_start, t1 + GUARD)
            nfft = scipy.fft.next_fast_len(len(seg))
            spec = np.fft.fft(seg, nfft)
            acc = np.zeros(t1 - t0, np.complex128)
            lo = t0 - seg_start
            for gain, d, w, phi in self.entries:
                delayed = np.fft.ifft(spec * self._delay_ramp(d, nfft))
                acc += gain * delayed[lo:lo + (t1 - t0)] * phasor_ramp(w, t0, t1 - t0, phi)
            outs.append(acc)
            self.out_total = t1
            keep_from = self.out_total - self.d_max - GUARD
            if keep_from > self.hist_start:
                self.hist = self.hist[keep_from - self.hist_start:]
                self.hist_start = keep_from
        return np.concatenate(outs) if outs else np.empty(0, np.complex128)

    def _delay_ramp(self, d, nfft):
        key = (d, nfft)
        ramp = self._ramp_cache.get(key)
        if ramp is None:
            ramp = np.exp(-2j * np.pi * np.fft.fftfreq(nfft) * d)
            if len(self._ramp_cache) > 16:
                self._ramp_cache.clear()
            self._ramp_cache[key] = ramp
        return ramp

    def _segment(self, a, b):
        """hist samples for absolute range [a, b), zero-filled outside."""
        out = np.zeros(b - a, np.complex128)
        lo = max(a, self.hist_start)
        avail_end = self.hist_start + len(self.hist)
        hi = min(b, avail_end)
        if hi > lo:
            out[lo - a:hi - a] = self.hist[lo - self.hist_start:hi - self.hist_start]
        return out


class _Resampler:
    """Streaming interpolation at the receiver's sampling interval.

    Receiver sample k sits at transmitter-grid position p(k); for the
    constant model p(k) advances by (1 - sio/Ts) per output sample.  The
    linear_ramp model ramps the interval error in over LINEAR_RAMP_SAMPLES.
    """

    def __init__(self, clocks: ClockImpairments, t_s):
        self.r = clocks.sio_s / t_s
        self.ramp = clocks.drift_model == "linear_ramp"
        self.k_base = 0
        self.p_base = 0.0
        half = kernels.RESAMP_HALF
        self.buf = np.zeros(half, np.complex128)
        self.buf_start = -half    # absolute input index of buf[0]
        self.in_total = 0
        self.out_total = 0

    def active(self):
        return self.r != 0.0 or self.ramp

    def set_rate(self, r_new):
        """Change the interval error, keeping the position continuous."""
        self.p_base = self._pos(self.out_total)
        self.k_base = self.out_total
        self.r = r_new
        self.ramp = False

    def _pos(self, k):
        if not self.ramp:
            return self.p_base + (k - self.k_base) * (1.0 - self.r)
        kk = min(k, LINEAR_RAMP_SAMPLES)
        drift = self.r * (kk * kk / (2 * LINEAR_RAMP_SAMPLES)
                          + max(k - LINEAR_RAMP_SAMPLES, 0))
        return k - drift

    def push(self, chunk):
        if len(chunk):
            self.buf = np.concatenate([self.buf, np.asarray(chunk, np.complex128)])
            self.in_total += len(chunk)
        half = kernels.RESAMP_HALF
        # emit every output sample whose interpolation window is in the buffer
        limit = self.in_total - half - 1
        k1 = self.out_total
        stride = max(1.0 - self.r, 0.5) if not self.ramp else 1.0
        guess = self.out_total + int((limit - self._pos(self.out_total)) / stride)
        k1 = max(guess, self.out_total)
        while self._pos(k1) > limit and k1 > self.out_total:
            k1 -= 1
        while self._pos(k1 + 1) <= limit:
            k1 += 1
        if k1 <= self.out_total:
            return np.empty(0, np.complex128)
        outs = []
        tile = 1 << 16
        for a in range(self.out_total, k1, tile):
            b = min(a + tile, k1)
            pa, pb = self._pos(a), self._pos(b)
            step = (pb - pa) / (b - a)
            outs.append(kernels.resample_stream(self.buf, pa - self.buf_start,
                                                step, b - a))
        self.out_total = k1
        keep_from = int(math.floor(self._pos(self.out_total))) - 2 * half
        if keep_from > self.buf_start:
            self.buf = self.buf[keep_from - self.buf_start:]
            self.buf_start = keep_from
        return np.concatenate(outs)

    def finish(self, want_total):
        """Zero-pad the source until want_total output samples exist."""
        need = want_total - self.out_total
        if need <= 0:
            return np.empty(0, np.complex128)
        pad = int(math.ceil(need * (1.0 + abs(self.r)))) + 4 * kernels.RESAMP_HALF
        out = self.push(np.zeros(pad, np.complex128))
        return out[:need]


class _ChannelStream:
    """Shared machinery for the monostatic and UE channel streams."""

    def __init__(self, scenario, cfg, paths, stream_id,
                 extra_delay_s, extra_freq_hz, resample, strict=False):
        self._check_paths(paths, cfg, strict)
        self.t_s = cfg.t_s
        self.mixer = _DelayMixer(paths, extra_delay_s, extra_freq_hz, cfg.t_s)
        self.resampler = _Resampler(scenario.clocks, cfg.t_s) if resample else None
        self.sigma2 = cfg.bandwidth_hz * scenario.noise_psd
        self.seed = scenario.seed
        self.stream_id = stream_id
        self.noise_cursor = 0
        self.in_total = 0

    @staticmethod
    def _check_paths(paths, cfg, strict):
        t_cp = cfg.cp_len * cfg.t_s
        for p in paths:
            if p.delay_s > t_cp:
                msg = (f"path delay {p.delay_s * 1e9:.1f} ns exceeds the CP "
                       f"({t_cp * 1e9:.1f} ns)")
                if strict:
                    raise DelayExceedsCp(msg)
                warnings.warn(msg, stacklevel=3)
            if abs(p.doppler_hz) >= cfg.delta_f / 10:
                warnings.warn(
                    f"path Doppler {p.doppler_hz} Hz is large relative to the "
                    f"subcarrier spacing {cfg.delta_f:.1f} Hz", stacklevel=3)

    def _resampling(self):
        return self.resampler is not None and self.resampler.active()

    def process(self, chunk):
        """Feed transmit samples; returns whatever receive samples are ready."""
        self.in_total += len(chunk)
        mixed = self.mixer.push(chunk)
        if self._resampling():
            out = self.resampler.push(mixed)
        else:
            out = mixed
        return self._add_noise(out)

    def finish(self):
        """Flush; total output length equals total input length."""
        want = self.in_total
        mixed = self.mixer.finish(lookahead=8 * kernels.RESAMP_HALF)
        if self._resampling():
            parts = [self.resampler.push(mixed)]
            parts.append(self.resampler.finish(want))
            out = np.concatenate(parts)
        else:
            out = mixed
        out = self._add_noise(out)
        excess = self.noise_cursor - want
        if excess > 0:
            out = out[:len(out) - excess]
            self.noise_cursor = want
        return out

    def _add_noise(self, out):
        if len(out) == 0:
            return out
        noise = _noise(self.seed, self.stream_id, self.sigma2,
                       self.noise_cursor, len(out))
        self.noise_cursor += len(out)
        return out + noise


class MonoChannel(_ChannelStream):
    """Echo channel seen by the co-located sensing receiver (shared clock)."""

    def __init__(self, scenario, cfg, strict=False):
        super().__init__(scenario, cfg, scenario.mono_paths, stream_id=1,
                         extra_delay_s=0.0, extra_freq_hz=0.0,
                         resample=False, strict=strict)


class UeChannel(_ChannelStream):
    """Downlink channel: paths plus timing offset, CFO, and SIO resampling."""

    def __init__(self, scenario, cfg, strict=False):
        clocks = scenario.clocks
        if abs(clocks.sio_s) > 1e-4 * cfg.t_s:
            raise InvalidValue("clock.sio_s",
                               "sampling interval offset above 100 ppm")
        if abs(clocks.cfo_hz) >= cfg.delta_f / 2:
            warnings.warn("CFO at or beyond half the subcarrier spacing "
                          "aliases in the CP estimator", stacklevel=2)
        super().__init__(scenario, cfg, scenario.ue_paths, stream_id=2,
                         extra_delay_s=clocks.timing_offset_s,
                         extra_freq_hz=clocks.cfo_hz,
                         resample=True, strict=strict)

    def trim_clock(self, cfo_adjust_hz=0.0, sio_adjust_s=0.0):
        """Reference-clock actuation: shift the oscillator and trim the SIO.

        Models disciplining the receive oscillator through a control DAC;
        phase and sampling position stay continuous across the adjustment.
        Positive adjustments reduce the corresponding impairment.
        """
        if cfo_adjust_hz:
            self.mixer.retune(-cfo_adjust_hz)
        if sio_adjust_s and self.resampler is not None:
            self.resampler.set_rate(self.resampler.r - sio_adjust_s / self.t_s)


def propagate_mono(tx_samples, scenario: ChannelScenario, cfg: SystemConfig,
                   strict=False) -> np.ndarray:
    """One-shot monostatic propagation; output aligned with the input grid."""
    chan = MonoChannel(scenario, cfg, strict=strict)
    head = chan.process(np.asarray(tx_samples, np.complex128))
    tail = chan.finish()
    return np.concatenate([head, tail])


def propagate_ue(tx_samples, scenario: ChannelScenario, cfg: SystemConfig,
                 strict=False) -> np.ndarray:
    """One-shot downlink propagation with clock impairments."""
    chan = UeChannel(scenario, cfg, strict=strict)
    head = chan.process(np.asarray(tx_samples, np.complex128))
    tail = chan.finish()
    return np.concatenate([head, tail])


# ---------------------------------------------------------------------------
# scenario files

_SCENARIO_KEYS = {
    "scenario.seed": (int, 0),
    "scenario.noise_psd": (float, 0.0),
    "scenario.cfo_hz": (float, 0.0),
    "scenario.timing_offset_ns": (float, 0.0),
    "scenario.sio_ppm": (float, 0.0),
    "scenario.drift_model": (str, "constant"),
    "scenario.clutter_doppler_max": (float, 2.0),
}

_PATH_KEYS = {"gain_db", "phase_deg", "delay_ns", "doppler_hz", "kind"}


def load_scenario(text: str, cfg: SystemConfig) -> ChannelScenario:
    """Parse a scenario file: flat scenario.* keys plus [ue.path] / [mono.path]."""
    flat, blocks = parse_structured(text)
    values = {}
    for key, raw in flat.items():
        if key not in _SCENARIO_KEYS:
            raise InvalidValue(key, "unknown scenario key")
        typ, _ = _SCENARIO_KEYS[key]
        try:
            values[key] = typ(raw)
        except ValueError as exc:
            raise InvalidValue(key, str(exc)) from None
    for key, (typ, default) in _SCENARIO_KEYS.items():
        values.setdefault(key, default)

    ue, mono = [], []
    for name, body in blocks:
        if name not in ("ue.path", "mono.path"):
            raise InvalidValue(name, "expected [ue.path] or [mono.path]")
        unknown = set(body) - _PATH_KEYS
        if unknown:
            raise InvalidValue(name, f"unknown path keys {sorted(unknown)}")
        try:
            gain_db = float(body.get("gain_db", "0"))
            phase = math.radians(float(body.get("phase_deg", "0")))
            delay = float(body.get("delay_ns", "0")) * 1e-9
            doppler = float(body.get("doppler_hz", "0"))
            kind = PathKind(body.get("kind", "target").lower())
        except ValueError as exc:
            raise InvalidValue(name, str(exc)) from None
        spec = PathSpec(gain=10 ** (gain_db / 20) * np.exp(1j * phase),
                        delay_s=delay, doppler_hz=doppler, kind=kind)
        (ue if name == "ue.path" else mono).append(spec)

    clocks = ClockImpairments(
        timing_offset_s=values["scenario.timing_offset_ns"] * 1e-9,
        cfo_hz=values["scenario.cfo_hz"],
        sio_s=values["scenario.sio_ppm"] * 1e-6 * cfg.t_s,
        drift_model=values["scenario.drift_model"],
    )
    return ChannelScenario(ue_paths=tuple(ue), mono_paths=tuple(mono),
                           clocks=clocks, noise_psd=values["scenario.noise_psd"],
                           seed=values["scenario.seed"],
                           clutter_doppler_max=values["scenario.clutter_doppler_max"])


def load_scenario_file(path, cfg: SystemConfig) -> ChannelScenario:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read(), cfg)
