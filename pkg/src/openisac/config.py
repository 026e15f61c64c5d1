"""System configuration, derived waveform constants, and the frame plan.

The config file is flat ``section.key = value`` text (``#`` comments).  The
same parser also handles scenario files, which may additionally contain
``[block]`` sections (used for channel path lists).

Recognized keys::

    waveform.n              subcarrier count N
    waveform.cp             cyclic prefix length in samples
    waveform.m              OFDM symbols per frame M
    waveform.bandwidth_hz   sample rate / occupied bandwidth B
    waveform.fc_hz          carrier frequency
    waveform.tx_power       average transmit power, linear (default 1.0)
    frame.sync_index        index of the full-band sync symbol
    frame.pilot_spacing     pilot subcarrier spacing (pilots at 0, s, 2s, ...)
    frame.zc_root           Zadoff-Chu root, coprime with N
    frame.nulls             comma-separated null subcarriers (default empty)
    sense.ms                sensing frame length M_s (slow-time columns)
    sense.stride            slow-time downsampling factor M_D
    sense.nper              delay-axis periodogram size (>= N)
    sense.mper              Doppler-axis periodogram size (>= M_s)
    sense.threshold_db      peak search: keep peaks within this of the max
    sense.max_peaks         peak search: maximum detections returned
    stft.win                STFT window length M_w
    stft.hop                STFT hop M_H
    stft.nfft               STFT DFT size (>= M_w)
    sync.nlag               timing margin in samples (default cp/4)
    sync.threshold          sync detection threshold in (0, 1]
    sync.gamma_w            SIO estimation window length in frames
    sync.mu_default         tracker gain, steady state
    sync.mu_boost           tracker gain while re-converging
    sync.err_thresh         tracker error threshold in samples
    sync.escalation_frames  consecutive over-threshold frames before boost
    sync.freq_mode          digital_retune | reference_clock
    mti.sos                 path to an SOS coefficient file ("" = built-in)
    fec.mode                ldpc | null
    fec.alist               path to a parity-check alist ("" = built-in)
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .errors import InvalidValue, InvariantViolation, MissingKey, UnknownKey


class CellKind(enum.Enum):
    SYNC = 0
    PILOT = 1
    DATA = 2
    NULL = 3


# ---------------------------------------------------------------------------
# structured text parsing

def parse_structured(text):
    """Parse flat ``key = value`` text with optional ``[block]`` sections.

    Returns ``(flat, blocks)`` where flat maps dotted keys to raw string
    values and blocks is a list of ``(block_name, {key: value})`` in file
    order.  Flat keys must precede the first block header.
    """
    flat = {}
    blocks = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise InvalidValue(f"line {lineno}", "empty block header")
            current = {}
            blocks.append((name, current))
            continue
        if "=" not in line:
            raise InvalidValue(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise InvalidValue(f"line {lineno}", "empty key")
        if current is not None:
            current[key] = value
        else:
            flat[key] = value
    return flat, blocks


def _coerce(key, value, typ):
    try:
        if typ is int:
            v = int(value)
        elif typ is float:
            v = float(value)
        else:
            v = value
    except ValueError as exc:
        raise InvalidValue(key, str(exc)) from None
    return v


# key -> (type, default); default None means the key is required
_KEYS = {
    "waveform.n": (int, None),
    "waveform.cp": (int, None),
    "waveform.m": (int, None),
    "waveform.bandwidth_hz": (float, None),
    "waveform.fc_hz": (float, None),
    "waveform.tx_power": (float, 1.0),
    "frame.sync_index": (int, 0),
    "frame.pilot_spacing": (int, 8),
    "frame.zc_root": (int, 29),
    "frame.nulls": (str, ""),
    "sense.ms": (int, 100),
    "sense.stride": (int, 1),
    "sense.nper": (int, 0),      # 0 -> N
    "sense.mper": (int, 128),
    "sense.threshold_db": (float, 15.0),
    "sense.max_peaks": (int, 10),
    "stft.win": (int, 256),
    "stft.hop": (int, 64),
    "stft.nfft": (int, 0),       # 0 -> stft.win
    "sync.nlag": (int, -1),      # -1 -> cp/4
    "sync.threshold": (float, 0.25),
    "sync.gamma_w": (int, 100),
    "sync.mu_default": (float, 1e-5),
    "sync.mu_boost": (float, 1e-2),
    "sync.err_thresh": (float, 0.1),
    "sync.escalation_frames": (int, 50),
    "sync.freq_mode": (str, "digital_retune"),
    "mti.sos": (str, ""),
    "fec.mode": (str, "ldpc"),
    "fec.alist": (str, ""),
}


class FreqCorrectionMode(enum.Enum):
    DIGITAL_RETUNE = "digital_retune"
    REFERENCE_CLOCK = "reference_clock"


@dataclass(frozen=True)
class SystemConfig:
    """All waveform, frame, pilot, sensing, and tracking parameters.

    Derived constants (subcarrier spacing, symbol duration, ...) are exposed
    as properties and never stored, so they cannot drift out of sync.
    """

    num_subcarriers: int
    cp_len: int
    symbols_per_frame: int
    bandwidth_hz: float
    carrier_freq_hz: float
    tx_power: float = 1.0
    sync_symbol_index: int = 0
    pilot_indices: tuple = ()
    zc_root: int = 29
    null_indices: tuple = ()
    sensing_symbols: int = 100
    stride: int = 1
    n_per: int = 0
    m_per: int = 128
    peak_rel_threshold_db: float = 15.0
    max_peaks: int = 10
    stft_win: int = 256
    stft_hop: int = 64
    stft_nfft: int = 0
    n_lag: int = -1
    sync_threshold: float = 0.25
    sio_window_frames: int = 100
    mu_default: float = 1e-5
    mu_boost: float = 1e-2
    err_thresh_samples: float = 0.1
    escalation_frames: int = 50
    freq_correction_mode: FreqCorrectionMode = FreqCorrectionMode.DIGITAL_RETUNE
    mti_sos: tuple = ()          # ((b0, b1, b2, a1, a2), ...)
    mti_gain: float = 1.0
    fec_mode: str = "ldpc"
    fec_alist: str = ""

    def __post_init__(self):
        if not self.pilot_indices:
            object.__setattr__(self, "pilot_indices",
                               tuple(range(0, self.num_subcarriers, 8)))
        if self.n_per == 0:
            object.__setattr__(self, "n_per", self.num_subcarriers)
        if self.stft_nfft == 0:
            object.__setattr__(self, "stft_nfft", self.stft_win)
        if self.n_lag < 0:
            object.__setattr__(self, "n_lag", self.cp_len // 4)
        self._validate()

    def _validate(self):
        n, m = self.num_subcarriers, self.symbols_per_frame
        if n <= 0 or self.cp_len < 0 or m <= 0:
            raise InvariantViolation("positive-dimensions",
                                     f"N={n}, cp={self.cp_len}, M={m}")
        if self.bandwidth_hz <= 0:
            raise InvariantViolation("positive-bandwidth", str(self.bandwidth_hz))
        if not 0 <= self.sync_symbol_index < m:
            raise InvariantViolation("sync-index-range",
                                     f"m_sync={self.sync_symbol_index} not in [0, {m})")
        pil = set(self.pilot_indices)
        if len(pil) < 2:
            raise InvariantViolation("pilot-count", "need at least 2 pilot subcarriers")
        if not pil <= set(range(n)):
            raise InvariantViolation("pilot-range", "pilot index outside [0, N)")
        if math.gcd(self.zc_root, n) != 1:
            raise InvariantViolation("zc-root-coprime",
                                     f"gcd({self.zc_root}, {n}) != 1")
        if set(self.null_indices) & pil:
            raise InvariantViolation("null-pilot-overlap",
                                     "null subcarriers cannot coincide with pilots")
        if self.n_per < n:
            raise InvariantViolation("periodogram-delay-size",
                                     f"nper={self.n_per} < N={n}")
        if self.m_per < self.sensing_symbols:
            raise InvariantViolation("periodogram-doppler-size",
                                     f"mper={self.m_per} < Ms={self.sensing_symbols}")
        if self.stft_nfft < self.stft_win:
            raise InvariantViolation("stft-dft-size",
                                     f"nfft={self.stft_nfft} < win={self.stft_win}")
        if self.stride < 1 or self.sensing_symbols < 1:
            raise InvariantViolation("sensing-params",
                                     f"stride={self.stride}, ms={self.sensing_symbols}")
        if not 0 < self.sync_threshold <= 1:
            raise InvariantViolation("sync-threshold-range", str(self.sync_threshold))
        if self.sio_window_frames < 2:
            raise InvariantViolation("sio-window", "gamma_w must be >= 2")
        if self.n_lag >= n:
            raise InvariantViolation("nlag-range", f"nlag={self.n_lag} >= N={n}")

    # -- derived constants ---------------------------------------------------

    @property
    def delta_f(self):
        return self.bandwidth_hz / self.num_subcarriers

    @property
    def t_s(self):
        return 1.0 / self.bandwidth_hz

    @property
    def n_s(self):
        return self.num_subcarriers + self.cp_len

    @property
    def t_o(self):
        return self.n_s * self.t_s

    @property
    def t_frame(self):
        return self.symbols_per_frame * self.t_o

    @property
    def samples_per_frame(self):
        return self.symbols_per_frame * self.n_s

    @property
    def prf_eff(self):
        """Effective slow-time rate after stride downsampling."""
        return 1.0 / (self.stride * self.t_o)

    @property
    def cell_amplitude(self):
        """Per-cell symbol magnitude for E{|b|^2} = P_tx / N."""
        return math.sqrt(self.tx_power / self.num_subcarriers)


class FramePlan:
    """Maps each (subcarrier, symbol) cell to SYNC / PILOT / DATA / NULL."""

    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        n, m = cfg.num_subcarriers, cfg.symbols_per_frame
        self.pilots = tuple(sorted(set(cfg.pilot_indices)))
        self.nulls = frozenset(cfg.null_indices)
        self.data_subcarriers = tuple(
            k for k in range(n)
            if k not in set(self.pilots) and k not in self.nulls)
        self.data_cells_per_frame = (m - 1) * len(self.data_subcarriers)

    def cell_kind(self, n, m):
        if m == self.cfg.sync_symbol_index:
            return CellKind.SYNC
        if n in self.nulls:
            return CellKind.NULL
        if n in set(self.pilots):
            return CellKind.PILOT
        return CellKind.DATA

    def kind_counts(self):
        """Total cells of each kind per frame; sums to N*M."""
        n, m = self.cfg.num_subcarriers, self.cfg.symbols_per_frame
        counts = {
            CellKind.SYNC: n,
            CellKind.PILOT: (m - 1) * len(self.pilots),
            CellKind.NULL: (m - 1) * len(self.nulls),
            CellKind.DATA: self.data_cells_per_frame,
        }
        return counts

    def data_cell_order(self):
        """Yield (n, m) for DATA cells in fill order: m ascending, then n."""
        m_sync = self.cfg.sync_symbol_index
        for m in range(self.cfg.symbols_per_frame):
            if m == m_sync:
                continue
            for n in self.data_subcarriers:
                yield (n, m)


def frame_plan(cfg: SystemConfig) -> FramePlan:
    return FramePlan(cfg)


# ---------------------------------------------------------------------------
# loading / emitting

def _parse_nulls(raw):
    raw = raw.strip()
    if not raw:
        return ()
    try:
        return tuple(sorted({int(tok) for tok in raw.split(",") if tok.strip()}))
    except ValueError as exc:
        raise InvalidValue("frame.nulls", str(exc)) from None


def load_config(text: str) -> SystemConfig:
    """Build a validated SystemConfig from config-file text."""
    flat, blocks = parse_structured(text)
    if blocks:
        raise InvalidValue("config", "config files do not contain [blocks]")

    values = {}
    for key, raw in flat.items():
        if key not in _KEYS:
            raise UnknownKey(key)
        typ, _ = _KEYS[key]
        values[key] = _coerce(key, raw, typ)
    for key, (typ, default) in _KEYS.items():
        if key not in values:
            if default is None:
                raise MissingKey(key)
            values[key] = default

    n = values["waveform.n"]
    spacing = values["frame.pilot_spacing"]
    if spacing < 1:
        raise InvalidValue("frame.pilot_spacing", "must be >= 1")
    pilots = tuple(range(0, n, spacing))

    mode_raw = values["sync.freq_mode"]
    try:
        mode = FreqCorrectionMode(mode_raw)
    except ValueError:
        raise InvalidValue("sync.freq_mode", f"unknown mode {mode_raw!r}") from None

    if values["fec.mode"] not in ("ldpc", "null"):
        raise InvalidValue("fec.mode", f"unknown mode {values['fec.mode']!r}")

    sos_path = values["mti.sos"]
    sos, gain = load_sos(sos_path) if sos_path else default_mti_sos()

    return SystemConfig(
        num_subcarriers=n,
        cp_len=values["waveform.cp"],
        symbols_per_frame=values["waveform.m"],
        bandwidth_hz=values["waveform.bandwidth_hz"],
        carrier_freq_hz=values["waveform.fc_hz"],
        tx_power=values["waveform.tx_power"],
        sync_symbol_index=values["frame.sync_index"],
        pilot_indices=pilots,
        zc_root=values["frame.zc_root"],
        null_indices=_parse_nulls(values["frame.nulls"]),
        sensing_symbols=values["sense.ms"],
        stride=values["sense.stride"],
        n_per=values["sense.nper"],
        m_per=values["sense.mper"],
        peak_rel_threshold_db=values["sense.threshold_db"],
        max_peaks=values["sense.max_peaks"],
        stft_win=values["stft.win"],
        stft_hop=values["stft.hop"],
        stft_nfft=values["stft.nfft"],
        n_lag=values["sync.nlag"],
        sync_threshold=values["sync.threshold"],
        sio_window_frames=values["sync.gamma_w"],
        mu_default=values["sync.mu_default"],
        mu_boost=values["sync.mu_boost"],
        err_thresh_samples=values["sync.err_thresh"],
        escalation_frames=values["sync.escalation_frames"],
        freq_correction_mode=mode,
        mti_sos=sos,
        mti_gain=gain,
        fec_mode=values["fec.mode"],
        fec_alist=values["fec.alist"],
    )


def load_config_file(path) -> SystemConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return load_config(fh.read())


def dump_config(cfg: SystemConfig) -> str:
    """Emit config text that reloads to an identical SystemConfig."""
    spacing = cfg.pilot_indices[1] - cfg.pilot_indices[0] if len(cfg.pilot_indices) > 1 else 1
    lines = [
        f"waveform.n = {cfg.num_subcarriers}",
        f"waveform.cp = {cfg.cp_len}",
        f"waveform.m = {cfg.symbols_per_frame}",
        f"waveform.bandwidth_hz = {cfg.bandwidth_hz!r}",
        f"waveform.fc_hz = {cfg.carrier_freq_hz!r}",
        f"waveform.tx_power = {cfg.tx_power!r}",
        f"frame.sync_index = {cfg.sync_symbol_index}",
        f"frame.pilot_spacing = {spacing}",
        f"frame.zc_root = {cfg.zc_root}",
        f"frame.nulls = {','.join(str(k) for k in cfg.null_indices)}",
        f"sense.ms = {cfg.sensing_symbols}",
        f"sense.stride = {cfg.stride}",
        f"sense.nper = {cfg.n_per}",
        f"sense.mper = {cfg.m_per}",
        f"sense.threshold_db = {cfg.peak_rel_threshold_db!r}",
        f"sense.max_peaks = {cfg.max_peaks}",
        f"stft.win = {cfg.stft_win}",
        f"stft.hop = {cfg.stft_hop}",
        f"stft.nfft = {cfg.stft_nfft}",
        f"sync.nlag = {cfg.n_lag}",
        f"sync.threshold = {cfg.sync_threshold!r}",
        f"sync.gamma_w = {cfg.sio_window_frames}",
        f"sync.mu_default = {cfg.mu_default!r}",
        f"sync.mu_boost = {cfg.mu_boost!r}",
        f"sync.err_thresh = {cfg.err_thresh_samples!r}",
        f"sync.escalation_frames = {cfg.escalation_frames}",
        f"sync.freq_mode = {cfg.freq_correction_mode.value}",
        f"fec.mode = {cfg.fec_mode}",
        f"fec.alist = {cfg.fec_alist}",
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# MTI coefficient files: one SOS row per line "b0 b1 b2 1 a1 a2",
# final line "gain g".

def parse_sos(text):
    rows = []
    gain = 1.0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if toks[0] == "gain":
            if len(toks) != 2:
                raise InvalidValue(f"sos line {lineno}", "expected 'gain g'")
            gain = float(toks[1])
            continue
        if len(toks) != 6:
            raise InvalidValue(f"sos line {lineno}",
                               "expected 6 coefficients 'b0 b1 b2 1 a1 a2'")
        vals = [float(t) for t in toks]
        if vals[3] != 1.0:
            raise InvalidValue(f"sos line {lineno}", "a0 must be 1")
        rows.append((vals[0], vals[1], vals[2], vals[4], vals[5]))
    if not rows:
        raise InvalidValue("sos", "no coefficient rows found")
    return tuple(rows), gain


def load_sos(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_sos(fh.read())


def default_mti_sos():
    """Built-in slow-time high-pass (shipped coefficient file)."""
    from importlib import resources
    text = resources.files("openisac.data").joinpath("mti_default.sos").read_text()
    return parse_sos(text)
