"""Threaded BS / UE / loopback pipelines over the channel simulator.

Each stage is one thread owning its state; stages talk only through
bounded FIFOs and the atomically-swapped control table.  Sources close
their output queues at end of input and the close propagates downstream,
so a bounded run drains cleanly.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .. import bisense as bs_mod
from ..chansim import ChannelScenario, MonoChannel, UeChannel
from ..config import FramePlan, SystemConfig, load_sos
from ..errors import BindFailure
from ..fec import build_code
from ..mono import MonoProcessor, SlowTimeChain, find_peaks
from ..phytx import map_grid, ofdm_modulate
from ..uerx import Phase, UeReceiver
from .control import ControlServer, ControlTable
from .packets import FramePacker, FrameUnpacker
from .queues import CLOSED, BoundedQueue
from .records import write_map, write_symbols

QUEUE_FRAMES = 16


@dataclass
class RunStats:
    frames_modulated: int = 0
    frames_demodulated: int = 0
    datagrams_in: int = 0
    datagrams_out: int = 0
    maps_bs: int = 0
    maps_ue: int = 0
    blocks_failed: int = 0
    samples_simulated: int = 0
    wall_start: float = field(default_factory=time.monotonic)

    def realtime_factor(self, bandwidth_hz):
        wall = max(time.monotonic() - self.wall_start, 1e-9)
        return self.samples_simulated / bandwidth_hz / wall


class _StageThread(threading.Thread):
    def __init__(self, name, fn):
        super().__init__(name=name, daemon=True)
        self.fn = fn
        self.error = None

    def run(self):
        try:
            self.fn()
        except Exception as exc:   # stage panic: record and surface on join
            self.error = exc


class LoopbackNode:
    """Single-process BS + UE over the in-process channel simulator.

    ``max_frames`` bounds the run (None = run until stop()).  Decoded
    datagrams go to ``on_datagram`` and, when ``udp_out`` is set, to that
    UDP address.  Map/symbol records go to the provided binary sinks.
    """

    def __init__(self, cfg: SystemConfig, scenario: ChannelScenario,
                 max_frames=None, udp_port=None, udp_out=None,
                 bs_sink=None, ue_sink=None, on_datagram=None,
                 control_port=None, window=True, ue_enabled=True,
                 mono_enabled=True, bisense_compensation=True,
                 record_streams=False, rx_policy="block_producer"):
        self.cfg = cfg
        self.plan = FramePlan(cfg)
        self.scenario = scenario
        self.code = build_code(cfg)
        self.max_frames = max_frames
        self.stats = RunStats()
        self.window = window
        self.ue_enabled = ue_enabled
        self.mono_enabled = mono_enabled

        # In-process simulation defaults every queue to back-pressure so a
        # bounded run is lossless and deterministic; rx_policy="drop_oldest"
        # restores the non-pausable-radio emulation on the rx waveform path.
        self.packet_fifo = BoundedQueue(QUEUE_FRAMES, "block_producer")
        self.mono_tx = BoundedQueue(QUEUE_FRAMES, "block_producer")
        self.ue_tx = BoundedQueue(QUEUE_FRAMES, "block_producer")
        self.grid_fifo = BoundedQueue(2 * QUEUE_FRAMES, "block_producer")
        self.mono_rx = BoundedQueue(QUEUE_FRAMES, rx_policy)
        self.ue_rx = BoundedQueue(QUEUE_FRAMES, rx_policy)
        self.llr_fifo = BoundedQueue(QUEUE_FRAMES, "block_producer")
        self.sens_fifo = BoundedQueue(QUEUE_FRAMES, "block_producer")

        self.packer = FramePacker(cfg, self.plan, self.code)
        self.unpacker = FrameUnpacker(cfg, self.plan, self.code)
        self.mono_chan = MonoChannel(scenario, cfg)
        self.ue_chan = UeChannel(scenario, cfg) if ue_enabled else None
        self.mono_proc = MonoProcessor(cfg, window=window,
                                       record_streams=record_streams)
        self.ue_rxr = UeReceiver(cfg, self.plan,
                                 clock_actuator=self._actuator()) if ue_enabled else None
        self.bisense = bs_mod.BisenseProcessor(
            cfg, self.plan, compensation=bisense_compensation) if ue_enabled else None
        self.ue_chain = SlowTimeChain(cfg, window=window,
                                      record_streams=record_streams) if ue_enabled else None

        self.bs_sink = bs_sink
        self.ue_sink = ue_sink
        self.on_datagram = on_datagram
        self.udp_out = udp_out
        self._udp_out_sock = None
        self.detections = []
        self.table = self._build_table()
        self.control = ControlServer(self.table, control_port) \
            if control_port is not None else None
        self._udp_port = udp_port
        self._udp_sock = None
        self._stop = threading.Event()
        self.threads = []

    # -- control wiring ------------------------------------------------------

    def _actuator(self):
        from ..config import FreqCorrectionMode
        if self.cfg.freq_correction_mode is not FreqCorrectionMode.REFERENCE_CLOCK:
            return None

        def act(cfo_adjust_hz=0.0, sio_adjust_s=0.0):
            if self.ue_chan is not None:
                self.ue_chan.trim_clock(cfo_adjust_hz, sio_adjust_s)
        return act

    def _build_table(self):
        table = ControlTable()

        def set_stride(v):
            if v < 1:
                raise ValueError("stride must be >= 1")
            self.mono_proc.set_stride(v)
            if self.ue_chain is not None:
                self.ue_chain.set_stride(v)

        def set_mti(path):
            rows, gain = load_sos(path)
            self.mono_proc.chain.set_mti(rows, gain)
            if self.ue_chain is not None:
                self.ue_chain.set_mti(rows, gain)

        def set_mu(v):
            if self.bisense is not None:
                self.bisense.tracker.mu_default = v

        def set_sync_threshold(v):
            if self.ue_rxr is not None:
                self.ue_rxr.sync_threshold = v

        table.register("stride", self.cfg.stride, set_stride, int)
        table.register("mti", "", set_mti, str)
        table.register("rel_threshold_db", self.cfg.peak_rel_threshold_db,
                       lambda v: None, float)
        table.register("mu_default", self.cfg.mu_default, set_mu, float)
        table.register("sync.threshold", self.cfg.sync_threshold,
                       set_sync_threshold, float)
        table.stat_provider(self._stat)
        return table

    def _stat(self):
        st = {
            "frames_mod": self.stats.frames_modulated,
            "frames_demod": self.stats.frames_demodulated,
            "maps_bs": self.stats.maps_bs,
            "maps_ue": self.stats.maps_ue,
            "datagrams_in": self.stats.datagrams_in,
            "datagrams_out": self.stats.datagrams_out,
            "blocks_failed": self.stats.blocks_failed,
            "rtf": round(self.stats.realtime_factor(self.cfg.bandwidth_hz), 3),
            "q_packet": self.packet_fifo.depth(),
            "q_mono_rx": self.mono_rx.depth(),
            "q_ue_rx": self.ue_rx.depth(),
            "q_llr": self.llr_fifo.depth(),
            "q_sens": self.sens_fifo.depth(),
            "drops_mono_rx": self.mono_rx.drops,
            "drops_ue_rx": self.ue_rx.drops,
        }
        if self.ue_rxr is not None:
            st["phase"] = self.ue_rxr.state.phase.value
            st["f_o_hz"] = round(self.ue_rxr.state.f_o_hz, 3)
            st["applied_freq_hz"] = round(self.ue_rxr.state.applied_freq_hz, 3)
        if self.bisense is not None:
            st["k_sens"] = round(self.bisense.tracker.k_sens, 4)
            st["eps_sio"] = round(self.bisense.tracker.eps_sio, 6)
        return st

    # -- stages ----------------------------------------------------------------

    def _udp_ingress(self):
        sock = self._udp_sock
        sock.settimeout(0.2)
        while not self._stop.is_set():
            try:
                data, _ = sock.recvfrom(65536)
            except socket.timeout:
                continue
            except OSError:
                return
            self.packet_fifo.put(data)
            self.stats.datagrams_in += 1

    def offer_datagram(self, data: bytes, timeout=None) -> bool:
        """Direct (socket-free) payload ingress."""
        ok = self.packet_fifo.put(data, timeout=timeout)
        if ok:
            self.stats.datagrams_in += 1
        return ok

    def _modulator(self):
        gamma = 0
        self.stats.wall_start = time.monotonic()   # RTF clock starts with traffic
        while not self._stop.is_set():
            if self.max_frames is not None and gamma >= self.max_frames:
                break
            while self.packet_fifo.depth() and len(self.packer.pending) < 64:
                item = self.packet_fifo.get(timeout=0)
                if item is CLOSED or item is None:
                    break
                self.packer.offer(item)
            payload, _ = self.packer.build_frame()
            grid = map_grid(payload, self.cfg, self.plan, gamma)
            samples = ofdm_modulate(grid, self.cfg)
            if self.mono_enabled and not self.mono_tx.put((samples, grid)):
                break
            if self.ue_enabled and not self.ue_tx.put(samples):
                break
            if not self.mono_enabled:
                self.stats.samples_simulated += len(samples)
            self.stats.frames_modulated += 1
            gamma += 1
        self.packet_fifo.close()   # stop ingress once no frame will carry it
        self.mono_tx.close()
        self.ue_tx.close()

    def _mono_channel(self):
        while True:
            item = self.mono_tx.get(timeout=0.5)
            if item is CLOSED:
                break
            if item is None:
                continue
            samples, grid = item
            self.grid_fifo.put(grid)
            rx = self.mono_chan.process(samples)
            self.stats.samples_simulated += len(samples)
            if len(rx):
                self.mono_rx.put(rx)
        tail = self.mono_chan.finish()
        if len(tail):
            self.mono_rx.put(tail)
        self.grid_fifo.close()
        self.mono_rx.close()

    def _ue_channel(self):
        while True:
            item = self.ue_tx.get(timeout=0.5)
            if item is CLOSED:
                break
            if item is None:
                continue
            rx = self.ue_chan.process(item)
            if len(rx):
                self.ue_rx.put(rx)
        tail = self.ue_chan.finish()
        if len(tail):
            self.ue_rx.put(tail)
        self.ue_rx.close()

    def _bs_sensing(self):
        bypass_index = 0
        while True:
            item = self.mono_rx.get(timeout=0.5)
            if item is CLOSED:
                break
            if item is None:
                continue
            while self.grid_fifo.depth():
                g = self.grid_fifo.get(timeout=0)
                if g is None or g is CLOSED:
                    break
                self.mono_proc.add_grid(g)
            maps, raw = self.mono_proc.process(item,
                                               bypass=self.table.mode == "bypass")
            for cells in raw:
                if self.bs_sink is not None:
                    write_symbols(self.bs_sink, cells, bypass_index)
                bypass_index += 1
            for m in maps:
                self.stats.maps_bs += 1
                self.detections.append(
                    find_peaks(m, cfg=self.cfg,
                               rel_threshold_db=float(self.table.get("rel_threshold_db"))))
                if self.bs_sink is not None:
                    write_map(self.bs_sink, m)

    def _ue_demod(self):
        while True:
            item = self.ue_rx.get(timeout=0.5)
            if item is CLOSED:
                break
            if item is None:
                continue
            for res in self.ue_rxr.process(item):
                self.stats.frames_demodulated += 1
                self.llr_fifo.put((res.frame_index, res.eq.llrs))
                self.sens_fifo.put(res)
        self.llr_fifo.close()
        self.sens_fifo.close()

    def _ue_bits(self):
        while True:
            item = self.llr_fifo.get(timeout=0.5)
            if item is CLOSED:
                break
            if item is None:
                continue
            _, llrs = item
            datagrams, _ = self.unpacker.unpack(llrs)
            self.stats.blocks_failed = self.unpacker.blocks_failed
            for dg in datagrams:
                self.stats.datagrams_out += 1
                if self.on_datagram is not None:
                    self.on_datagram(dg)
                if self._udp_out_sock is not None:
                    self._udp_out_sock.sendto(dg, self.udp_out)

    def _ue_sensing(self):
        bypass_index = 0
        while True:
            item = self.sens_fifo.get(timeout=0.5)
            if item is CLOSED:
                break
            if item is None:
                continue
            if item.state_phase is not Phase.NORMAL:
                continue
            cells = self.bisense.process_frame(item)
            if self.table.mode == "bypass":
                if self.ue_sink is not None:
                    write_symbols(self.ue_sink, cells, bypass_index)
                bypass_index += 1
                continue
            for m in self.ue_chain.feed(cells):
                self.stats.maps_ue += 1
                if self.ue_sink is not None:
                    write_map(self.ue_sink, m)

    # -- lifecycle -----------------------------------------------------------------

    def start(self):
        if self._udp_port is not None:
            try:
                self._udp_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
                self._udp_sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 22)
                self._udp_sock.bind(("127.0.0.1", self._udp_port))
                self._udp_port = self._udp_sock.getsockname()[1]
            except OSError as exc:
                raise BindFailure(f"udp port {self._udp_port}: {exc}") from exc
            self.threads.append(_StageThread("udp-in", self._udp_ingress))
        if self.udp_out is not None:
            self._udp_out_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        from .. import kernels
        kernels.warmup()
        stages = [("modulator", self._modulator)]
        if self.mono_enabled:
            stages += [("mono-chan", self._mono_channel),
                       ("bs-sensing", self._bs_sensing)]
        if self.ue_enabled:
            stages += [("ue-chan", self._ue_channel),
                       ("ue-demod", self._ue_demod),
                       ("ue-bits", self._ue_bits),
                       ("ue-sensing", self._ue_sensing)]
        for name, fn in stages:
            self.threads.append(_StageThread(name, fn))
        if self.control is not None:
            self.control.start()
        for t in self.threads:
            t.start()
        return self

    def join(self, timeout=None):
        deadline = None if timeout is None else time.monotonic() + timeout
        for t in self.threads:
            remain = None if deadline is None else max(deadline - time.monotonic(), 0.1)
            t.join(remain)
        for t in self.threads:
            if t.error is not None:
                raise RuntimeError(f"stage {t.name} failed") from t.error

    def stop(self):
        self._stop.set()
        for q in (self.packet_fifo, self.mono_tx, self.ue_tx):
            q.close()
        if self._udp_sock is not None:
            self._udp_sock.close()
        self.join(timeout=30)
        if self.control is not None:
            self.control.stop()

    def run_to_completion(self, timeout=600):
        """For bounded runs: wait for all stages to drain, then clean up."""
        self.join(timeout=timeout)
        if self.control is not None:
            self.control.stop()
        if self._udp_sock is not None:
            self._udp_sock.close()


def run_bs(cfg, scenario, **kw):
    """BS-only process: modulator, monostatic channel, sensing, control."""
    kw.setdefault("ue_enabled", False)
    return LoopbackNode(cfg, scenario, **kw).start()


def run_ue(cfg, scenario, **kw):
    """UE-focused process: an internal transmitter feeds the downlink channel."""
    kw.setdefault("ue_enabled", True)
    kw.setdefault("mono_enabled", False)
    return LoopbackNode(cfg, scenario, **kw).start()


def run_loopback(cfg, scenario, **kw):
    return LoopbackNode(cfg, scenario, **kw).start()
