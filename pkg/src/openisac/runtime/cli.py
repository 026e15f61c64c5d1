"""Command-line entry points.

    openisac bs|ue|loopback --config C [--scenario S] [--control-port P]
                            [--out PATH] [--frames N] [--udp-port P]
                            [--udp-out HOST:PORT] [--bypass]
    openisac oracle --scenario S --config C
    openisac bench             (kernel backend micro-benchmark)
"""

from __future__ import annotations

import argparse
import signal
import sys
import time

from ..chansim import ChannelScenario, ground_truth, load_scenario_file
from ..config import load_config_file
from .pipeline import run_bs, run_loopback, run_ue


def _add_node_args(p):
    p.add_argument("--config", required=True, help="config file path")
    p.add_argument("--scenario", help="scenario file path (default: clean LoS)")
    p.add_argument("--control-port", type=int, help="TCP control port")
    p.add_argument("--out", help="output path stem for map/symbol records")
    p.add_argument("--frames", type=int, help="stop after N frames (default: run on)")
    p.add_argument("--udp-port", type=int, help="UDP payload ingress port")
    p.add_argument("--udp-out", help="host:port for decoded payload egress")
    p.add_argument("--bypass", action="store_true",
                   help="start in bypass mode (stream channel symbols)")


def _default_scenario():
    from ..chansim import PathKind, PathSpec
    return ChannelScenario(ue_paths=(PathSpec(1.0, 0.0, 0.0, PathKind.LOS),),
                           mono_paths=())


def _node_command(kind, args):
    cfg = load_config_file(args.config)
    scenario = load_scenario_file(args.scenario, cfg) if args.scenario \
        else _default_scenario()
    kw = {
        "max_frames": args.frames,
        "control_port": args.control_port,
        "udp_port": args.udp_port,
    }
    if args.udp_out:
        host, _, port = args.udp_out.rpartition(":")
        kw["udp_out"] = (host or "127.0.0.1", int(port))
    stem = args.out
    sinks = []
    if stem:
        ext = "csym" if args.bypass else "rdmp"
        if kind != "ue":
            kw["bs_sink"] = open(f"{stem}.bs.{ext}", "wb")
            sinks.append(kw["bs_sink"])
        if kind != "bs":
            kw["ue_sink"] = open(f"{stem}.ue.{ext}", "wb")
            sinks.append(kw["ue_sink"])
    runner = {"bs": run_bs, "ue": run_ue, "loopback": run_loopback}[kind]
    node = runner(cfg, scenario, **kw)
    if args.bypass:
        node.table.set_mode("bypass")

    stopping = []

    def handle_sig(*_):
        stopping.append(True)
    signal.signal(signal.SIGINT, handle_sig)
    signal.signal(signal.SIGTERM, handle_sig)

    try:
        if args.frames is not None:
            node.run_to_completion()
        else:
            while not stopping:
                time.sleep(0.25)
            node.stop()
    finally:
        for s in sinks:
            s.close()
    st = node.stats
    print(f"frames={st.frames_modulated} demod={st.frames_demodulated} "
          f"maps_bs={st.maps_bs} maps_ue={st.maps_ue} "
          f"datagrams={st.datagrams_in}->{st.datagrams_out} "
          f"rtf={st.realtime_factor(cfg.bandwidth_hz):.2f}")
    return 0


def _oracle_command(args):
    cfg = load_config_file(args.config)
    scenario = load_scenario_file(args.scenario, cfg)
    truth = ground_truth(scenario, cfg)
    print("# ground truth")
    for name, paths in (("mono", truth.mono_paths), ("ue", truth.ue_paths)):
        for i, p in enumerate(paths):
            print(f"{name}.path[{i}]: kind={p.kind.value} |gain|={abs(p.gain):.6g} "
                  f"delay_ns={p.delay_s * 1e9:.3f} doppler_hz={p.doppler_hz:.3f}")
    c = truth.clocks
    print(f"clock: timing_offset_ns={c.timing_offset_s * 1e9:.3f} "
          f"cfo_hz={c.cfo_hz:.3f} sio_ppm={c.sio_s / cfg.t_s * 1e6:.4f} "
          f"drift_model={c.drift_model}")
    spf = cfg.samples_per_frame
    print(f"drift per frame: {truth.drift_samples(spf) - truth.drift_samples(0):.6f} samples")
    return 0


def _bench_command(args):
    from .. import bench
    return bench.main()


def main(argv=None):
    parser = argparse.ArgumentParser(prog="openisac",
                                     description="OFDM ISAC baseband engine")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in ("bs", "ue", "loopback"):
        p = sub.add_parser(kind, help=f"run the {kind} node in simulation")
        _add_node_args(p)
    po = sub.add_parser("oracle", help="print a scenario's ground truth")
    po.add_argument("--scenario", required=True)
    po.add_argument("--config", required=True)
    pb = sub.add_parser("bench", help="compare kernel backends")
    args = parser.parse_args(argv)
    if args.command in ("bs", "ue", "loopback"):
        return _node_command(args.command, args)
    if args.command == "oracle":
        return _oracle_command(args)
    return _bench_command(args)


if __name__ == "__main__":
    sys.exit(main())
