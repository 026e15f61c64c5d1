"""Live status polling over the node's TCP control protocol."""

from __future__ import annotations

import socket
import time


class StatError(Exception):
    pass


def fetch_stat(host: str, port: int, timeout=5.0) -> dict:
    """One STAT request; returns the key=value pairs."""
    try:
        with socket.create_connection((host, port), timeout=timeout) as sock:
            sock.sendall(b"STAT\n")
            buf = b""
            while not buf.endswith(b"OK\n"):
                data = sock.recv(4096)
                if not data:
                    raise StatError("connection closed mid-response")
                buf += data
                if buf.startswith(b"ERR"):
                    raise StatError(buf.decode().strip())
    except OSError as exc:
        raise StatError(f"cannot reach {host}:{port}: {exc}") from exc
    pairs = {}
    for line in buf.decode().splitlines()[:-1]:
        key, _, value = line.partition("=")
        pairs[key] = value
    return pairs


def tail_stat(host: str, port: int, once=False, interval=1.0, sink=print):
    """Print STAT snapshots each second (or a single one with once=True)."""
    while True:
        stat = fetch_stat(host, port)
        keys = ("phase", "rtf", "k_sens", "f_o_hz", "maps_bs", "maps_ue",
                "q_packet", "q_llr", "q_sens", "datagrams_out")
        shown = [f"{k}={stat[k]}" for k in keys if k in stat]
        rest = [f"{k}={v}" for k, v in sorted(stat.items())
                if k not in keys and k.startswith("q_")]
        sink("  ".join(shown + rest))
        if once:
            return stat
        time.sleep(interval)
