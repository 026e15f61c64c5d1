"""Line-oriented TCP control protocol.

Commands: ``SET <key> <value>``, ``GET <key>``, ``MODE <normal|bypass>``,
``STAT``.  Every response ends with an ``OK`` or ``ERR <reason>`` line;
``GET`` and ``STAT`` emit ``key=value`` lines before the terminator.
Settable keys are registered by the hosting node (stride, mti,
rel_threshold_db, mu_default, sync.threshold).
"""

from __future__ import annotations

import socket
import threading

from ..errors import BindFailure, ParseError, UnknownKey


class ControlTable:
    """Thread-safe key registry backing the control protocol.

    Values swap atomically under a lock; readers in the processing threads
    grab the current value at batch boundaries.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._values = {}
        self._setters = {}
        self._stat_fn = None
        self._mode_fn = None
        self.mode = "normal"

    def register(self, key, value, setter=None, parse=str):
        with self._lock:
            self._values[key] = value
            self._setters[key] = (setter, parse)

    def stat_provider(self, fn):
        self._stat_fn = fn

    def mode_handler(self, fn):
        self._mode_fn = fn

    def get(self, key):
        with self._lock:
            if key not in self._values:
                raise UnknownKey(key)
            return self._values[key]

    def set(self, key, raw):
        with self._lock:
            if key not in self._values:
                raise UnknownKey(key)
            setter, parse = self._setters[key]
        try:
            value = parse(raw)
        except ValueError as exc:
            raise ParseError(f"cannot parse {raw!r} for {key}") from exc
        if setter is not None:
            setter(value)
        with self._lock:
            self._values[key] = value

    def set_mode(self, mode):
        if mode not in ("normal", "bypass"):
            raise ParseError(f"unknown mode {mode!r}")
        self.mode = mode
        if self._mode_fn is not None:
            self._mode_fn(mode)

    def stat(self):
        base = dict(self._values)
        base["mode"] = self.mode
        if self._stat_fn is not None:
            base.update(self._stat_fn())
        return base


class ControlServer:
    """Accepts control connections and applies commands to a ControlTable."""

    def __init__(self, table: ControlTable, port: int, host="127.0.0.1"):
        self.table = table
        try:
            self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            self._sock.bind((host, port))
            self._sock.listen(4)
        except OSError as exc:
            raise BindFailure(f"control port {host}:{port}: {exc}") from exc
        self.port = self._sock.getsockname()[1]
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True,
                                        name="control-server")

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self._stop.set()
        try:
            self._sock.close()
        except OSError:
            pass
        self._thread.join(timeout=2)

    def _serve(self):
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            threading.Thread(target=self._session, args=(conn,),
                             daemon=True).start()

    def _session(self, conn):
        with conn:
            buf = b""
            while not self._stop.is_set():
                try:
                    data = conn.recv(4096)
                except OSError:
                    return
                if not data:
                    return
                buf += data
                while b"\n" in buf:
                    line, buf = buf.split(b"\n", 1)
                    reply = self.handle_line(line.decode("utf-8", "replace").strip())
                    try:
                        conn.sendall(reply.encode("utf-8"))
                    except OSError:
                        return

    def handle_line(self, line: str) -> str:
        if not line:
            return "ERR ParseError empty command\n"
        parts = line.split()
        verb = parts[0].upper()
        try:
            if verb == "GET" and len(parts) == 2:
                value = self.table.get(parts[1])
                return f"{parts[1]}={value}\nOK\n"
            if verb == "SET" and len(parts) >= 3:
                self.table.set(parts[1], " ".join(parts[2:]))
                return "OK\n"
            if verb == "MODE" and len(parts) == 2:
                self.table.set_mode(parts[1].lower())
                return "OK\n"
            if verb == "STAT" and len(parts) == 1:
                lines = [f"{k}={v}" for k, v in sorted(self.table.stat().items())]
                return "\n".join(lines + ["OK"]) + "\n"
            return f"ERR ParseError bad command {line!r}\n"
        except UnknownKey as exc:
            return f"ERR UnknownKey {exc.key}\n"
        except ParseError as exc:
            return f"ERR ParseError {exc}\n"


def control_request(host: str, port: int, command: str, timeout=5.0) -> list:
    """One-shot client: send a command, return response lines (sans OK)."""
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall((command.strip() + "\n").encode())
        buf = b""
        while not buf.endswith(b"OK\n") and b"ERR" not in buf[:64]:
            data = sock.recv(4096)
            if not data:
                break
            buf += data
    lines = buf.decode().strip().splitlines()
    if not lines:
        raise ParseError("empty control response")
    if lines[-1].startswith("ERR"):
        raise ParseError(lines[-1])
    return lines[:-1]
