"""Command-line viewer.

    isacviz map <in.rdmp> [-o out.png] [--index N] [--db-floor F]
    isacviz stat <host:port> [--once]
"""

from __future__ import annotations

import argparse
import sys

from .records import FormatError
from .render import render_map
from .stat import StatError, tail_stat


def main(argv=None):
    parser = argparse.ArgumentParser(prog="isacviz")
    sub = parser.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("map", help="render a map record to PNG")
    pm.add_argument("input", help="record file (- for stdin)")
    pm.add_argument("-o", "--out", help="output PNG (default: input + .png)")
    pm.add_argument("--index", type=int, default=0, help="record index in the file")
    pm.add_argument("--db-floor", type=float, help="clamp values below this dB")

    ps = sub.add_parser("stat", help="poll a node's STAT over TCP")
    ps.add_argument("target", help="host:port of the control socket")
    ps.add_argument("--once", action="store_true", help="single snapshot")

    args = parser.parse_args(argv)
    if args.command == "map":
        out = args.out or (args.input + ".png")
        source = sys.stdin.buffer if args.input == "-" else args.input
        try:
            rec = render_map(source, out, db_floor=args.db_floor, index=args.index)
        except (FormatError, ValueError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        rows, cols = rec.values_db.shape
        print(f"wrote {out} ({rows}x{cols}, kind {rec.kind})")
        return 0

    host, _, port = args.target.rpartition(":")
    try:
        tail_stat(host or "127.0.0.1", int(port), once=args.once)
    except StatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
