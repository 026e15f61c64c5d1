#!/usr/bin/env python3
"""Kernel backend comparison (same as `openisac bench`).

Force the numpy fallback for the whole process with OPENISAC_PURE_NUMPY=1;
by default the jitted path is active and both are timed side by side.
"""

from openisac.bench import main

if __name__ == "__main__":
    raise SystemExit(main())
