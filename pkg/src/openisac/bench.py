"""Micro-benchmark of the hot kernels: jitted path vs pure-numpy fallback.

Run as ``openisac bench`` or ``python benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import time

import numpy as np

from . import kernels as K


def _time(fn, *args, repeats=3):
    fn(*args)            # warm up / JIT
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_resample(n=1 << 21):
    rng = np.random.default_rng(0)
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    nout = n - 4 * K.RESAMP_TAPS
    start, step = float(K.RESAMP_HALF + 1), 1.0 - 1e-6
    rows = {}
    if K.BACKEND == "numba":
        rows["numba"] = nout / _time(K._resample_nb, x, start, step, nout, K._POLY_TABLE)
    rows["numpy"] = nout / _time(K._resample_np, x, start, step, nout, K._POLY_TABLE)
    return "resample_stream", "samples/s", rows


def bench_sos(nsub=1024, ncols=2000):
    import scipy.signal as sig
    sos = sig.butter(4, 0.04, btype="highpass", output="sos")
    rows5 = np.column_stack([sos[:, 0], sos[:, 1], sos[:, 2], sos[:, 4], sos[:, 5]])
    rng = np.random.default_rng(1)
    block = rng.normal(size=(nsub, ncols)) + 1j * rng.normal(size=(nsub, ncols))
    cells = nsub * ncols
    out = {}
    if K.BACKEND == "numba":
        def run_nb():
            K._sos_nb(rows5, block, K.sos_state(rows5, nsub), np.empty_like(block))
        out["numba"] = cells / _time(run_nb)

    def run_np():
        K._sos_np(rows5, block, K.sos_state(rows5, nsub))
    out["numpy"] = cells / _time(run_np)
    return "sos_stream", "cells/s", out


def bench_ldpc(blocks=200):
    from .fec import LdpcCode, default_alist_text
    code = LdpcCode.from_alist(default_alist_text())
    rng = np.random.default_rng(2)
    sigma2 = 1.0 / (2 * 0.5 * 10 ** 0.2)    # Eb/N0 = 2 dB: some iterations needed
    llrs = []
    for _ in range(blocks):
        cw = code.encode(rng.integers(0, 2, code.k, dtype=np.uint8))
        y = (1.0 - 2.0 * cw) + rng.normal(0, np.sqrt(sigma2), code.n)
        llrs.append(2 * y / sigma2)
    bits = blocks * code.k
    out = {}
    if K.BACKEND == "numba":
        def run_nb():
            for llr in llrs:
                K._ldpc_nb(llr, code._check_ptr, code._check_vars, 25, 0.75)
        out["numba"] = bits / _time(run_nb, repeats=2)

    def run_np():
        for llr in llrs:
            K._ldpc_np(llr, code._check_ptr, code._check_vars, 25, 0.75)
    out["numpy"] = bits / _time(run_np, repeats=2)
    return "ldpc_decode", "info bits/s", out


def main():
    print(f"active backend: {K.BACKEND}")
    print(f"{'kernel':<18} {'unit':<12} {'numba':>12} {'numpy':>12} {'speedup':>8}")
    for name, unit, rows in (bench_resample(), bench_sos(), bench_ldpc()):
        nb = rows.get("numba")
        npy = rows["numpy"]
        nb_s = f"{nb:,.0f}" if nb else "-"
        ratio = f"{nb / npy:.1f}x" if nb else "-"
        print(f"{name:<18} {unit:<12} {nb_s:>12} {npy:>12,.0f} {ratio:>8}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
