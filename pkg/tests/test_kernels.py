"""Kernel equivalence: the jitted and pure-numpy paths must agree."""

import numpy as np
import pytest

import openisac.kernels as K


def _numpy_paths():
    """Direct access to both implementations regardless of active backend."""
    return K._resample_np, K._sos_np, K._ldpc_np


def test_backend_selected():
    assert K.BACKEND in ("numba", "numpy")


def test_resample_identity_step():
    rng = np.random.default_rng(0)
    x = rng.normal(size=512) + 1j * rng.normal(size=512)
    half = K.RESAMP_HALF
    y = K.resample_stream(x, float(half), 1.0, 512 - 2 * half)
    np.testing.assert_allclose(y, x[half:512 - half], atol=1e-9)


def test_resample_integer_offset_exact():
    rng = np.random.default_rng(1)
    x = rng.normal(size=1024) + 1j * rng.normal(size=1024)
    half = K.RESAMP_HALF
    y = K.resample_stream(x, float(half + 5), 1.0, 256)
    np.testing.assert_allclose(y, x[half + 5:half + 5 + 256], atol=1e-9)


def test_resample_backends_agree():
    rng = np.random.default_rng(2)
    x = rng.normal(size=4096) + 1j * rng.normal(size=4096)
    start, step, nout = K.RESAMP_HALF + 0.37, 1.0 - 3e-5, 3500
    got = K.resample_stream(x, start, step, nout)
    ref = K._resample_np(x, start, step, nout, K._POLY_TABLE)
    np.testing.assert_allclose(got, ref, atol=1e-10)


def test_resample_fractional_delay_of_tone():
    # interpolating a complex tone at a fractional offset shifts its phase
    n = 4096
    k = np.arange(n)
    f = 0.11  # cycles/sample, comfortably in band
    x = np.exp(2j * np.pi * f * k)
    delay = 10.3
    y = K.resample_stream(x, K.RESAMP_HALF + delay, 1.0, 2048)
    expected = np.exp(2j * np.pi * f * (K.RESAMP_HALF + delay + np.arange(2048)))
    # the mild window trades pointwise ripple for full-band power flatness
    np.testing.assert_allclose(y, expected, atol=5e-3)


def test_resample_margin_check():
    x = np.zeros(100, complex)
    with pytest.raises(ValueError):
        K.resample_stream(x, 0.0, 1.0, 10)


def test_sos_stream_matches_scipy():
    import scipy.signal as sig
    sos = sig.butter(4, 0.1, btype="highpass", output="sos")
    rows = np.column_stack([sos[:, 0], sos[:, 1], sos[:, 2], sos[:, 4], sos[:, 5]])
    rng = np.random.default_rng(3)
    block = rng.normal(size=(8, 300)) + 1j * rng.normal(size=(8, 300))
    state = K.sos_state(rows, 8)
    got = K.sos_stream(rows, block, state)
    ref = sig.sosfilt(sos, block, axis=1)
    np.testing.assert_allclose(got, ref, atol=1e-10)


def test_sos_stream_chunking_bit_identical():
    import scipy.signal as sig
    sos = sig.butter(4, 0.05, btype="highpass", output="sos")
    rows = np.column_stack([sos[:, 0], sos[:, 1], sos[:, 2], sos[:, 4], sos[:, 5]])
    rng = np.random.default_rng(4)
    block = rng.normal(size=(16, 257)) + 1j * rng.normal(size=(16, 257))
    one = K.sos_stream(rows, block, K.sos_state(rows, 16))
    for chunk in (1, 7, 64):
        state = K.sos_state(rows, 16)
        parts = [K.sos_stream(rows, block[:, i:i + chunk], state)
                 for i in range(0, block.shape[1], chunk)]
        merged = np.concatenate(parts, axis=1)
        assert np.array_equal(one, merged)  # bit-identical, not just close


def test_sos_backends_agree():
    rows = np.array([[0.9, -1.8, 0.9, -1.7, 0.74]])
    rng = np.random.default_rng(5)
    block = rng.normal(size=(4, 64)) + 1j * rng.normal(size=(4, 64))
    got = K.sos_stream(rows, block, K.sos_state(rows, 4))
    ref = K._sos_np(rows, block, K.sos_state(rows, 4))
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_ldpc_backends_agree():
    rng = np.random.default_rng(6)
    # random sparse check structure
    nchecks, nvars = 24, 48
    ptr = [0]
    vars_ = []
    for c in range(nchecks):
        deg = rng.integers(3, 6)
        vars_.extend(rng.choice(nvars, size=deg, replace=False).tolist())
        ptr.append(len(vars_))
    ptr = np.array(ptr, np.int64)
    vars_ = np.array(vars_, np.int64)
    llr = rng.normal(0, 2, nvars)
    b1, ok1, it1 = K.ldpc_decode(llr, ptr, vars_, 10)
    b2, ok2, it2 = K._ldpc_np(llr, ptr, vars_, 10, 0.75)
    np.testing.assert_array_equal(b1, b2)
    assert ok1 == ok2 and it1 == it2
