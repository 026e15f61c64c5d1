import math

import numpy as np
import pytest

from openisac.chansim import (C_LIGHT, ChannelScenario, ClockImpairments,
                              MonoChannel, PathKind, PathSpec, UeChannel,
                              ground_truth, load_scenario, propagate_mono,
                              propagate_ue, target_params)
from openisac.config import frame_plan
from openisac.errors import DelayExceedsCp, InvalidValue, NonPositiveRange
from openisac.phytx import map_grid, ofdm_modulate


def tx_frame(cfg, gamma=0):
    return ofdm_modulate(map_grid(np.empty(0), cfg, frame_plan(cfg), gamma), cfg)


def scen(mono=(), ue=(), clocks=None, noise=0.0, seed=0):
    return ChannelScenario(mono_paths=tuple(mono), ue_paths=tuple(ue),
                           clocks=clocks or ClockImpairments(),
                           noise_psd=noise, seed=seed)


# --- target parameterization ------------------------------------------------

def test_target_params_reference_values():
    p = target_params(rcs_m2=1.0, range_m=10.0, velocity_mps=5.0, f_c=3.1e9)
    expected_mag = math.sqrt(C_LIGHT ** 2 /
                             ((4 * math.pi) ** 3 * 10.0 ** 4 * 3.1e9 ** 2))
    assert abs(p.gain) == pytest.approx(expected_mag)
    assert abs(p.gain) == pytest.approx(2.17e-5, rel=2e-2)
    assert p.delay_s == pytest.approx(2 * 10 / C_LIGHT)
    assert p.delay_s == pytest.approx(66.7e-9, rel=2e-3)
    assert p.doppler_hz == pytest.approx(2 * 5 * 3.1e9 / C_LIGHT)
    assert p.doppler_hz == pytest.approx(103.3, rel=2e-3)


def test_target_params_rejects_nonpositive_range():
    with pytest.raises(NonPositiveRange):
        target_params(1.0, 0.0, 0.0, 3.1e9)


def test_clutter_doppler_bound_enforced():
    with pytest.raises(InvalidValue):
        scen(mono=[PathSpec(1.0, 0.0, 50.0, PathKind.CLUTTER)])


# --- monostatic propagation -------------------------------------------------

def test_mono_integer_delay_is_pure_shift(desk_cfg):
    d = 7
    s = scen(mono=[PathSpec(1.0, d * desk_cfg.t_s, 0.0)])
    x = tx_frame(desk_cfg)
    y = propagate_mono(x, s, desk_cfg)
    err = np.abs(y[d:] - x[:-d]).max()
    assert err <= 1e-6
    assert np.abs(y[:d]).max() < 1e-3  # band-limited pre-ring only


def test_mono_zero_gain_or_empty_is_silent(desk_cfg):
    x = tx_frame(desk_cfg)
    y = propagate_mono(x, scen(mono=[PathSpec(0.0, 1e-7, 0.0)]), desk_cfg)
    assert np.abs(y).max() == 0
    y2 = propagate_mono(x, scen(), desk_cfg)
    assert np.abs(y2).max() == 0


def test_mono_doppler_shifts_spectrum():
    from openisac.config import SystemConfig
    cfg = SystemConfig(num_subcarriers=256, cp_len=32, symbols_per_frame=8,
                       bandwidth_hz=1e6, carrier_freq_hz=1e9,
                       sensing_symbols=8, m_per=8, stft_win=8, stft_hop=4)
    n = 1 << 18
    tone_bin = 3000
    x = np.exp(2j * np.pi * tone_bin * np.arange(n) / n)
    f_d = 100.0
    y = propagate_mono(x, scen(mono=[PathSpec(1.0, 0.0, f_d)]), cfg)
    spec = np.abs(np.fft.fft(y))
    peak = int(np.argmax(spec))
    bin_hz = cfg.bandwidth_hz / n
    expected = tone_bin + f_d / bin_hz
    assert abs(peak - expected) <= 1.0


def test_mono_linearity_and_superposition(desk_cfg):
    x = tx_frame(desk_cfg)
    p1 = PathSpec(0.5 + 0.1j, 3 * desk_cfg.t_s, 40.0)
    p2 = PathSpec(0.2 - 0.3j, 11.5 * desk_cfg.t_s, -95.0)
    y12 = propagate_mono(x, scen(mono=[p1, p2]), desk_cfg)
    y1 = propagate_mono(x, scen(mono=[p1]), desk_cfg)
    y2 = propagate_mono(x, scen(mono=[p2]), desk_cfg)
    rms = np.sqrt(np.mean(np.abs(y12 - y1 - y2) ** 2))
    assert rms <= 1e-9
    ya = propagate_mono(3.0 * x, scen(mono=[p1]), desk_cfg)
    np.testing.assert_allclose(ya, 3.0 * y1, atol=1e-9)


def test_mono_power_preserved_fractional_delay(desk_cfg):
    x = tx_frame(desk_cfg)
    s = scen(mono=[PathSpec(1.0, 15.5 * desk_cfg.t_s, 0.0)])
    y = propagate_mono(x, s, desk_cfg)
    pin = np.mean(np.abs(x) ** 2)
    pout = np.mean(np.abs(y[: len(x)]) ** 2)
    assert abs(pout - pin) / pin < 0.005


def test_mono_determinism_and_chunk_invariance(desk_cfg):
    x = np.concatenate([tx_frame(desk_cfg, g) for g in range(3)])
    s = scen(mono=[PathSpec(0.7, 9.3 * desk_cfg.t_s, 55.0)], noise=1e-9, seed=42)
    y1 = propagate_mono(x, s, desk_cfg)
    y2 = propagate_mono(x, s, desk_cfg)
    np.testing.assert_array_equal(y1, y2)
    chan = MonoChannel(s, desk_cfg)
    parts = [chan.process(c) for c in np.split(x, [100, 5000, 5101, 40000])]
    parts.append(chan.finish())
    y3 = np.concatenate(parts)
    np.testing.assert_array_equal(y1, y3)


def test_mono_delay_beyond_cp(desk_cfg):
    s = scen(mono=[PathSpec(1.0, (desk_cfg.cp_len + 5) * desk_cfg.t_s, 0.0)])
    x = tx_frame(desk_cfg)
    with pytest.warns(UserWarning, match="exceeds the CP"):
        propagate_mono(x, s, desk_cfg)
    with pytest.raises(DelayExceedsCp):
        propagate_mono(x, s, desk_cfg, strict=True)


# --- UE propagation ---------------------------------------------------------

def test_ue_ideal_clock_unit_los_is_identity(desk_cfg):
    x = tx_frame(desk_cfg)
    s = scen(ue=[PathSpec(1.0, 0.0, 0.0, PathKind.LOS)])
    y = propagate_ue(x, s, desk_cfg)
    assert np.sqrt(np.mean(np.abs(y - x) ** 2)) < 1e-9


def test_ue_cfo_only_phase_slope(desk_cfg):
    x = tx_frame(desk_cfg)
    cfo = 500.0
    s = scen(ue=[PathSpec(1.0, 0.0, 0.0, PathKind.LOS)],
             clocks=ClockImpairments(cfo_hz=cfo))
    y = propagate_ue(x, s, desk_cfg)
    ratio = y * np.conj(x)
    slope = np.angle(np.sum(ratio[1:] * np.conj(ratio[:-1])))
    assert slope == pytest.approx(2 * np.pi * cfo * desk_cfg.t_s, rel=1e-3)


def test_ue_sio_accumulates_one_sample_per_million(desk_cfg):
    rng = np.random.default_rng(0)
    n = 1_100_000
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    # keep it in-band: light smoothing to avoid Nyquist-edge content
    x = np.convolve(x, np.ones(4) / 4, mode="same")
    sio = 1e-6 * desk_cfg.t_s
    s = scen(ue=[PathSpec(1.0, 0.0, 0.0, PathKind.LOS)],
             clocks=ClockImpairments(sio_s=sio))
    y = propagate_ue(x, s, desk_cfg)
    # cross-correlate tail windows: rx should lag tx by ~1 sample there
    k0, w = 1_000_000, 4096
    lags = np.arange(-8, 9)
    xc = [np.abs(np.vdot(y[k0:k0 + w], np.roll(x, lag)[k0:k0 + w])) for lag in lags]
    assert lags[int(np.argmax(xc))] == 1


def test_ue_power_preserved_under_sio(desk_cfg):
    x = np.concatenate([tx_frame(desk_cfg, g) for g in range(3)])
    s = scen(ue=[PathSpec(1.0, 0.0, 0.0, PathKind.LOS)],
             clocks=ClockImpairments(sio_s=8e-5 * desk_cfg.t_s))
    y = propagate_ue(x, s, desk_cfg)
    pin = np.mean(np.abs(x) ** 2)
    pout = np.mean(np.abs(y[1000:len(x) - 1000]) ** 2)
    assert abs(pout - pin) / pin < 0.005


def test_ue_sio_limit(desk_cfg):
    s = scen(ue=[PathSpec(1.0, 0.0, 0.0, PathKind.LOS)],
             clocks=ClockImpairments(sio_s=2e-4 * desk_cfg.t_s))
    with pytest.raises(InvalidValue):
        propagate_ue(np.zeros(100, complex), s, desk_cfg)


def test_ue_chunk_invariance_with_sio_and_noise(desk_cfg):
    x = np.concatenate([tx_frame(desk_cfg, g) for g in range(2)])
    s = scen(ue=[PathSpec(0.9, 5.25 * desk_cfg.t_s, 10.0, PathKind.LOS)],
             clocks=ClockImpairments(cfo_hz=200.0, sio_s=1e-6 * desk_cfg.t_s),
             noise=1e-9, seed=3)
    ref = propagate_ue(x, s, desk_cfg)
    chan = UeChannel(s, desk_cfg)
    parts = [chan.process(c) for c in np.split(x, [1, 17, 1000, 23011])]
    parts.append(chan.finish())
    got = np.concatenate(parts)
    assert len(got) == len(ref)
    np.testing.assert_array_equal(ref, got)


# --- ground truth -----------------------------------------------------------

def test_ground_truth_passthrough_and_drift(desk_cfg):
    clocks = ClockImpairments(timing_offset_s=3 * desk_cfg.t_s,
                              sio_s=1e-6 * desk_cfg.t_s)
    paths = (PathSpec(1.0, 1e-7, 0.0, PathKind.LOS),)
    truth = ground_truth(scen(ue=paths, clocks=clocks), desk_cfg)
    assert truth.ue_paths == paths
    assert truth.clocks == clocks
    # 1 ppm over 1e6 samples accumulates one full sample (plus tau_d)
    assert truth.drift_samples(1_000_000) == pytest.approx(3 + 1.0)
    static = ground_truth(scen(ue=paths), desk_cfg)
    assert all(p.doppler_hz == 0 for p in static.ue_paths)
    assert static.drift_samples(12345) == 0.0


# --- scenario files ---------------------------------------------------------

SCENARIO_TEXT = """
scenario.seed = 7
scenario.noise_psd = 1e-18
scenario.cfo_hz = 500
scenario.sio_ppm = 1
scenario.timing_offset_ns = 40

[ue.path]
gain_db = 0
delay_ns = 0
doppler_hz = 0
kind = los

[ue.path]
gain_db = -20
phase_deg = 90
delay_ns = 300
doppler_hz = 0.5
kind = clutter

[mono.path]
gain_db = -60
delay_ns = 300
doppler_hz = 50
kind = target
"""


def test_scenario_file_parsing(desk_cfg):
    s = load_scenario(SCENARIO_TEXT, desk_cfg)
    assert s.seed == 7 and s.noise_psd == 1e-18
    assert s.clocks.cfo_hz == 500
    assert s.clocks.sio_s == pytest.approx(1e-6 * desk_cfg.t_s)
    assert s.clocks.timing_offset_s == pytest.approx(40e-9)
    assert len(s.ue_paths) == 2 and len(s.mono_paths) == 1
    clutter = s.ue_paths[1]
    assert clutter.kind is PathKind.CLUTTER
    assert abs(clutter.gain) == pytest.approx(0.1)
    assert np.angle(clutter.gain) == pytest.approx(np.pi / 2)
    assert s.mono_paths[0].delay_s == pytest.approx(300e-9)


def test_scenario_rejects_unknown_keys(desk_cfg):
    with pytest.raises(InvalidValue):
        load_scenario("scenario.bogus = 1\n", desk_cfg)
    with pytest.raises(InvalidValue):
        load_scenario("[ue.path]\nrange_km = 1\n", desk_cfg)
    with pytest.raises(InvalidValue):
        load_scenario("[other.block]\ngain_db = 1\n", desk_cfg)
