import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from openisac.config import frame_plan
from openisac.errors import NotCoprime, Overflow, ZeroSeed
from openisac.phytx import (ResourceGrid, lfsr_stream, map_grid, ofdm_demodulate,
                            ofdm_modulate, qpsk_map, qpsk_unmap, read_data_cells,
                            scramble, sync_waveform, zc_generate)


# --- Zadoff-Chu ------------------------------------------------------------

@pytest.mark.parametrize("n,q", [(16, 3), (64, 7), (1024, 29), (63, 2)])
def test_zc_starts_at_one_and_unit_modulus(n, q):
    z = zc_generate(n, q).values
    assert z[0] == pytest.approx(1.0)
    assert np.abs(np.abs(z) - 1).max() < 1e-12


def test_zc_small_even_case_matches_formula():
    z = zc_generate(4, 1).values
    expected = np.array([1.0,
                         np.exp(-1j * np.pi / 4),
                         -1.0,
                         np.exp(-1j * np.pi / 4)])
    np.testing.assert_allclose(z, expected, atol=1e-12)


def test_zc_ideal_circular_autocorrelation():
    z = zc_generate(1024, 29).values
    # FFT-based circular autocorrelation oracle
    r = np.fft.ifft(np.abs(np.fft.fft(z)) ** 2)
    peak = abs(r[0])
    sidelobe = np.abs(r[1:]).max()
    assert peak == pytest.approx(1024.0)
    assert peak / max(sidelobe, 1e-300) >= 1e9
    assert sidelobe <= 1e-9 * 1024


def test_zc_rejects_non_coprime_root():
    with pytest.raises(NotCoprime):
        zc_generate(1024, 2)


# --- scrambler --------------------------------------------------------------

def test_scramble_reference_stream():
    # frozen from a bit-accurate register simulation of x^7 + x^4 + 1
    expected = [0, 1, 1, 0, 1, 1, 0, 0, 0, 0, 0, 1, 1, 0, 0, 1]
    got = scramble(np.zeros(16, dtype=np.uint8), 0b1011101)
    assert got.tolist() == expected


def test_scramble_zero_input_is_stream():
    s = lfsr_stream(0x55, 300)
    np.testing.assert_array_equal(scramble(np.zeros(300, np.uint8), 0x55), s)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=500),
       st.integers(1, 127))
def test_scramble_is_involution(bits, seed):
    b = np.array(bits, dtype=np.uint8)
    np.testing.assert_array_equal(scramble(scramble(b, seed), seed), b)


def test_scramble_zero_seed_rejected():
    with pytest.raises(ZeroSeed):
        scramble(np.zeros(8, np.uint8), 0)


# --- QPSK -------------------------------------------------------------------

def test_qpsk_roundtrip():
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, 512, dtype=np.uint8)
    np.testing.assert_array_equal(qpsk_unmap(qpsk_map(bits)), bits)
    assert np.abs(np.abs(qpsk_map(bits)) - 1).max() < 1e-12


# --- grid mapping -----------------------------------------------------------

def test_map_grid_power_and_reference_cells(fig3_cfg):
    plan = frame_plan(fig3_cfg)
    grid = map_grid(np.empty(0), fig3_cfg, plan, frame_index=0)
    amp = fig3_cfg.cell_amplitude
    # every cell is unit-modulus scaled by the power normalization
    assert np.mean(np.abs(grid.cells) ** 2) * fig3_cfg.num_subcarriers == \
        pytest.approx(fig3_cfg.tx_power, rel=0.01)
    zc = zc_generate(32, fig3_cfg.zc_root).values
    np.testing.assert_allclose(grid.cells[:, 2], amp * zc, atol=1e-12)
    for p in plan.pilots:
        np.testing.assert_allclose(grid.cells[p, :], amp * zc[p], atol=1e-12)


def test_map_grid_exact_fill_and_overflow(fig3_cfg):
    plan = frame_plan(fig3_cfg)
    payload = qpsk_map(np.random.default_rng(1).integers(0, 2, 2 * 312, dtype=np.uint8))
    grid = map_grid(payload, fig3_cfg, plan, frame_index=3)
    np.testing.assert_allclose(read_data_cells(grid, fig3_cfg, plan), payload, atol=1e-12)
    with pytest.raises(Overflow):
        map_grid(np.zeros(313, complex), fig3_cfg, plan, frame_index=0)


def test_single_symbol_lands_at_first_data_cell(fig3_cfg):
    plan = frame_plan(fig3_cfg)
    sym = np.array([(1 + 1j) / np.sqrt(2)])
    grid = map_grid(sym, fig3_cfg, plan, frame_index=0)
    assert grid.cells[1, 0] == pytest.approx(fig3_cfg.cell_amplitude * sym[0])


def test_map_grid_padding_is_deterministic(fig3_cfg):
    plan = frame_plan(fig3_cfg)
    g1 = map_grid(np.empty(0), fig3_cfg, plan, frame_index=5)
    g2 = map_grid(np.empty(0), fig3_cfg, plan, frame_index=5)
    g3 = map_grid(np.empty(0), fig3_cfg, plan, frame_index=6)
    np.testing.assert_array_equal(g1.cells, g2.cells)
    assert not np.array_equal(g1.cells, g3.cells)


def test_grid_power_statistical(table2_cfg):
    plan = frame_plan(table2_cfg)
    powers = []
    for gamma in range(10):
        grid = map_grid(np.empty(0), table2_cfg, plan, frame_index=gamma)
        powers.append(np.mean(np.abs(grid.cells) ** 2))
    target = table2_cfg.tx_power / table2_cfg.num_subcarriers
    assert 0.95 * target <= np.mean(powers) <= 1.05 * target


# --- OFDM modulation --------------------------------------------------------

def test_dc_only_grid_gives_constant_symbol(desk_cfg):
    n, n_cp = desk_cfg.num_subcarriers, desk_cfg.cp_len
    cells = np.zeros((n, desk_cfg.symbols_per_frame), complex)
    cells[0, 0] = 1.0
    samples = ofdm_modulate(ResourceGrid(cells, 0), desk_cfg)
    first = samples[:desk_cfg.n_s]
    np.testing.assert_allclose(first, np.full(n_cp + n, 1 / math.sqrt(n)), atol=1e-12)
    assert np.abs(samples[desk_cfg.n_s:]).max() == 0


def test_modulate_demodulate_roundtrip(desk_cfg):
    plan = frame_plan(desk_cfg)
    grid = map_grid(np.empty(0), desk_cfg, plan, frame_index=0)
    samples = ofdm_modulate(grid, desk_cfg)
    back = ofdm_demodulate(samples, desk_cfg)
    rms = np.sqrt(np.mean(np.abs(back - grid.cells) ** 2))
    assert rms <= 1e-12


def test_reference_frame_sample_count(table2_cfg):
    plan = frame_plan(table2_cfg)
    grid = map_grid(np.empty(0), table2_cfg, plan, frame_index=0)
    assert len(ofdm_modulate(grid, table2_cfg)) == 115200


def test_sync_waveform_length_and_cp(desk_cfg):
    w = sync_waveform(desk_cfg)
    assert len(w) == desk_cfg.n_s
    np.testing.assert_allclose(w[:desk_cfg.cp_len],
                               w[desk_cfg.num_subcarriers:], atol=1e-12)
