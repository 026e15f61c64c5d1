import numpy as np
import pytest

from openisac.config import SystemConfig


def table2_text(**overrides):
    """Config text at the reference numerology (50 MHz, N=1024)."""
    base = {
        "waveform.n": 1024,
        "waveform.cp": 128,
        "waveform.m": 100,
        "waveform.bandwidth_hz": 50e6,
        "waveform.fc_hz": 3.1e9,
        "frame.sync_index": 0,
        "frame.pilot_spacing": 8,
        "frame.zc_root": 29,
        "sense.ms": 100,
        "sense.stride": 20,
        "sense.mper": 128,
        "stft.win": 256,
        "stft.hop": 64,
    }
    base.update(overrides)
    return "\n".join(f"{k} = {v}" for k, v in base.items()) + "\n"


def desk_text(**overrides):
    """Small desk-scale config (10 MHz, N=256) for fast end-to-end runs."""
    base = {
        "waveform.n": 256,
        "waveform.cp": 32,
        "waveform.m": 20,
        "waveform.bandwidth_hz": 10e6,
        "waveform.fc_hz": 3.1e9,
        "frame.sync_index": 0,
        "frame.pilot_spacing": 8,
        "frame.zc_root": 29,
        "sense.ms": 32,
        "sense.stride": 4,
        "sense.mper": 64,
        "stft.win": 64,
        "stft.hop": 16,
    }
    base.update(overrides)
    return "\n".join(f"{k} = {v}" for k, v in base.items()) + "\n"


@pytest.fixture
def table2_cfg():
    from openisac.config import load_config
    return load_config(table2_text())


@pytest.fixture
def desk_cfg():
    from openisac.config import load_config
    return load_config(desk_text())


@pytest.fixture
def fig3_cfg():
    # small frame layout used in the layout examples: M=14, N=32,
    # sync at 2, pilots every 4
    return SystemConfig(
        num_subcarriers=32, cp_len=8, symbols_per_frame=14,
        bandwidth_hz=1e6, carrier_freq_hz=1e9,
        sync_symbol_index=2, pilot_indices=tuple(range(0, 32, 4)),
        zc_root=5, sensing_symbols=8, m_per=16, stft_win=8, stft_hop=4,
    )


def awgn(rng, shape, sigma2):
    """Circular complex Gaussian with total variance sigma2."""
    return rng.normal(0, np.sqrt(sigma2 / 2), shape) \
        + 1j * rng.normal(0, np.sqrt(sigma2 / 2), shape)
