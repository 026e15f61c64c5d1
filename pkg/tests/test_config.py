import math

import pytest

from openisac.config import (CellKind, FramePlan, SystemConfig, dump_config,
                             frame_plan, load_config, parse_sos,
                             parse_structured)
from openisac.errors import (ConfigError, InvalidValue, InvariantViolation,
                             MissingKey, UnknownKey)

from conftest import table2_text


def test_reference_numerology_loads_and_derives():
    cfg = load_config(table2_text())
    assert cfg.num_subcarriers == 1024
    assert cfg.cp_len == 128
    assert cfg.symbols_per_frame == 100
    assert cfg.sensing_symbols == 100
    assert cfg.stride == 20
    assert cfg.stft_win == 256 and cfg.stft_hop == 64
    # derived, never stored
    assert cfg.delta_f == pytest.approx(50e6 / 1024)
    assert cfg.t_s == pytest.approx(2e-8)
    assert cfg.n_s == 1152
    assert cfg.t_o == pytest.approx(1152 * 2e-8)
    assert cfg.t_frame == pytest.approx(100 * 1152 * 2e-8)
    assert cfg.samples_per_frame == 115200
    assert cfg.prf_eff == pytest.approx(1.0 / (20 * 1152 * 2e-8))


def test_missing_required_key():
    text = table2_text()
    lines = [l for l in text.splitlines() if not l.startswith("waveform.bandwidth_hz")]
    with pytest.raises(MissingKey):
        load_config("\n".join(lines))


def test_unknown_key_rejected():
    with pytest.raises(UnknownKey):
        load_config(table2_text() + "waveform.bogus = 3\n")


def test_even_root_rejected():
    with pytest.raises(InvariantViolation, match="coprime"):
        load_config(table2_text(**{"frame.zc_root": 2}))


def test_small_doppler_grid_rejected():
    # mper < ms violates the periodogram sizing bound
    with pytest.raises(InvariantViolation, match="doppler"):
        load_config(table2_text(**{"waveform.n": 256, "sense.mper": 64, "sense.ms": 100,
                                   "sense.nper": 256}))


def test_sync_index_out_of_range():
    with pytest.raises(InvariantViolation):
        load_config(table2_text(**{"frame.sync_index": 100}))


def test_pilot_minimum():
    with pytest.raises(InvariantViolation, match="pilot"):
        SystemConfig(num_subcarriers=64, cp_len=8, symbols_per_frame=4,
                     bandwidth_hz=1e6, carrier_freq_hz=1e9,
                     pilot_indices=(0,), sensing_symbols=2, m_per=4,
                     stft_win=2, stft_hop=1)


def test_config_round_trip():
    cfg = load_config(table2_text())
    again = load_config(dump_config(cfg))
    assert again == cfg


def test_parse_structured_blocks_and_comments():
    flat, blocks = parse_structured(
        "a.b = 1  # trailing\n# whole line\n[path]\nx = 2\ny = z\n[path]\nx = 3\n")
    assert flat == {"a.b": "1"}
    assert blocks == [("path", {"x": "2", "y": "z"}), ("path", {"x": "3"})]


def test_parse_structured_bad_line():
    with pytest.raises(InvalidValue):
        parse_structured("just some words\n")


def test_frame_plan_fig3_layout(fig3_cfg):
    plan = frame_plan(fig3_cfg)
    counts = plan.kind_counts()
    # 8 pilots per non-sync symbol, full-band sync column
    assert counts[CellKind.SYNC] == 32
    assert counts[CellKind.PILOT] == 13 * 8
    assert counts[CellKind.DATA] == 13 * 24 == 312
    assert plan.data_cells_per_frame == 312
    assert sum(counts.values()) == 32 * 14


def test_frame_plan_cell_kinds(fig3_cfg):
    plan = frame_plan(fig3_cfg)
    for n in range(32):
        assert plan.cell_kind(n, 2) is CellKind.SYNC
    assert plan.cell_kind(4, 0) is CellKind.PILOT
    assert plan.cell_kind(5, 0) is CellKind.DATA
    # every cell maps to exactly one kind and the counts tile the grid
    seen = {}
    for n in range(32):
        for m in range(14):
            seen.setdefault(plan.cell_kind(n, m), 0)
            seen[plan.cell_kind(n, m)] += 1
    assert seen[CellKind.SYNC] == 32
    assert seen[CellKind.PILOT] == 104
    assert seen[CellKind.DATA] == 312


def test_data_cell_order_starts_at_first_data_cell(fig3_cfg):
    plan = frame_plan(fig3_cfg)
    first = next(iter(plan.data_cell_order()))
    assert first == (1, 0)  # smallest non-pilot n, smallest m != m_sync


def test_parse_sos():
    rows, gain = parse_sos("1 -2 1 1 -1.8 0.81\ngain 0.5\n")
    assert rows == ((1.0, -2.0, 1.0, -1.8, 0.81),)
    assert gain == 0.5
    with pytest.raises(InvalidValue):
        parse_sos("1 2 3 4\n")
    with pytest.raises(InvalidValue):
        parse_sos("1 -2 1 2 -1.8 0.81\n")  # a0 != 1


def test_default_mti_loaded():
    cfg = load_config(table2_text())
    assert len(cfg.mti_sos) == 2   # 4th-order high-pass as two sections
    assert cfg.mti_gain == 1.0


def test_invalid_value_reports_key():
    with pytest.raises(InvalidValue, match="waveform.n"):
        load_config(table2_text(**{"waveform.n": "many"}))


def test_errors_are_config_errors():
    for exc in (MissingKey("k"), UnknownKey("k"),
                InvariantViolation("x", "y"), InvalidValue("k", "m")):
        assert isinstance(exc, ConfigError)
