import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tddmimo.sysconfig import (ConfigError, SymbolRole, SystemConfig, build_frame_schedule,
                               fft_bin_indices, load_system_config, map_to_fft_bins,
                               pilot_subcarriers, subband_of, unmap_from_fft_bins,
                               validate_config)


def test_defaults_match_numerology(cfg):
    assert validate_config(cfg) is cfg
    assert (cfg.M, cfg.K, cfg.fft_size, cfg.used_subcarriers) == (128, 12, 2048, 1200)
    assert cfg.bandwidth == 20_000_000 and cfg.sample_rate == 30_720_000
    assert cfg.symbols_per_slot == 7
    assert cfg.cp_lengths == (160, 144, 144, 144, 144, 144, 144)
    assert cfg.slot_length == 15360
    assert cfg.symbol_rate == 14000
    assert cfg.num_subbands == 100


def test_minimal_system_is_valid():
    validate_config(SystemConfig(num_bs_antennas=1, num_users=1, used_subcarriers=12,
                                 fft_size=64, num_subsystems=1, num_subband_processors=1))


def test_k_must_divide_nsc():
    with pytest.raises(ConfigError, match="K does not divide N_sc"):
        validate_config(SystemConfig(num_users=7))


def test_all_violations_reported_together():
    with pytest.raises(ConfigError) as err:
        validate_config(SystemConfig(num_users=7, used_subcarriers=2102))
    msg = str(err.value)
    assert "K does not divide N_sc" in msg and "N_FFT" in msg


def test_users_cannot_exceed_antennas():
    with pytest.raises(ConfigError):
        validate_config(SystemConfig(num_bs_antennas=8, num_users=12, num_subsystems=1))


def test_odd_antennas_per_subsystem_rejected():
    with pytest.raises(ConfigError):
        validate_config(SystemConfig(num_bs_antennas=24, num_subsystems=8))


def test_unknown_modulation_rejected():
    with pytest.raises((ConfigError, ValueError)):
        validate_config(SystemConfig(per_user_modulation=("8PSK",) * 12))


def test_slot_pattern_needs_pilot_before_data():
    bad = (SymbolRole.UL_DATA, SymbolRole.UL_PILOT, SymbolRole.GUARD, SymbolRole.DL_PILOT,
           SymbolRole.DL_DATA, SymbolRole.GUARD, SymbolRole.GUARD)
    with pytest.raises(ConfigError):
        validate_config(SystemConfig(slot_pattern=bad))


def test_frame_schedule(cfg):
    fs = build_frame_schedule(cfg)
    assert len(fs.subframes) == 10
    assert fs.role(3, 1, 4) is SymbolRole.DL_PILOT
    assert all(fs.role(0, s, i) is SymbolRole.SYNC for s in range(2) for i in range(7))
    for sf in fs.subframes[1:]:
        for slot in sf.slots:
            assert slot.count(SymbolRole.UL_DATA) == 2
    assert fs.total_symbols == 140
    assert fs.data_symbols == 54
    assert fs.count(SymbolRole.GUARD) == 36
    assert len(fs.data_slots()) == 18


def test_pilot_subcarriers(cfg):
    p0 = pilot_subcarriers(0, cfg)
    assert p0[0] == 0 and p0[1] == 12 and p0[-1] == 1188 and p0.size == 100
    p5 = pilot_subcarriers(5, cfg)
    assert p5[0] == 5 and p5[1] == 17 and p5[-1] == 1193
    single = SystemConfig(num_users=1)
    assert np.array_equal(pilot_subcarriers(0, single), np.arange(1200))
    with pytest.raises(IndexError):
        pilot_subcarriers(12, cfg)


def test_pilots_partition_band_one_per_subband(cfg):
    all_p = np.concatenate([pilot_subcarriers(k, cfg) for k in range(cfg.K)])
    assert np.array_equal(np.sort(all_p), np.arange(cfg.used_subcarriers))
    for k in range(cfg.K):
        sb = subband_of(pilot_subcarriers(k, cfg), cfg)
        assert np.array_equal(sb, np.arange(cfg.num_subbands))


def test_subband_of(cfg):
    assert subband_of(0, cfg) == 0
    assert subband_of(23, cfg) == 1
    assert subband_of(1199, cfg) == 99
    with pytest.raises(IndexError):
        subband_of(1200, cfg)


def test_fft_mapping_convention(cfg):
    assert np.all(map_to_fft_bins(np.zeros(1200), cfg) == 0)
    x = np.zeros(1200, complex)
    x[600] = 1
    bins = map_to_fft_bins(x, cfg)
    assert bins[1] == 1 and np.count_nonzero(bins) == 1
    x = np.zeros(1200, complex)
    x[599] = 1
    assert map_to_fft_bins(x, cfg)[-1] == 1
    assert map_to_fft_bins(np.ones(1200), cfg)[0] == 0  # DC stays empty
    idx = fft_bin_indices(cfg)
    assert len(set(idx.tolist())) == 1200 and 0 not in idx
    with pytest.raises(ValueError):
        map_to_fft_bins(np.zeros(1199), cfg)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_fft_mapping_round_trip(seed):
    cfg = SystemConfig()
    x = np.random.default_rng(seed).standard_normal((2, 1200)) + 0j
    assert np.array_equal(unmap_from_fft_bins(map_to_fft_bins(x, cfg), cfg), x)


def test_config_is_immutable(cfg):
    with pytest.raises(Exception):
        cfg.num_users = 3
    assert cfg.replace(num_users=4).num_users == 4


def test_scenario_file(tmp_path):
    p = tmp_path / "s.ini"
    p.write_text("[system]\nnum_bs_antennas = 64\nnum_users = 8\nnum_subsystems = 4\n"
                 "per_user_modulation = QPSK QPSK 16QAM 16QAM 64QAM 64QAM BPSK 256QAM\n"
                 "mismatch_enabled = false\n")
    cfg = load_system_config(p)
    assert cfg.M == 64 and cfg.K == 8 and not cfg.mismatch_enabled
    assert cfg.per_user_modulation[2] == "16QAM"
    assert load_system_config(p, mismatch_enabled=True).mismatch_enabled  # overrides win
    bad = tmp_path / "bad.ini"
    bad.write_text("[system]\nnum_antennas = 3\n")
    with pytest.raises(ConfigError, match="unknown"):
        load_system_config(bad)
